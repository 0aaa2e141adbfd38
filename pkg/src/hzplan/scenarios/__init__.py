"""Desk-scale problem generators for the command-line experiments."""
