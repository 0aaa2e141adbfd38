"""Autonomous two-mode system with one stable equilibrium per half plane.

Mode 1 (``x1 <= 0``) and mode 2 (``x1 >= 0``) are mirror images of each
other under ``x1 -> -x1``; the mode domains are built the same way, so the
``x1 >= 0`` half-box is the reflection of the ``x1 <= 0`` one.
"""

import numpy as np

from hzplan.reach import CostSpec, PWAMode, PWASystem, build_problem, reach_step, system_graph
from hzplan.zonotope import ZERO_ONE, affine_map, box, convert_form, zonotope

A1 = np.array([[0.75, 0.25], [-0.25, 0.75]])
F1 = np.array([-0.25, -0.25])
A2 = np.array([[0.75, -0.25], [0.25, 0.75]])
F2 = np.array([0.25, -0.25])
MIRROR = np.diag([-1.0, 1.0])

STATE_LO = np.array([-2.0, -1.0])
STATE_HI = np.array([2.0, 3.0])


def pwa_map(x):
    """Exact one-step map of the system."""
    x = np.asarray(x, dtype=float)
    if x[0] <= 0:
        return A1 @ x + F1
    return A2 @ x + F2


def state_bounds():
    """``[-2, 2] x [-1, 3]`` in 01-form (used for both S_bar and F)."""
    return box(STATE_LO, STATE_HI, ZERO_ONE)


def mode_domains():
    """The ``x1 <= 0`` half-box and its mirror image, as 01-form zonotopes."""
    left = box(STATE_LO, np.array([0.0, STATE_HI[1]]), ZERO_ONE)
    return left, affine_map(MIRROR, left)


def system():
    left, right = mode_domains()
    modes = (PWAMode(A1, None, F1, left), PWAMode(A2, None, F2, right))
    return PWASystem(modes, state_bounds())


def initial_set(form=ZERO_ONE):
    X0 = zonotope(np.array([[0.25, -0.19], [0.19, 0.25]]), np.array([-1.31, 2.55]))
    return convert_form(X0, form)


def reachable_sets(steps, union_kind="condensed"):
    """``[X_0, X_1, ..., X_steps]`` without state constraints."""
    sys = system()
    Psi = system_graph(sys, union_kind)
    sets = [initial_set()]
    for _ in range(steps):
        sets.append(reach_step(sets[-1], Psi))
    return sets


def lifted_problem(steps, union_kind="condensed", constrained=True):
    """Lifted problem over ``steps`` stages; ``F_k`` is the state box when ``constrained``."""
    sys = system()
    F = [state_bounds() if constrained else None] * steps
    cost = CostSpec(np.eye(2), np.zeros((0, 0)), np.eye(2), np.zeros((steps, 2)))
    return build_problem(sys, initial_set(), F, cost, union_kind)
