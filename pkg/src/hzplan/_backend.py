"""Selects the compiled kernel module, falling back to pure Python.

The compiled extension is used whenever it imports. :func:`set_backend`
switches explicitly, which is how the test suite exercises both paths.
"""

from hzplan import _core_py

try:
    from hzplan import _core as _core_c
except ImportError:  # extension not built
    _core_c = None

_active = _core_c if _core_c is not None else _core_py


def available_backends():
    """Names of the kernel backends importable in this environment."""
    names = ["python"]
    if _core_c is not None:
        names.insert(0, "cython")
    return names


def get_backend(name=None):
    """Return a kernel module by name, or the active one when ``name`` is None."""
    if name is None:
        return _active
    if name == "python":
        return _core_py
    if name == "cython":
        if _core_c is None:
            raise ImportError("the compiled kernel extension is not built")
        return _core_c
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Make ``name`` ('cython' or 'python') the active backend; returns the previous name."""
    global _active
    previous = _active.NAME
    _active = get_backend(name)
    return previous


def backend_name():
    """Name of the active backend."""
    return _active.NAME
