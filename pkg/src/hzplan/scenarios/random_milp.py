"""Random non-empty hybrid zonotopes with a linear objective."""

import numpy as np

from hzplan.kernel import RngStream
from hzplan.zonotope import CANONICAL, HybridZonotope


def _sparse_uniform(rng, rows, cols, density):
    vals = rng.uniform(-1.0, 1.0, (rows, cols))
    mask = rng.gen.random((rows, cols)) < density
    return np.where(mask, vals, 0.0)


def random_instance(rng, n=20, n_Gc=40, n_Gb=10, n_C=10, density=0.3):
    """One random MILP instance over a canonical-form hybrid zonotope.

    Generator and constraint entries are nonzero with probability
    ``density`` and drawn from ``U(-1, 1)``, as are ``c`` and ``q``.
    Feasibility is forced by drawing ``xi*`` from the mixed-integer box and
    setting ``b = A xi*``.

    Returns:
        ``(Z, q, xi_star)``; the objective is ``q^T z`` (``P = 0``).
    """
    if isinstance(rng, (int, np.integer)):
        rng = RngStream(int(rng))
    Gc = _sparse_uniform(rng, n, n_Gc, density)
    Gb = _sparse_uniform(rng, n, n_Gb, density)
    Ac = _sparse_uniform(rng, n_C, n_Gc, density)
    Ab = _sparse_uniform(rng, n_C, n_Gb, density)
    c = rng.uniform(-1.0, 1.0, n)
    q = rng.uniform(-1.0, 1.0, n)
    xi_c = rng.uniform(-1.0, 1.0, n_Gc)
    xi_b = np.where(rng.gen.random(n_Gb) < 0.5, -1.0, 1.0)
    b = Ac @ xi_c + Ab @ xi_b
    Z = HybridZonotope(Gc, Gb, c, Ac, Ab, b, CANONICAL)
    return Z, q, np.concatenate([xi_c, xi_b])


def instances(count, seed, **sizes):
    """``count`` instances from one seeded stream, in order."""
    rng = RngStream(seed)
    return [random_instance(rng, **sizes) for _ in range(count)]
