"""Independent feasibility checks for solver outputs.

Nothing here calls the solver or reuses its residual code: every check is a
direct evaluation of the defining equalities and inequalities.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class FactorCheck:
    affine_residual: float
    box_ok: bool
    integral_ok: bool
    split_gap: float

    def ok(self, tol=1e-3, eps_p=1e-3):
        return (self.affine_residual <= tol and self.box_ok and self.integral_ok
                and self.split_gap <= eps_p * (1 + 1e-9))


def check_factors(Z, xi, zeta):
    """Check ``A xi = b``, ``zeta`` in the mixed-integer box and ``|xi - zeta|``.

    Args:
        Z: The hybrid zonotope.
        xi: Affine-feasible iterate.
        zeta: Box/integer-feasible iterate.
    """
    lo, hi = Z.bounds
    A = Z.A.toarray()
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    res = float(np.max(np.abs(A @ xi - Z.b), initial=0.0))
    zc, zb = zeta[: Z.n_Gc], zeta[Z.n_Gc:]
    box_ok = bool(np.all(zc >= lo) and np.all(zc <= hi))
    integral = bool(np.all((zb == lo) | (zb == hi)))
    gap = float(np.max(np.abs(xi - zeta), initial=0.0))
    return FactorCheck(res, box_ok, integral, gap)


def dynamics_residual(states, inputs, step):
    """Largest ``|x_{k+1} - step(x_k, u_k)|_inf`` along a trajectory."""
    worst = 0.0
    for k in range(len(states) - 1):
        u = inputs[k] if len(inputs) else None
        worst = max(worst, float(np.max(np.abs(states[k + 1] - step(states[k], u)))))
    return worst


def in_boxes(p, boxes, tol):
    """Is point ``p`` inside at least one ``(lo, hi)`` box, up to ``tol``?"""
    p = np.asarray(p, dtype=float)
    return any(np.all(p >= lo - tol) and np.all(p <= hi + tol) for lo, hi in boxes)


def in_polygon(p, normals, offsets, tol):
    """Halfspace test ``normals @ p <= offsets + tol``."""
    return bool(np.all(np.asarray(normals) @ np.asarray(p) <= np.asarray(offsets) + tol))


def polygon_halfspaces(r, n, center=(0.0, 0.0)):
    """Halfspaces of the regular ``n``-gon with vertices on the radius-``r`` circle.

    Vertex ``j`` sits at angle ``2 pi j / n + pi / 2``; derived here from
    vertices directly so it is independent of the generator construction.
    """
    ang = 2 * np.pi * np.arange(n) / n + np.pi / 2
    V = r * np.column_stack([np.cos(ang), np.sin(ang)]) + np.asarray(center)
    normals, offsets = [], []
    for j in range(n):
        a, b = V[j], V[(j + 1) % n]
        e = b - a
        nrm = np.array([e[1], -e[0]])
        if nrm @ (np.asarray(center) - a) > 0:
            nrm = -nrm
        nrm /= np.linalg.norm(nrm)
        normals.append(nrm)
        offsets.append(nrm @ a)
    return np.array(normals), np.array(offsets)
