"""Hybrid zonotopes and their closed-form set operations.

A hybrid zonotope in factor form is

    Z = { Gc xi_c + Gb xi_b + c :  Ac xi_c + Ab xi_b = b,
          xi_c in [lo, hi]^n_Gc,  xi_b in {lo, hi}^n_Gb }

with ``(lo, hi) = (-1, 1)`` in canonical form and ``(0, 1)`` in 01-form.
Constrained zonotopes have no binary factors; zonotopes additionally have
no constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from hzplan.errors import DimensionMismatch, FormMismatch, HZError, InvalidParameter, InvalidShape
from hzplan.kernel import as_sparse, block_diag, hstack, prune, vstack

CANONICAL = "canonical"
ZERO_ONE = "01"
FORMS = (CANONICAL, ZERO_ONE)

#: Binary-factor cap for the exact membership oracle.
MAX_ENUM_BINARIES = 20


class TooManyBinaries(HZError, ValueError):
    """The exact membership oracle was asked to enumerate too many binaries."""


def factor_bounds(form):
    """Return ``(lo, hi)`` of the factor box for a form."""
    if form == CANONICAL:
        return -1.0, 1.0
    if form == ZERO_ONE:
        return 0.0, 1.0
    raise InvalidParameter(f"unknown form {form!r}")


@dataclass(frozen=True, eq=False)
class SetComplexity:
    """Size and sparsity of a hybrid zonotope."""

    n: int
    n_Gc: int
    n_Gb: int
    n_C: int
    nnz_G: int
    nnz_A: int

    def as_tuple(self):
        return (self.n, self.n_Gc, self.n_Gb, self.n_C, self.nnz_G, self.nnz_A)

    def __eq__(self, other):
        if isinstance(other, SetComplexity):
            return self.as_tuple() == other.as_tuple()
        return self.as_tuple() == tuple(other)

    def __hash__(self):
        return hash(self.as_tuple())


@dataclass(frozen=True, eq=False)
class HybridZonotope:
    """Hybrid zonotope ``<Gc, Gb, c, Ac, Ab, b>`` with a form flag.

    Matrices are stored as pruned ``scipy.sparse.csc_matrix``; ``c`` and
    ``b`` as float arrays. Instances are immutable; every operation returns
    a new object.

    Args:
        Gc: ``n x n_Gc`` continuous generators.
        Gb: ``n x n_Gb`` binary generators (None for none).
        c: Center, length ``n``.
        Ac: ``n_C x n_Gc`` constraint matrix (None for no constraints).
        Ab: ``n_C x n_Gb`` constraint matrix.
        b: Constraint right-hand side, length ``n_C``.
        form: ``"canonical"`` or ``"01"``.
    """

    Gc: sp.csc_matrix
    Gb: sp.csc_matrix = None
    c: np.ndarray = None
    Ac: sp.csc_matrix = None
    Ab: sp.csc_matrix = None
    b: np.ndarray = None
    form: str = CANONICAL

    def __post_init__(self):
        if self.form not in FORMS:
            raise InvalidParameter(f"unknown form {self.form!r}")
        c = np.array(self.c, dtype=np.float64).reshape(-1)
        n = c.shape[0]
        Gc = as_sparse(self.Gc if self.Gc is not None else None, (n, 0) if self.Gc is None else None)
        if Gc.shape[0] != n:
            raise DimensionMismatch(f"Gc has {Gc.shape[0]} rows, center has {n}")
        n_gc = Gc.shape[1]
        Gb = as_sparse(self.Gb, (n, 0) if self.Gb is None else None)
        if Gb.shape[0] != n:
            raise DimensionMismatch(f"Gb has {Gb.shape[0]} rows, center has {n}")
        n_gb = Gb.shape[1]
        b = np.zeros(0) if self.b is None else np.array(self.b, dtype=np.float64).reshape(-1)
        m = b.shape[0]
        Ac = as_sparse(self.Ac, (m, n_gc) if self.Ac is None else None)
        Ab = as_sparse(self.Ab, (m, n_gb) if self.Ab is None else None)
        if Ac.shape != (m, n_gc):
            raise DimensionMismatch(f"Ac must be {(m, n_gc)}, got {Ac.shape}")
        if Ab.shape != (m, n_gb):
            raise DimensionMismatch(f"Ab must be {(m, n_gb)}, got {Ab.shape}")
        c.setflags(write=False)
        b.setflags(write=False)
        for name, val in (("Gc", Gc), ("Gb", Gb), ("c", c), ("Ac", Ac), ("Ab", Ab), ("b", b)):
            object.__setattr__(self, name, val)

    # -- sizes ---------------------------------------------------------------

    @property
    def n(self):
        return self.c.shape[0]

    @property
    def n_Gc(self):
        return self.Gc.shape[1]

    @property
    def n_Gb(self):
        return self.Gb.shape[1]

    @property
    def n_G(self):
        return self.n_Gc + self.n_Gb

    @property
    def n_C(self):
        return self.b.shape[0]

    @property
    def G(self):
        """``[Gc Gb]`` as CSC."""
        return hstack([self.Gc, self.Gb], self.n)

    @property
    def A(self):
        """``[Ac Ab]`` as CSC."""
        return hstack([self.Ac, self.Ab], self.n_C)

    @property
    def bounds(self):
        return factor_bounds(self.form)

    @property
    def is_zonotope(self):
        return self.n_Gb == 0 and self.n_C == 0

    @property
    def is_constrained_zonotope(self):
        return self.n_Gb == 0

    def point_from_factors(self, xi_c, xi_b=()):
        """Set-space point ``Gc xi_c + Gb xi_b + c``."""
        xi_c = np.asarray(xi_c, dtype=float).reshape(-1)
        xi_b = np.asarray(xi_b, dtype=float).reshape(-1)
        return self.Gc @ xi_c + self.Gb @ xi_b + self.c

    def constraint_residual(self, xi_c, xi_b=()):
        """``Ac xi_c + Ab xi_b - b``."""
        xi_c = np.asarray(xi_c, dtype=float).reshape(-1)
        xi_b = np.asarray(xi_b, dtype=float).reshape(-1)
        return self.Ac @ xi_c + self.Ab @ xi_b - self.b

    def __repr__(self):
        return (f"HybridZonotope(n={self.n}, n_Gc={self.n_Gc}, n_Gb={self.n_Gb}, "
                f"n_C={self.n_C}, form={self.form!r})")


# ---------------------------------------------------------------------------
# constructors


def zonotope(G, c, form=CANONICAL):
    """Zonotope ``{G xi + c : xi in box}``."""
    if not sp.issparse(G) and np.size(G) == 0:
        G = None
    return HybridZonotope(G, None, c, form=form)


def constrained_zonotope(G, c, A, b, form=CANONICAL):
    """Constrained zonotope ``{G xi + c : A xi = b, xi in box}``."""
    return HybridZonotope(G, None, c, A, None, b, form=form)


def point(x, form=CANONICAL):
    """Singleton set ``{x}`` (no generators)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return HybridZonotope(sp.csc_matrix((x.size, 0)), None, x, form=form)


def box(lo, hi, form=CANONICAL):
    """Axis-aligned box ``[lo, hi]`` as a zonotope with one generator per axis."""
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    if lo.shape != hi.shape or np.any(hi < lo):
        raise InvalidShape("box bounds must satisfy lo <= hi elementwise")
    if form == CANONICAL:
        return zonotope(sp.diags((hi - lo) / 2.0), (hi + lo) / 2.0, CANONICAL)
    return zonotope(sp.diags(hi - lo), lo, ZERO_ONE)


def regular_polygon_zonotope(r, n, center=None, form=CANONICAL):
    """Zonotope inner approximation ``O(r, n)`` of a radius-``r`` disc.

    ``n/2`` generators of length ``r sin(pi/n)`` at angles ``(2j+1) pi / n``
    give a regular ``n``-gon whose vertices lie on the circle.

    Raises:
        InvalidParameter: ``n`` odd or below 4, or ``r <= 0``.
    """
    if n % 2 or n < 4:
        raise InvalidParameter("regular polygon zonotope needs an even n >= 4")
    if r <= 0:
        raise InvalidParameter("radius must be positive")
    j = np.arange(n // 2)
    ang = (2 * j + 1) * np.pi / n
    G = r * np.sin(np.pi / n) * np.vstack([np.cos(ang), np.sin(ang)])
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    Z = zonotope(G, c, CANONICAL)
    return Z if form == CANONICAL else convert_form(Z, form)


# ---------------------------------------------------------------------------
# operations


def _check_form(Z1, Z2):
    if Z1.form != Z2.form:
        raise FormMismatch(f"forms differ: {Z1.form!r} vs {Z2.form!r}")


def affine_map(R, Z, s=None):
    """Affine image ``R Z + s``.

    Args:
        R: ``m x n`` matrix (dense or sparse).
        Z: Input set of dimension ``n``.
        s: Offset of length ``m`` (zero when omitted).
    """
    R = as_sparse(R)
    if R.shape[1] != Z.n:
        raise DimensionMismatch(f"R has {R.shape[1]} columns, set has dimension {Z.n}")
    s = np.zeros(R.shape[0]) if s is None else np.asarray(s, dtype=float).reshape(-1)
    if s.shape[0] != R.shape[0]:
        raise DimensionMismatch("offset length must equal the number of rows of R")
    return HybridZonotope(prune(R @ Z.Gc), prune(R @ Z.Gb), R @ Z.c + s,
                          Z.Ac, Z.Ab, Z.b, Z.form)


def minkowski_sum(Z1, Z2):
    """Minkowski sum ``Z1 + Z2``."""
    if Z1.n != Z2.n:
        raise DimensionMismatch(f"dimensions differ: {Z1.n} vs {Z2.n}")
    _check_form(Z1, Z2)
    n = Z1.n
    return HybridZonotope(
        hstack([Z1.Gc, Z2.Gc], n),
        hstack([Z1.Gb, Z2.Gb], n),
        Z1.c + Z2.c,
        block_diag([Z1.Ac, Z2.Ac]),
        block_diag([Z1.Ab, Z2.Ab]),
        np.concatenate([Z1.b, Z2.b]),
        Z1.form,
    )


def cartesian_product(Z1, Z2):
    """Cartesian product ``Z1 x Z2``."""
    _check_form(Z1, Z2)
    return HybridZonotope(
        block_diag([Z1.Gc, Z2.Gc]),
        block_diag([Z1.Gb, Z2.Gb]),
        np.concatenate([Z1.c, Z2.c]),
        block_diag([Z1.Ac, Z2.Ac]),
        block_diag([Z1.Ab, Z2.Ab]),
        np.concatenate([Z1.b, Z2.b]),
        Z1.form,
    )


def generalized_intersection(Z1, Z2, R=None):
    """Generalized intersection ``{x in Z1 : R x in Z2}``.

    The output lives in ``Z1``'s space; ``Z2.n`` equality rows are appended.
    ``R`` defaults to the identity.
    """
    _check_form(Z1, Z2)
    R = sp.identity(Z1.n, format="csc") if R is None else as_sparse(R)
    if R.shape != (Z2.n, Z1.n):
        raise DimensionMismatch(f"R must be {(Z2.n, Z1.n)}, got {R.shape}")
    m1, m2 = Z1.n_C, Z2.n_C
    zc1 = sp.csc_matrix((m1, Z2.n_Gc))
    zb1 = sp.csc_matrix((m1, Z2.n_Gb))
    Ac = vstack([
        hstack([Z1.Ac, zc1], m1),
        hstack([sp.csc_matrix((m2, Z1.n_Gc)), Z2.Ac], m2),
        hstack([prune(R @ Z1.Gc), -Z2.Gc], Z2.n),
    ], Z1.n_Gc + Z2.n_Gc)
    Ab = vstack([
        hstack([Z1.Ab, zb1], m1),
        hstack([sp.csc_matrix((m2, Z1.n_Gb)), Z2.Ab], m2),
        hstack([prune(R @ Z1.Gb), -Z2.Gb], Z2.n),
    ], Z1.n_Gb + Z2.n_Gb)
    b = np.concatenate([Z1.b, Z2.b, Z2.c - R @ Z1.c])
    return HybridZonotope(
        hstack([Z1.Gc, sp.csc_matrix((Z1.n, Z2.n_Gc))], Z1.n),
        hstack([Z1.Gb, sp.csc_matrix((Z1.n, Z2.n_Gb))], Z1.n),
        Z1.c, Ac, Ab, b, Z1.form,
    )


def convex_relaxation(Z):
    """Constrained zonotope obtained by relaxing binary factors to intervals."""
    if Z.n_Gb == 0:
        return Z
    return HybridZonotope(Z.G, None, Z.c, Z.A, None, Z.b, Z.form)


def convert_form(Z, target):
    """Re-express ``Z`` with factors over the ``target`` box.

    Uses the substitution ``xi = 2 xi01 - 1`` (canonical to 01) or its
    inverse; the represented point set is unchanged.
    """
    factor_bounds(target)
    if Z.form == target:
        return Z
    ones_c = np.ones(Z.n_Gc)
    ones_b = np.ones(Z.n_Gb)
    if target == ZERO_ONE:
        shift_c = Z.Gc @ ones_c + Z.Gb @ ones_b
        shift_b = Z.Ac @ ones_c + Z.Ab @ ones_b
        return HybridZonotope(2.0 * Z.Gc, 2.0 * Z.Gb, Z.c - shift_c,
                              2.0 * Z.Ac, 2.0 * Z.Ab, Z.b + shift_b, ZERO_ONE)
    shift_c = 0.5 * (Z.Gc @ ones_c + Z.Gb @ ones_b)
    shift_b = 0.5 * (Z.Ac @ ones_c + Z.Ab @ ones_b)
    return HybridZonotope(0.5 * Z.Gc, 0.5 * Z.Gb, Z.c + shift_c,
                          0.5 * Z.Ac, 0.5 * Z.Ab, Z.b - shift_b, CANONICAL)


def interval_hull(Z):
    """Axis-aligned outer bound ``(lower, upper)``, ignoring constraints."""
    G = Z.G
    lo, hi = Z.bounds
    pos = G.maximum(0).toarray() if G.nnz else np.zeros(G.shape)
    neg = G.minimum(0).toarray() if G.nnz else np.zeros(G.shape)
    lower = Z.c + lo * pos.sum(axis=1) + hi * neg.sum(axis=1)
    upper = Z.c + hi * pos.sum(axis=1) + lo * neg.sum(axis=1)
    return lower, upper


def complexity(Z):
    """Counts ``(n, n_Gc, n_Gb, n_C, nnz([Gc Gb]), nnz([Ac Ab]))``."""
    return SetComplexity(Z.n, Z.n_Gc, Z.n_Gb, Z.n_C,
                         int(prune(Z.G).nnz), int(prune(Z.A).nnz))


# ---------------------------------------------------------------------------
# exact membership


def _relaxed_feasible(G, A, rhs_x, rhs_b, free_lo, span, tol):
    """Is ``{y in [0, span] : G y = rhs_x, A y = rhs_b}`` non-empty?

    Solved as a feasibility LP; the returned point is re-checked against
    ``tol`` so solver tolerances never decide membership. Returns
    ``(feasible, y)``.
    """
    k = G.shape[1]
    top = np.vstack([G, A]) if A.shape[0] else G
    rhs = np.concatenate([rhs_x, rhs_b])
    if top.shape[0] == 0 or k == 0:
        return bool(np.all(np.abs(rhs) <= tol)), np.zeros(k)
    res = linprog(np.zeros(k), A_eq=top, b_eq=rhs, bounds=[(0.0, span)] * k, method="highs")
    if res.status != 0:
        return False, np.zeros(k)
    y = np.clip(res.x, 0.0, span)
    return bool(np.max(np.abs(top @ y - rhs)) <= tol), y


def contains_point(Z, x, tol=1e-6, max_binaries=MAX_ENUM_BINARIES):
    """Exact membership test by depth-first search over binary factors.

    Each node fixes a prefix of the binaries and checks feasibility of the
    remaining factors relaxed to their interval, pruning infeasible
    subtrees. Leaves are exact convex feasibility checks, so the answer is
    exact up to ``tol`` on the equality residuals.

    Raises:
        TooManyBinaries: More than ``max_binaries`` binary factors.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != Z.n:
        raise DimensionMismatch(f"point has length {x.shape[0]}, set has dimension {Z.n}")
    if Z.n_Gb > max_binaries:
        raise TooManyBinaries(f"{Z.n_Gb} binaries exceed the enumeration cap {max_binaries}")
    lo, hi = Z.bounds
    span = hi - lo
    G = Z.G.toarray()
    A = Z.A.toarray()
    n_c, n_b = Z.n_Gc, Z.n_Gb
    scale = 1.0 + max(np.max(np.abs(x), initial=0.0), np.max(np.abs(Z.b), initial=0.0))
    ftol = tol * scale

    def feasible(fixed):
        # fixed: values for the first len(fixed) binaries
        k = len(fixed)
        free = np.r_[np.arange(n_c), n_c + np.arange(k, n_b)].astype(int)
        fixed_idx = n_c + np.arange(k)
        fv = np.asarray(fixed, dtype=float)
        rx = x - Z.c - G[:, fixed_idx] @ fv - G[:, free].sum(axis=1) * lo
        rb = Z.b - A[:, fixed_idx] @ fv - A[:, free].sum(axis=1) * lo
        ok, y = _relaxed_feasible(G[:, free], A[:, free], rx, rb, lo, span, ftol)
        return ok, y

    stack = [[]]
    while stack:
        fixed = stack.pop()
        ok, y = feasible(fixed)
        if not ok:
            continue
        k = len(fixed)
        if k == n_b:
            return True
        # explore the branch nearer the relaxed value first
        yk = y[n_c]
        first = hi if yk >= 0.5 * span else lo
        second = lo if first == hi else hi
        stack.append(fixed + [second])
        stack.append(fixed + [first])
    return False


def is_witness(Z, xi_c, xi_b, x, tol=1e-9):
    """Check that ``(xi_c, xi_b)`` is an admissible factor pair mapping to ``x``."""
    lo, hi = Z.bounds
    xi_c = np.asarray(xi_c, dtype=float).reshape(-1)
    xi_b = np.asarray(xi_b, dtype=float).reshape(-1)
    if xi_c.shape[0] != Z.n_Gc or xi_b.shape[0] != Z.n_Gb:
        return False
    if np.any(xi_c < lo - tol) or np.any(xi_c > hi + tol):
        return False
    if not np.all(np.isin(xi_b, (lo, hi))):
        return False
    if Z.n_C and np.max(np.abs(Z.constraint_residual(xi_c, xi_b))) > tol:
        return False
    return bool(np.max(np.abs(Z.point_from_factors(xi_c, xi_b) - np.asarray(x)), initial=0.0) <= tol)
