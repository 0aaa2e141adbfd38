"""Graph-of-function reachability for piecewise-affine systems.

A mode ``x+ = A x + B u + f`` on domain ``(SU)^i`` has graph
``Psi^i = {(x, u, A x + B u + f) : (x, u) in (SU)^i}``; the union over modes
is the system graph ``Psi``. Intersecting a stage set with ``Psi`` and
projecting gives successor sets, and stacking stages gives the lifted set of
feasible trajectories used as the planning constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from hzplan.errors import DimensionMismatch, InvalidParameter
from hzplan.kernel import as_sparse, block_diag, hstack, prune
from hzplan.unions import UNION_KINDS, NotAZonotope
from hzplan.zonotope import (
    affine_map,
    cartesian_product,
    generalized_intersection,
)


class ZonotopeUnionInapplicable(NotAZonotope):
    """``union_kind='zonotope'`` was requested for non-zonotope mode graphs."""


@dataclass(frozen=True, eq=False)
class PWAMode:
    """One affine mode ``x+ = A x + B u + f`` valid on ``domain`` (over ``(x, u)``)."""

    A: sp.csc_matrix
    B: sp.csc_matrix
    f: np.ndarray
    domain: object

    def __post_init__(self):
        A = as_sparse(self.A)
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise DimensionMismatch("A must be square")
        B = as_sparse(self.B, (nx, 0) if self.B is None else None)
        if B.shape[0] != nx:
            raise DimensionMismatch("B must have as many rows as A")
        f = np.zeros(nx) if self.f is None else np.asarray(self.f, dtype=float).reshape(-1)
        if f.shape[0] != nx:
            raise DimensionMismatch("f must have length n_x")
        if self.domain.n != nx + B.shape[1]:
            raise DimensionMismatch(
                f"domain dimension {self.domain.n} != n_x + n_u = {nx + B.shape[1]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "f", f)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    def step(self, x, u=None):
        u = np.zeros(self.n_u) if u is None else np.asarray(u, dtype=float)
        return self.A @ np.asarray(x, dtype=float) + self.B @ u + self.f


@dataclass(frozen=True, eq=False)
class PWASystem:
    """Piecewise-affine system with state and input bounds.

    The union of the mode domains is expected to be separable as
    ``S x U`` (caller's obligation; not checked).
    """

    modes: tuple
    S_bar: object
    U_bar: object = None

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise InvalidParameter("a PWA system needs at least one mode")
        nx, nu = modes[0].n_x, modes[0].n_u
        for m in modes:
            if (m.n_x, m.n_u) != (nx, nu):
                raise DimensionMismatch("all modes must share n_x and n_u")
        if self.S_bar.n != nx:
            raise DimensionMismatch("S_bar must have dimension n_x")
        if nu and (self.U_bar is None or self.U_bar.n != nu):
            raise DimensionMismatch("U_bar must have dimension n_u")
        object.__setattr__(self, "modes", modes)

    @property
    def n_x(self):
        return self.modes[0].n_x

    @property
    def n_u(self):
        return self.modes[0].n_u


def mode_graph(mode):
    """Graph ``[I 0; 0 I; A B] (SU)^i + [0; 0; f]`` of one mode."""
    nx, nu = mode.n_x, mode.n_u
    R = sp.vstack([sp.identity(nx + nu, format="csc"), hstack([mode.A, mode.B], nx)], format="csc")
    s = np.concatenate([np.zeros(nx + nu), mode.f])
    return affine_map(R, mode.domain, s)


def system_graph(sys, union_kind="condensed", force_union=False):
    """Union of the mode graphs.

    A single-mode system returns its mode graph directly unless
    ``force_union`` is set (the degenerate union adds one pinned indicator).

    Raises:
        ZonotopeUnionInapplicable: ``union_kind='zonotope'`` with a mode graph
            that has binaries or constraints.
    """
    graphs = [mode_graph(m) for m in sys.modes]
    if len(graphs) == 1 and not force_union:
        return graphs[0]
    if union_kind not in UNION_KINDS:
        raise InvalidParameter(f"unknown union kind {union_kind!r}")
    if union_kind == "zonotope" and not all(g.is_zonotope for g in graphs):
        raise ZonotopeUnionInapplicable("mode graphs are not zonotopes")
    return UNION_KINDS[union_kind](graphs)


def _select(n_total, start, width):
    return sp.hstack([
        sp.csc_matrix((width, start)),
        sp.identity(width, format="csc"),
        sp.csc_matrix((width, n_total - start - width)),
    ], format="csc")


def constrain_graph(Psi, F_next):
    """State-constrained graph ``Psi ∩_[0 0 I] F_next``."""
    nx = F_next.n
    return generalized_intersection(Psi, F_next, _select(Psi.n, Psi.n - nx, nx))


def reach_step(X_k, Psi, U_bar=None):
    """Successor set ``[0 0 I] (Psi ∩_[I 0 0; 0 I 0] (X_k x U_bar))``.

    ``U_bar`` is omitted for autonomous systems.
    """
    Y = X_k if U_bar is None else cartesian_product(X_k, U_bar)
    nx = X_k.n
    if Psi.n != Y.n + nx:
        raise DimensionMismatch(f"graph dimension {Psi.n} != {Y.n + nx}")
    W = generalized_intersection(Psi, Y, _select(Psi.n, 0, Y.n))
    return affine_map(_select(Psi.n, Y.n, nx), W)


def lifted_step(Z_k, Psi_t, S_bar, U_bar=None):
    """Lifted recursion ``(Z_k x U_bar x S_bar) ∩_[0 ... 0 I] Psi_t``."""
    W = Z_k if U_bar is None else cartesian_product(Z_k, U_bar)
    W = cartesian_product(W, S_bar)
    width = Psi_t.n
    if width > W.n:
        raise DimensionMismatch("graph is wider than the lifted set")
    return generalized_intersection(W, Psi_t, _select(W.n, W.n - width, width))


@dataclass(frozen=True)
class StageLayout:
    """Index map of the lifted vector ``(x_0, u_0, x_1, ..., u_{N-1}, x_N)``."""

    n_x: int
    n_u: int
    N: int

    @property
    def size(self):
        return (self.N + 1) * self.n_x + self.N * self.n_u

    def x_slice(self, k):
        s = k * (self.n_x + self.n_u)
        return slice(s, s + self.n_x)

    def u_slice(self, k):
        s = k * (self.n_x + self.n_u) + self.n_x
        return slice(s, s + self.n_u)

    def states(self, z):
        z = np.asarray(z)
        return np.array([z[self.x_slice(k)] for k in range(self.N + 1)])

    def inputs(self, z):
        z = np.asarray(z)
        return np.array([z[self.u_slice(k)] for k in range(self.N)]).reshape(self.N, self.n_u)

    def role(self, i):
        """``(stage, 'x' | 'u', component)`` of lifted coordinate ``i``."""
        per = self.n_x + self.n_u
        k, r = divmod(i, per)
        if r < self.n_x:
            return k, "x", r
        return k, "u", r - self.n_x


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Quadratic tracking cost ``sum_k 1/2 |x_k - x_k^r|_Q^2 + 1/2 |u_k|_R^2``.

    ``x_ref`` lists the references for ``x_1 ... x_N``; ``Q_N`` weights the
    terminal stage.
    """

    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray
    x_ref: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R", "Q_N"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.size and M.shape[0] != M.shape[1]:
                raise DimensionMismatch(f"{name} must be square")
            sym = 0.5 * (M + M.T)
            if M.size and np.min(np.linalg.eigvalsh(sym)) < -1e-10 * max(1.0, np.abs(sym).max()):
                raise InvalidParameter(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, sym if M.size else M.reshape(0, 0))
        object.__setattr__(self, "x_ref", np.atleast_2d(np.asarray(self.x_ref, dtype=float)))


def assemble_cost(cost, layout):
    """Lifted ``P = blkdiag(Q, R, Q, ..., R, Q_N)`` and ``q`` with ``-Q x_k^r`` blocks."""
    N = layout.N
    if cost.x_ref.shape != (N, layout.n_x):
        raise DimensionMismatch(f"x_ref must have shape {(N, layout.n_x)}")
    blocks = []
    for k in range(N):
        blocks.append(sp.csc_matrix(cost.Q))
        if layout.n_u:
            blocks.append(sp.csc_matrix(cost.R))
    blocks.append(sp.csc_matrix(cost.Q_N))
    P = block_diag(blocks)
    q = np.zeros(layout.size)
    for k in range(1, N + 1):
        W = cost.Q_N if k == N else cost.Q
        q[layout.x_slice(k)] = -W @ cost.x_ref[k - 1]
    return P, q


@dataclass(frozen=True, eq=False)
class LiftedPlanningProblem:
    """Lifted set ``Z`` with the quadratic cost ``1/2 z^T P z + q^T z``."""

    Z: object
    P: sp.csc_matrix
    q: np.ndarray
    N: int
    layout: StageLayout
    graphs: tuple = field(default=(), repr=False)

    def objective(self, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.P @ z) + self.q @ z)


def build_problem(sys, X0, F, cost, union_kind="condensed", step_hook=None):
    """Assemble the lifted planning problem over horizon ``N = len(F)``.

    Args:
        sys: A :class:`PWASystem`, or a list of ``N`` systems for
            time-varying dynamics.
        X0: Initial state set.
        F: List of ``N`` state-constraint sets for ``x_1 ... x_N``; a
            ``None`` entry leaves that step unconstrained.
        cost: :class:`CostSpec`.
        union_kind: ``"sharp"``, ``"condensed"`` or ``"zonotope"``.
        step_hook: Optional ``hook(Z_k, k) -> Z_k`` applied after each
            lifted step (e.g. extra obstacle constraints on ``x_k``).

    Returns:
        LiftedPlanningProblem
    """
    F = list(F)
    N = len(F)
    if N < 1:
        raise InvalidParameter("horizon must be at least one step")
    systems = list(sys) if isinstance(sys, (list, tuple)) else [sys] * N
    if len(systems) != N:
        raise DimensionMismatch("need one system per step")
    graph_cache = {}
    constrained_cache = {}
    Z = X0
    graphs = []
    for k in range(N):
        s = systems[k]
        if id(s) not in graph_cache:
            graph_cache[id(s)] = system_graph(s, union_kind)
        key = (id(s), id(F[k]))
        if key not in constrained_cache:
            graph = graph_cache[id(s)]
            constrained_cache[key] = graph if F[k] is None else constrain_graph(graph, F[k])
        Psi_t = constrained_cache[key]
        graphs.append(Psi_t)
        Z = lifted_step(Z, Psi_t, s.S_bar, s.U_bar if s.n_u else None)
        if step_hook is not None:
            Z = step_hook(Z, k + 1)
    layout = StageLayout(systems[0].n_x, systems[0].n_u, N)
    P, q = assemble_cost(cost, layout)
    return LiftedPlanningProblem(Z, P, q, N, layout, tuple(graphs))
