"""ADMM-FP: an ADMM feasibility-pump heuristic for MIQPs over hybrid zonotopes.

Minimizing ``1/2 z^T P z + q^T z`` over ``z in Z`` is posed in factor space,

    min 1/2 xi^T P~ xi + q~^T xi   s.t.  A xi = b,  xi in B_MI,

with ``P~ = G^T P G`` and ``q~ = G^T (P c + q)``. ADMM splits ``xi`` (affine
feasible) from ``zeta`` (projected onto the mixed-integer box). Phase 1 keeps
the objective; phase 2 drops it and alternates projections. Stalls and
cycles are broken by randomly flipping binaries.

The iteration loop itself lives in the kernel backend (compiled or pure
Python); the step functions here are the reference definitions used by
tests and by callers that want to drive the iteration manually.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from hzplan import _backend
from hzplan.errors import DimensionMismatch, DomainError, InvalidParameter, StructurallySingular
from hzplan.kernel import factorize_sym, prune, remove_redundant_rows
from hzplan.zonotope import convex_relaxation, factor_bounds

PERTURB = "perturb"
RESTART = "restart"


class Status(str, Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    TIME_LIMIT = "TimeLimit"


_STATUS = (Status.CONVERGED, Status.ITER_LIMIT, Status.TIME_LIMIT)


@dataclass(frozen=True)
class SolverParams:
    """ADMM-FP parameters; defaults are the reference values.

    Attributes:
        rho: ADMM penalty.
        eps_p: Primal residual tolerance ``|xi - zeta|_inf``.
        k_restart: Non-improving iterations before a restart.
        k_ph1, k_ph2: Iteration budgets of phase 1 and phase 2.
        l_buf: Cycle-detection buffer length.
        eps_buf: Residual tolerance for declaring a cycle.
        eps_d: Dual residual tolerance of the convex solver.
        t_max: Wall-clock limit in seconds for one solve (relaxation included).
        seed: Seed of the flip random stream.
        qp_max_iter: Iteration cap of the convex solver (None: ``k_ph1 + k_ph2``).
        backend: Kernel backend name, or None for the active one.
    """

    rho: float = 10.0
    eps_p: float = 1e-3
    k_restart: int = 5000
    k_ph1: int = 10000
    k_ph2: int = 90000
    l_buf: int = 20
    eps_buf: float = 1e-3
    eps_d: float = 0.01
    t_max: float = math.inf
    seed: int = 0
    qp_max_iter: int | None = None
    backend: str | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidParameter("rho must be positive")
        if not self.eps_p > 0:
            raise InvalidParameter("eps_p must be positive")
        if not self.eps_d > 0:
            raise InvalidParameter("eps_d must be positive")
        if self.eps_buf < 0:
            raise InvalidParameter("eps_buf must be non-negative")
        for name in ("k_restart", "k_ph1", "k_ph2", "l_buf"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be non-negative")
        if not self.t_max > 0:
            raise InvalidParameter("t_max must be positive")

    @property
    def qp_iterations(self):
        return self.k_ph1 + self.k_ph2 if self.qp_max_iter is None else self.qp_max_iter

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SolverParams(**values)


@dataclass(frozen=True, eq=False)
class CondensedObjective:
    """Factor-space objective ``1/2 xi^T P xi + q^T xi + const``."""

    P: sp.csc_matrix
    q: np.ndarray
    const: float = 0.0


@dataclass
class IterateState:
    """ADMM iterate; ``zeta`` always lies in the mixed-integer box."""

    xi: np.ndarray
    zeta: np.ndarray
    u: np.ndarray
    r_p: float = math.inf
    k: int = 0
    phase: int = 1


class CycleBuffer:
    """Circular buffer of recent primal residuals."""

    def __init__(self, capacity=20):
        self.capacity = int(capacity)
        self.values = deque(maxlen=max(self.capacity, 1))

    def __len__(self):
        return len(self.values) if self.capacity else 0

    def clear(self):
        self.values.clear()

    def push(self, r_p):
        if self.capacity:
            self.values.append(float(r_p))


@dataclass
class SolverResult:
    """Outcome of :func:`admm_fp` or :func:`solve_convex_qp`.

    ``z`` is the set-space point ``G zeta + c``; ``objective`` is evaluated
    there. ``iterations`` counts heuristic (or QP) iterations only;
    ``qp_iterations`` counts the internal convex warm-start iterations.
    """

    z: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    u: np.ndarray
    r_p: float
    status: Status
    iterations: int
    phase1_iterations: int
    wall_time: float
    objective: float
    r_d: float = math.nan
    phase: int = 1
    n_perturb: int = 0
    n_restart: int = 0
    qp_iterations: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == Status.CONVERGED


# ---------------------------------------------------------------------------
# building blocks


def condense_objective(Z, P=None, q=None):
    """Map a set-space quadratic objective to factor space.

    ``P~ = G^T P G`` and ``q~ = G^T (P c + q)``; the dropped constant is
    ``1/2 c^T P c + q^T c``.
    """
    n = Z.n
    P = sp.csc_matrix((n, n)) if P is None else sp.csc_matrix(P, dtype=float)
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float).reshape(-1)
    if P.shape != (n, n) or q.shape != (n,):
        raise DimensionMismatch(f"objective must match set dimension {n}")
    G = Z.G
    Pt = prune(G.T @ P @ G)
    Pt = prune(0.5 * (Pt + Pt.T))
    Pc = P @ Z.c
    qt = G.T @ (Pc + q)
    const = float(0.5 * Z.c @ Pc + q @ Z.c)
    return CondensedObjective(Pt, np.asarray(qt).reshape(-1), const)


def kkt_matrix(Pt, A, rho):
    """``[[P~ + rho I, A^T], [A, 0]]`` as CSC."""
    n = Pt.shape[0]
    top = prune(Pt + rho * sp.identity(n))
    if A.shape[0] == 0:
        return top
    return prune(sp.bmat([[top, A.T], [A, None]], format="csc"))


def build_kkt(Pt, A, rho, backend=None):
    """Factor the KKT matrix; raises StructurallySingular on dependent rows of ``A``."""
    A = sp.csc_matrix(A)
    return factorize_sym(kkt_matrix(Pt, A, rho), n_primal=Pt.shape[0], backend=backend)


def project_mibox(v, n_Gc, n_Gb, form):
    """Clamp continuous entries and snap binaries to the nearer endpoint (ties up)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != n_Gc + n_Gb:
        raise DimensionMismatch("vector length must equal n_Gc + n_Gb")
    lo, hi = factor_bounds(form)
    out = np.empty_like(v)
    out[:n_Gc] = np.clip(v[:n_Gc], lo, hi)
    out[n_Gc:] = np.where(v[n_Gc:] >= 0.5 * (lo + hi), hi, lo)
    return out


def binflip(xi, zeta, mode, rng, n_Gc, form):
    """Randomly move binary entries of ``zeta`` to the opposite endpoint.

    The fractionality ``f_j = |xi_j - zeta_j| / (hi - lo)`` sets the odds:
    PERTURB flips with probability ``f_j``; RESTART flips when
    ``f_j + max(r, 0) > 0.5`` with ``r ~ U(-0.3, 0.7)``.

    Args:
        rng: :class:`hzplan.kernel.RngStream` or numpy Generator.
    """
    lo, hi = factor_bounds(form)
    gen = getattr(rng, "gen", rng)
    zeta = np.array(zeta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nb = zeta.shape[0] - n_Gc
    if nb <= 0:
        return zeta
    f = np.abs(xi[n_Gc:] - zeta[n_Gc:]) / (hi - lo)
    r = gen.random(nb)
    if mode == PERTURB:
        flip = r < f
    elif mode == RESTART:
        flip = f + np.maximum(r - 0.3, 0.0) > 0.5
    else:
        raise InvalidParameter(f"unknown flip mode {mode!r}")
    zb = zeta[n_Gc:]
    zeta[n_Gc:] = np.where(flip, np.where(zb == hi, lo, hi), zb)
    return zeta


def detect_cycle(buf, r_p, eps_buf):
    """True iff a stored residual is within ``eps_buf`` of ``r_p``; then push ``r_p``."""
    hit = any(abs(v - r_p) <= eps_buf for v in buf.values) if buf.capacity else False
    buf.push(r_p)
    return hit


def _update(state, xi_new, n_Gc, form):
    zeta = project_mibox(xi_new + state.u, n_Gc, len(xi_new) - n_Gc, form)
    u = state.u + (xi_new - zeta)
    r_p = float(np.max(np.abs(xi_new - zeta))) if len(zeta) else 0.0
    return IterateState(xi_new, zeta, u, r_p, state.k + 1, state.phase)


def phase1_step(state, kkt, qt, b, rho, n_Gc, form):
    """One objective-aware iteration: KKT solve, mixed-integer projection, dual update."""
    n = len(state.xi)
    rhs = np.concatenate([-np.asarray(qt) + rho * (state.zeta - state.u), np.asarray(b)])
    xi = kkt.solve(rhs)[:n]
    return _update(state, xi, n_Gc, form)


def phase2_step(state, aat, A, b, n_Gc, form):
    """One feasibility iteration: ``xi = v - A^T (A A^T)^{-1} (A v - b)`` with ``v = zeta - u``."""
    v = state.zeta - state.u
    if A.shape[0]:
        v = v - A.T @ aat.solve(A @ v - np.asarray(b))
    return _update(state, v, n_Gc, form)


def project_affine(v, aat, A, b):
    """Euclidean projection of ``v`` onto ``{xi : A xi = b}``."""
    v = np.asarray(v, dtype=float)
    if A.shape[0] == 0:
        return v.copy()
    return v - A.T @ aat.solve(A @ v - np.asarray(b))


# ---------------------------------------------------------------------------
# drivers


class _Prepared:
    """Factor-space data shared by the convex and mixed-integer loops."""

    def __init__(self, Z, P, q, rho, backend):
        self.Z = Z
        self.obj = condense_objective(Z, P, q)
        A = sp.csc_matrix(Z.A)
        b = np.asarray(Z.b, dtype=float)
        self.rows_removed = 0
        try:
            self.kkt = build_kkt(self.obj.P, A, rho, backend)
        except StructurallySingular:
            m = A.shape[0]
            A, b = remove_redundant_rows(A, b)
            self.rows_removed = m - A.shape[0]
            self.kkt = build_kkt(self.obj.P, A, rho, backend)
        self.A = A
        self.b = b
        self.A_csr = sp.csr_matrix(A)
        self.A_csr.sort_indices()
        self._aat = None
        self.backend = backend

    @property
    def aat(self):
        if self._aat is None and self.A.shape[0]:
            self._aat = factorize_sym(prune(self.A @ self.A.T), backend=self.backend)
        return self._aat


def _indices(a):
    a = sp.csr_matrix(a)
    a.indptr = a.indptr.astype(np.int64)
    a.indices = a.indices.astype(np.int64)
    return a


def _run(prep, params, convex, xi, zeta, u, deadline, bitgen=None, max_iter=None):
    Z = prep.Z
    lo, hi = Z.bounds
    be = _backend.get_backend(params.backend)
    n_c = Z.n_G if convex else Z.n_Gc
    n_b = 0 if convex else Z.n_Gb
    out = be.admm_run(
        bool(convex), int(n_c), int(n_b), float(lo), float(hi),
        prep.kkt, prep.aat if not convex else None, _indices(prep.A_csr),
        np.ascontiguousarray(prep.obj.q), np.ascontiguousarray(prep.b), float(params.rho),
        float(params.eps_p), float(params.eps_d), int(params.k_restart),
        int(max_iter if convex else params.k_ph1), int(0 if convex else params.k_ph2),
        int(params.l_buf), float(params.eps_buf), float(deadline),
        xi, zeta, u, bitgen)
    status, iters, ph1, phase, rp, rd, npert, nrest = out
    return _STATUS[status], int(iters), int(ph1), int(phase), float(rp), float(rd), int(npert), int(nrest)


def _result(Z, P, q, xi, zeta, u, run, t0, qp_iters=0, message=""):
    status, iters, ph1, phase, rp, rd, npert, nrest = run
    z = Z.G @ zeta + Z.c
    n = Z.n
    Pm = sp.csc_matrix((n, n)) if P is None else sp.csc_matrix(P)
    qv = np.zeros(n) if q is None else np.asarray(q, dtype=float)
    objective = float(0.5 * z @ (Pm @ z) + qv @ z)
    return SolverResult(
        z=z, xi=xi, zeta=zeta, u=u, r_p=rp, status=status, iterations=iters,
        phase1_iterations=ph1, wall_time=time.monotonic() - t0, objective=objective,
        r_d=rd, phase=phase, n_perturb=npert, n_restart=nrest, qp_iterations=qp_iters,
        message=message)


def _box_center(Z):
    lo, hi = Z.bounds
    return np.full(Z.n_G, 0.5 * (lo + hi))


def solve_convex_qp(Z, P=None, q=None, params=None, init=None):
    """ADMM for the convex QP over a constrained zonotope.

    Stops when ``r_p <= eps_p`` and ``r_d = rho |zeta_k+1 - zeta_k|_inf <= eps_d``.

    Args:
        Z: Constrained zonotope (no binary factors).
        init: Optional ``(zeta, u)`` starting point.

    Returns:
        SolverResult with status IterLimit/TimeLimit on non-convergence.
    """
    params = params or SolverParams()
    if Z.n_Gb:
        raise DomainError("solve_convex_qp needs a set without binary factors")
    t0 = time.monotonic()
    prep = _Prepared(Z, P, q, params.rho, params.backend)
    return _convex(prep, P, q, params, init, t0, t0 + params.t_max)


def _convex(prep, P, q, params, init, t0, deadline):
    Z = prep.Z
    if init is None:
        zeta = _box_center(Z)
        u = np.zeros(Z.n_G)
    else:
        zeta = np.array(init[0], dtype=float)
        u = np.array(init[1], dtype=float)
    xi = zeta.copy()
    run = _run(prep, params, True, xi, zeta, u, deadline, max_iter=params.qp_iterations)
    return _result(Z, P, q, xi, zeta, u, run, t0)


def admm_fp(Z, P=None, q=None, params=None, init=None):
    """ADMM-FP heuristic for ``min 1/2 z^T P z + q^T z`` over a hybrid zonotope.

    Without ``init`` the convex relaxation is solved first (same ``rho``) and
    its final ``(zeta, u)`` seed the heuristic.

    Args:
        Z: Hybrid zonotope.
        P, q: Set-space objective (None for a pure feasibility problem).
        params: :class:`SolverParams`.
        init: Optional warm start ``(zeta*, u*)``; the heuristic starts from
            ``xi_0 = zeta_0 = zeta*``, ``u_0 = u*``.

    Returns:
        SolverResult
    """
    params = params or SolverParams()
    t0 = time.monotonic()
    deadline = t0 + params.t_max
    prep = _Prepared(Z, P, q, params.rho, params.backend)
    qp_iters = 0
    if init is None:
        Zr = convex_relaxation(Z)
        prep_r = prep if Zr is Z else _relaxed_view(prep, Zr)
        qp = _convex(prep_r, P, q, params, None, t0, deadline)
        qp_iters = qp.iterations
        if qp.status != Status.CONVERGED:
            msg = ("convex relaxation hit the time limit" if qp.status == Status.TIME_LIMIT
                   else "convex relaxation did not converge (possibly infeasible)")
            res = _result(Z, P, q, qp.xi, project_mibox(qp.zeta, Z.n_Gc, Z.n_Gb, Z.form), qp.u,
                          (qp.status, 0, 0, 1, qp.r_p, qp.r_d, 0, 0), t0, qp_iters, msg)
            return res
        zeta0, u0 = qp.zeta, qp.u
    else:
        zeta0 = np.array(init[0], dtype=float)
        u0 = np.array(init[1], dtype=float)
        if zeta0.shape != (Z.n_G,) or u0.shape != (Z.n_G,):
            raise DimensionMismatch(f"warm start must have length {Z.n_G}")
    xi = zeta0.copy()
    zeta = zeta0.copy()
    u = u0.copy()
    bitgen = np.random.PCG64(params.seed)
    run = _run(prep, params, False, xi, zeta, u, deadline, bitgen=bitgen)
    res = _result(Z, P, q, xi, zeta, u, run, t0, qp_iters)
    res.extra["rows_removed"] = prep.rows_removed
    return res


def _relaxed_view(prep, Zr):
    # same factor-space data; only the form of every factor becomes continuous
    view = object.__new__(_Prepared)
    view.__dict__.update(prep.__dict__)
    view.Z = Zr
    return view


def warm_start_from_point(Z, z_star, params=None, return_result=False):
    """Project ``z_star`` onto the convex relaxation in factor space.

    Solves ``min |G xi + c - z*|^2`` over ``CR(Z)`` with the convex solver
    and returns its final ``(zeta, u)`` for :func:`admm_fp` (plus the
    :class:`SolverResult` when ``return_result`` is set).
    """
    params = params or SolverParams()
    z_star = np.asarray(z_star, dtype=float).reshape(-1)
    if z_star.shape[0] != Z.n:
        raise DimensionMismatch(f"point has length {z_star.shape[0]}, set has dimension {Z.n}")
    res = solve_convex_qp(convex_relaxation(Z), sp.identity(Z.n, format="csc"), -z_star, params)
    if return_result:
        return res.zeta, res.u, res
    return res.zeta, res.u
