"""Pure-Python fallback for the compiled kernels in ``_core.pyx``.

Same signatures, same random-stream consumption. Triangular solves go
through :func:`scipy.sparse.linalg.spsolve_triangular`; the factorization
itself is a direct transcription of the up-looking LDL^T algorithm.
"""

import math
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

NAME = "python"

_CONVERGED, _ITER_LIMIT, _TIME_LIMIT = 0, 1, 2


def ldl_factor(n, Ap, Ai, Ax):
    """Factor an upper-triangular CSC matrix as L D L^T.

    See ``hzplan._core.ldl_factor`` for the contract.
    """
    Ap = [int(x) for x in Ap]
    Ai = [int(x) for x in Ai]
    Ax = [float(x) for x in Ax]
    etree = [-1] * n
    lnz = [0] * n
    work = [0] * n
    for j in range(n):
        work[j] = j
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i > j:
                raise ValueError("input must be upper triangular")
            while work[i] != j:
                if etree[i] == -1:
                    etree[i] = j
                lnz[i] += 1
                work[i] = j
                i = etree[i]
    Lp = [0] * (n + 1)
    for i in range(n):
        Lp[i + 1] = Lp[i] + lnz[i]
    Li = [0] * Lp[n]
    Lx = [0.0] * Lp[n]
    D = [0.0] * n
    Dinv = [0.0] * n
    y = [0.0] * n
    marker = [False] * n
    next_space = Lp[:n]
    bad = -1
    for k in range(n):
        yidx = []
        for p in range(Ap[k], Ap[k + 1]):
            bidx = Ai[p]
            if bidx == k:
                D[k] = Ax[p]
                continue
            y[bidx] = Ax[p]
            if not marker[bidx]:
                marker[bidx] = True
                elim = [bidx]
                nxt = etree[bidx]
                while nxt != -1 and nxt < k and not marker[nxt]:
                    marker[nxt] = True
                    elim.append(nxt)
                    nxt = etree[nxt]
                yidx.extend(reversed(elim))
        dk = D[k]
        for cidx in reversed(yidx):
            end = next_space[cidx]
            yv = y[cidx]
            for j in range(Lp[cidx], end):
                y[Li[j]] -= Lx[j] * yv
            lval = yv * Dinv[cidx]
            Li[end] = k
            Lx[end] = lval
            dk -= yv * lval
            next_space[cidx] = end + 1
            y[cidx] = 0.0
            marker[cidx] = False
        D[k] = dk
        if dk == 0.0:
            if bad < 0:
                bad = k
            Dinv[k] = math.inf
        else:
            Dinv[k] = 1.0 / dk
    return (
        np.asarray(Lp, dtype=np.int64),
        np.asarray(Li, dtype=np.int64),
        np.asarray(Lx, dtype=np.float64),
        np.asarray(D, dtype=np.float64),
        bad,
    )


class _TriSolver:
    """Cached scipy triangular factors of an LDL^T factorization."""

    def __init__(self, n, Lp, Li, Lx, Dinv):
        eye = sp.identity(n, format="csc")
        L = sp.csc_matrix((Lx, Li, Lp), shape=(n, n)) + eye
        self.L = L.tocsr()
        self.Lt = L.T.tocsr()
        self.Dinv = np.asarray(Dinv)
        self.n = n

    def __call__(self, x):
        if self.n == 0:
            return x
        y = spsolve_triangular(self.L, x, lower=True, unit_diagonal=True)
        y *= self.Dinv
        return spsolve_triangular(self.Lt, y, lower=False, unit_diagonal=True)


def ldl_solve(Lp, Li, Lx, Dinv, x):
    """Solve ``L D L^T y = x`` in place (no permutation)."""
    x[:] = _TriSolver(len(x), Lp, Li, Lx, Dinv)(np.array(x, dtype=float))


def _perm_solver(fact):
    tri = _TriSolver(fact.n, fact.Lp, fact.Li, fact.Lx, fact.Dinv)
    perm = np.asarray(fact.perm)

    def solve(rhs):
        out = np.empty_like(rhs)
        out[perm] = tri(rhs[perm])
        return out

    return solve


def admm_run(convex, n_c, n_b, lo, hi, kkt, aat, A_csr, qt, b, rho, eps_p,
             eps_d, k_restart, k_ph1, k_ph2, l_buf, eps_buf, deadline,
             xi, zeta, u, bitgen):
    """Python transcription of ``hzplan._core.admm_run``."""
    n_g = n_c + n_b
    m = len(b)
    qt = np.asarray(qt)
    b = np.asarray(b)
    solve_k = _perm_solver(kkt)
    solve_s = _perm_solver(aat) if (m > 0 and not convex) else None
    A_T = A_csr.T.tocsr() if solve_s is not None else None
    rng = np.random.Generator(bitgen) if (bitgen is not None and not convex) else None
    mid = 0.5 * (lo + hi)
    span = hi - lo
    is_bin = np.arange(n_g) >= n_c

    k = total = ph1 = kr = n_pert = n_rest = 0
    kmax = k_ph1
    phase = 1
    status = _ITER_LIMIT
    rp = rd = rminus = math.inf
    ring = []
    rhs = np.empty(n_g + m)
    if not convex and kmax <= 0:
        phase, kmax = 2, k_ph2

    def flip(flavor):
        if n_b == 0:
            return
        f = np.abs(xi[n_c:] - zeta[n_c:]) / span
        r = rng.random(n_b)
        if flavor == 0:
            mask = r < f
        else:
            mask = f + np.maximum(r - 0.3, 0.0) > 0.5
        zb = zeta[n_c:]
        zeta[n_c:] = np.where(mask, np.where(zb == hi, lo, hi), zb)

    while True:
        if k >= kmax:
            status = _ITER_LIMIT
            break
        if time.monotonic() > deadline:
            status = _TIME_LIMIT
            break
        if phase == 1:
            rhs[:n_g] = -qt + rho * (zeta - u)
            rhs[n_g:] = b
            xi[:] = solve_k(rhs)[:n_g]
        else:
            v = zeta - u
            if m > 0:
                w = solve_s(A_csr @ v - b)
                v = v - A_T @ w
            xi[:] = v
        wv = xi + u
        znew = np.where(is_bin, np.where(wv >= mid, hi, lo), np.clip(wv, lo, hi))
        if convex:
            rd = rho * (float(np.max(np.abs(znew - zeta))) if n_g else 0.0)
        zeta[:] = znew
        u += xi - znew
        rp = float(np.max(np.abs(xi - znew))) if n_g else 0.0
        k += 1
        total += 1
        if phase == 1:
            ph1 += 1
        if convex:
            if rp <= eps_p and rd <= eps_d:
                status = _CONVERGED
                break
            continue
        if rp <= eps_p:
            status = _CONVERGED
            break
        hit = any(abs(r - rp) <= eps_buf for r in ring)
        if l_buf > 0:
            ring.append(rp)
            if len(ring) > l_buf:
                ring.pop(0)
        if hit:
            flip(0)
            n_pert += 1
            ring.clear()
        if rp < rminus:
            kr = 0
            rminus = rp
        else:
            kr += 1
        if kr >= k_restart:
            flip(1)
            n_rest += 1
            kr = 0
            rminus = rp
            ring.clear()
        if phase == 1 and k >= kmax:
            phase, kmax, k = 2, k_ph2, 0
            ring.clear()
    if convex:
        return status, total, ph1, phase, rp, rd, 0, 0
    return status, total, ph1, phase, rp, math.nan, n_pert, n_rest
