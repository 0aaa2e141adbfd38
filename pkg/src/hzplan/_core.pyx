# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: sparse LDL^T factor/solve and the ADMM iteration loop.

The pure-Python twin lives in ``_core_py.py``; both expose the same three
functions and consume the random stream in the same order, so a fixed seed
yields identical iterates on either backend up to floating-point rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

cnp.import_array()

NAME = "cython"

DEF UNUSED = 0
DEF USED = 1
DEF NONE = -1

cdef enum:
    ST_CONVERGED = 0
    ST_ITER_LIMIT = 1
    ST_TIME_LIMIT = 2

cdef enum:
    FLIP_PERTURB = 0
    FLIP_RESTART = 1


cdef struct LDL:
    int64_t n
    const int64_t* perm
    const int64_t* Lp
    const int64_t* Li
    const double* Lx
    const double* Dinv


cdef inline double now() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return <double>ts.tv_sec + 1e-9 * <double>ts.tv_nsec


def ldl_factor(int64_t n, const int64_t[::1] Ap, const int64_t[::1] Ai,
               const double[::1] Ax):
    """Factor an upper-triangular CSC matrix as L D L^T.

    Args:
        n: Matrix order.
        Ap, Ai, Ax: Upper triangle (diagonal included) in CSC form.

    Returns:
        Tuple ``(Lp, Li, Lx, D, bad)`` where ``L`` is strictly lower
        triangular in CSC form and ``bad`` is the first column whose pivot
        was exactly zero (``-1`` when every pivot is nonzero).
    """
    cdef int64_t i, j, k, p, nnzY, nnzE, bidx, cidx, nextIdx, tmpIdx
    cdef int64_t bad = -1
    cdef double yv
    etree_a = np.full(n, NONE, dtype=np.int64)
    lnz_a = np.zeros(n, dtype=np.int64)
    work_a = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] etree = etree_a
    cdef int64_t[::1] Lnz = lnz_a
    cdef int64_t[::1] work = work_a

    with nogil:
        for j in range(n):
            work[j] = j
            for p in range(Ap[j], Ap[j + 1]):
                i = Ai[p]
                if i > j:
                    bad = -2
                    break
                while work[i] != j:
                    if etree[i] == NONE:
                        etree[i] = j
                    Lnz[i] += 1
                    work[i] = j
                    i = etree[i]
            if bad == -2:
                break
    if bad == -2:
        raise ValueError("input must be upper triangular")

    Lp_a = np.zeros(n + 1, dtype=np.int64)
    Lp_a[1:] = np.cumsum(lnz_a)
    cdef int64_t[::1] Lp = Lp_a
    cdef int64_t nnzL = Lp_a[n]
    Li_a = np.zeros(nnzL, dtype=np.int64)
    Lx_a = np.zeros(nnzL, dtype=np.float64)
    D_a = np.zeros(n, dtype=np.float64)
    cdef int64_t[::1] Li = Li_a
    cdef double[::1] Lx = Lx_a
    cdef double[::1] D = D_a
    cdef double[::1] Dinv = np.zeros(n, dtype=np.float64)
    cdef double[::1] yVals = np.zeros(n, dtype=np.float64)
    cdef int64_t[::1] yIdx = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] elim = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] nextSpace = np.zeros(n, dtype=np.int64)
    cdef char[::1] marker = np.zeros(n, dtype=np.int8)

    with nogil:
        for i in range(n):
            nextSpace[i] = Lp[i]
        for k in range(n):
            nnzY = 0
            for p in range(Ap[k], Ap[k + 1]):
                bidx = Ai[p]
                if bidx == k:
                    D[k] = Ax[p]
                    continue
                yVals[bidx] = Ax[p]
                nextIdx = bidx
                if marker[nextIdx] == UNUSED:
                    marker[nextIdx] = USED
                    elim[0] = nextIdx
                    nnzE = 1
                    nextIdx = etree[bidx]
                    while nextIdx != NONE and nextIdx < k:
                        if marker[nextIdx] == USED:
                            break
                        marker[nextIdx] = USED
                        elim[nnzE] = nextIdx
                        nnzE += 1
                        nextIdx = etree[nextIdx]
                    while nnzE:
                        nnzE -= 1
                        yIdx[nnzY] = elim[nnzE]
                        nnzY += 1
            i = nnzY - 1
            while i >= 0:
                cidx = yIdx[i]
                tmpIdx = nextSpace[cidx]
                yv = yVals[cidx]
                for j in range(Lp[cidx], tmpIdx):
                    yVals[Li[j]] -= Lx[j] * yv
                Li[tmpIdx] = k
                Lx[tmpIdx] = yv * Dinv[cidx]
                D[k] -= yv * Lx[tmpIdx]
                nextSpace[cidx] += 1
                yVals[cidx] = 0.0
                marker[cidx] = UNUSED
                i -= 1
            if D[k] == 0.0:
                if bad < 0:
                    bad = k
                Dinv[k] = INFINITY
            else:
                Dinv[k] = 1.0 / D[k]
    return Lp_a, Li_a, Lx_a, D_a, bad


cdef void ldl_solve_inplace(const LDL* f, double* x) noexcept nogil:
    cdef int64_t i, j
    cdef int64_t n = f.n
    for i in range(n):
        for j in range(f.Lp[i], f.Lp[i + 1]):
            x[f.Li[j]] -= f.Lx[j] * x[i]
    for i in range(n):
        x[i] *= f.Dinv[i]
    i = n - 1
    while i >= 0:
        for j in range(f.Lp[i], f.Lp[i + 1]):
            x[i] -= f.Lx[j] * x[f.Li[j]]
        i -= 1


cdef void perm_solve(const LDL* f, const double* rhs, double* work,
                     double* out) noexcept nogil:
    cdef int64_t k
    for k in range(f.n):
        work[k] = rhs[f.perm[k]]
    ldl_solve_inplace(f, work)
    for k in range(f.n):
        out[f.perm[k]] = work[k]


def ldl_solve(const int64_t[::1] Lp, const int64_t[::1] Li,
              const double[::1] Lx, const double[::1] Dinv, double[::1] x):
    """Solve ``L D L^T y = x`` in place (no permutation)."""
    cdef LDL f
    f.n = x.shape[0]
    f.Lp = &Lp[0]
    f.Li = &Li[0] if Li.shape[0] else NULL
    f.Lx = &Lx[0] if Lx.shape[0] else NULL
    f.Dinv = &Dinv[0] if Dinv.shape[0] else NULL
    if f.n:
        with nogil:
            ldl_solve_inplace(&f, &x[0])


cdef class _Factor:
    # Keeps the numpy buffers of a factorization alive for the C loop.
    cdef LDL f
    cdef object keep

    def __init__(self, fact):
        cdef const int64_t[::1] perm = fact.perm
        cdef const int64_t[::1] Lp = fact.Lp
        cdef const int64_t[::1] Li = fact.Li
        cdef const double[::1] Lx = fact.Lx
        cdef const double[::1] Dinv = fact.Dinv
        self.keep = (perm, Lp, Li, Lx, Dinv)
        self.f.n = fact.n
        self.f.perm = &perm[0] if perm.shape[0] else NULL
        self.f.Lp = &Lp[0]
        self.f.Li = &Li[0] if Li.shape[0] else NULL
        self.f.Lx = &Lx[0] if Lx.shape[0] else NULL
        self.f.Dinv = &Dinv[0] if Dinv.shape[0] else NULL


cdef struct Ring:
    double* vals
    int64_t cap
    int64_t count
    int64_t head


cdef inline bint ring_detect_push(Ring* r, double rp, double eps) noexcept nogil:
    cdef int64_t i
    cdef bint hit = False
    for i in range(r.count):
        if fabs(r.vals[i] - rp) <= eps:
            hit = True
            break
    if r.cap > 0:
        r.vals[r.head] = rp
        r.head = (r.head + 1) % r.cap
        if r.count < r.cap:
            r.count += 1
    return hit


cdef inline void ring_clear(Ring* r) noexcept nogil:
    r.count = 0
    r.head = 0


cdef int64_t binflip(int flavor, int64_t n_c, int64_t n_g, double lo, double hi,
                     const double* xi, double* zeta, bitgen_t* rng) noexcept nogil:
    cdef int64_t j
    cdef int64_t flips = 0
    cdef double f, r, span = hi - lo
    cdef bint flip
    for j in range(n_c, n_g):
        f = fabs(xi[j] - zeta[j]) / span
        if flavor == FLIP_PERTURB:
            r = rng.next_double(rng.state)
            flip = r < f
        else:
            r = -0.3 + rng.next_double(rng.state)
            if r < 0.0:
                r = 0.0
            flip = f + r > 0.5
        if flip:
            zeta[j] = lo if zeta[j] == hi else hi
            flips += 1
    return flips


def admm_run(bint convex, int64_t n_c, int64_t n_b, double lo, double hi,
             object kkt, object aat, object A_csr,
             const double[::1] qt, const double[::1] b, double rho,
             double eps_p, double eps_d, int64_t k_restart, int64_t k_ph1,
             int64_t k_ph2, int64_t l_buf, double eps_buf, double deadline,
             double[::1] xi, double[::1] zeta, double[::1] u, object bitgen):
    """Run ADMM (convex mode) or the ADMM-FP heuristic in place.

    ``xi``, ``zeta`` and ``u`` hold the starting iterate and are overwritten
    with the final one. In convex mode ``k_ph1`` is the iteration cap and the
    random stream is never touched.

    Returns:
        ``(status, iterations, phase1_iterations, phase, r_p, r_d,
        n_perturb, n_restart)`` with status 0/1/2 for converged, iteration
        limit and time limit.
    """
    cdef int64_t n_g = n_c + n_b
    cdef int64_t m = b.shape[0]
    cdef _Factor K = _Factor(kkt)
    cdef _Factor S
    cdef const LDL* fs = NULL
    cdef const int64_t[::1] Arp
    cdef const int64_t[::1] Aci
    cdef const double[::1] Avx
    cdef const int64_t* arp = NULL
    cdef const int64_t* aci = NULL
    cdef const double* avx = NULL
    if m > 0 and not convex:
        S = _Factor(aat)
        fs = &S.f
        Arp = A_csr.indptr
        Aci = A_csr.indices
        Avx = A_csr.data
        arp = &Arp[0]
        aci = &Aci[0] if Aci.shape[0] else NULL
        avx = &Avx[0] if Avx.shape[0] else NULL

    cdef bitgen_t* rng = NULL
    if not convex and n_b > 0:
        rng = <bitgen_t*> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")

    cdef int64_t nk = n_g + m
    cdef double* rhs = <double*> malloc((2 * nk + 2 * n_g + m + 1) * sizeof(double))
    cdef double* work = rhs + nk
    cdef double* v = work + nk
    cdef double* sol = v + n_g
    cdef double* t = sol + n_g
    cdef Ring ring
    ring.cap = l_buf
    ring.count = 0
    ring.head = 0
    ring.vals = <double*> malloc((l_buf + 1) * sizeof(double))

    cdef int64_t i, j, p
    cdef int64_t k = 0, total = 0, ph1 = 0, kr = 0, n_pert = 0, n_rest = 0
    cdef int64_t kmax = k_ph1
    cdef int phase = 1
    cdef int status = ST_ITER_LIMIT
    cdef double rp = INFINITY, rd = INFINITY, rminus = INFINITY
    cdef double w, z, acc, mid = 0.5 * (lo + hi)
    cdef double* xp = &xi[0] if n_g else NULL
    cdef double* zp = &zeta[0] if n_g else NULL
    cdef double* up = &u[0] if n_g else NULL
    cdef const double* qp = &qt[0] if n_g else NULL
    cdef const double* bp = &b[0] if m else NULL

    with nogil:
        if not convex and kmax <= 0:
            phase = 2
            kmax = k_ph2
        while True:
            if k >= kmax:
                status = ST_ITER_LIMIT
                break
            if now() > deadline:
                status = ST_TIME_LIMIT
                break
            if phase == 1:
                for j in range(n_g):
                    rhs[j] = -qp[j] + rho * (zp[j] - up[j])
                for i in range(m):
                    rhs[n_g + i] = bp[i]
                perm_solve(&K.f, rhs, work, sol)
                for j in range(n_g):
                    xp[j] = sol[j]
            else:
                for j in range(n_g):
                    v[j] = zp[j] - up[j]
                if m > 0:
                    for i in range(m):
                        acc = -bp[i]
                        for p in range(arp[i], arp[i + 1]):
                            acc += avx[p] * v[aci[p]]
                        t[i] = acc
                    perm_solve(fs, t, work, rhs)
                    for i in range(m):
                        acc = rhs[i]
                        for p in range(arp[i], arp[i + 1]):
                            v[aci[p]] -= avx[p] * acc
                for j in range(n_g):
                    xp[j] = v[j]
            rp = 0.0
            rd = 0.0
            for j in range(n_g):
                w = xp[j] + up[j]
                if j < n_c:
                    z = lo if w < lo else (hi if w > hi else w)
                else:
                    z = hi if w >= mid else lo
                if convex and fabs(z - zp[j]) > rd:
                    rd = fabs(z - zp[j])
                zp[j] = z
                up[j] += xp[j] - z
                if fabs(xp[j] - z) > rp:
                    rp = fabs(xp[j] - z)
            rd *= rho
            k += 1
            total += 1
            if phase == 1:
                ph1 += 1
            if convex:
                if rp <= eps_p and rd <= eps_d:
                    status = ST_CONVERGED
                    break
                continue
            if rp <= eps_p:
                status = ST_CONVERGED
                break
            if ring_detect_push(&ring, rp, eps_buf):
                binflip(FLIP_PERTURB, n_c, n_g, lo, hi, xp, zp, rng)
                n_pert += 1
                ring_clear(&ring)
            if rp < rminus:
                kr = 0
                rminus = rp
            else:
                kr += 1
            if kr >= k_restart:
                binflip(FLIP_RESTART, n_c, n_g, lo, hi, xp, zp, rng)
                n_rest += 1
                kr = 0
                rminus = rp
                ring_clear(&ring)
            if phase == 1 and k >= kmax:
                phase = 2
                kmax = k_ph2
                k = 0
                ring_clear(&ring)
    free(rhs)
    free(ring.vals)
    if convex:
        return status, total, ph1, phase, rp, rd, 0, 0
    return status, total, ph1, phase, rp, float("nan"), n_pert, n_rest
