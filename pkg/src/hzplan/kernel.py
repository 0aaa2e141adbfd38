"""Sparse linear-algebra and randomness primitives.

Everything here is consumed by the set layer (sparse matrix helpers) and by
the solver (symmetric quasi-definite factorization, redundant-row removal,
seeded random streams).
"""

from __future__ import annotations

import heapq

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from hzplan import _backend
from hzplan.errors import InconsistentSystem, InvalidInterval, InvalidShape, StructurallySingular

#: Entries with magnitude below this are never stored.
PRUNE_TOL = 1e-12


# ---------------------------------------------------------------------------
# sparse helpers


def prune(M, tol=PRUNE_TOL):
    """Return ``M`` as canonical CSC with small entries dropped.

    Duplicates are summed before thresholding so the result never stores a
    value with ``|v| < tol``.
    """
    M = sp.csc_matrix(M, dtype=np.float64, copy=True)
    M.sum_duplicates()
    if M.nnz:
        M.data[np.abs(M.data) < tol] = 0.0
        M.eliminate_zeros()
    M.sort_indices()
    return M


def from_triplets(rows, cols, vals, shape):
    """Build a pruned CSC matrix from coordinate triplets (duplicates summed)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if not (rows.shape == cols.shape == vals.shape):
        raise InvalidShape("triplet arrays must have equal length")
    return prune(sp.coo_matrix((vals, (rows, cols)), shape=shape))


def as_sparse(M, shape=None):
    """Coerce a dense array, sparse matrix or None into a pruned CSC matrix.

    ``None`` becomes an all-zero matrix of the given ``shape``.
    """
    if M is None:
        if shape is None:
            raise InvalidShape("shape required for an empty matrix")
        return sp.csc_matrix(shape, dtype=np.float64)
    if sp.issparse(M):
        out = prune(M)
    else:
        arr = np.asarray(M, dtype=np.float64)
        if arr.ndim == 1 and shape is not None and shape[1] == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            if arr.size == 0 and shape is not None:
                arr = arr.reshape(shape)
            else:
                raise InvalidShape(f"expected a 2-D matrix, got shape {arr.shape}")
        out = prune(arr)
    if shape is not None and out.shape != tuple(shape):
        raise InvalidShape(f"expected shape {tuple(shape)}, got {out.shape}")
    return out


def hstack(blocks, n_rows):
    """Horizontally stack CSC blocks, tolerating an empty list."""
    blocks = [b for b in blocks if b.shape[1] > 0]
    if not blocks:
        return sp.csc_matrix((n_rows, 0))
    return prune(sp.hstack(blocks, format="csc"))


def vstack(blocks, n_cols):
    """Vertically stack CSC blocks, tolerating an empty list."""
    blocks = [b for b in blocks if b.shape[0] > 0]
    if not blocks:
        return sp.csc_matrix((0, n_cols))
    return prune(sp.vstack(blocks, format="csc"))


def block_diag(blocks):
    """Block-diagonal CSC matrix; zero-size blocks are allowed."""
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    if rows == 0 or cols == 0:
        return sp.csc_matrix((rows, cols))
    coo_r, coo_c, coo_v = [], [], []
    r0 = c0 = 0
    for b in blocks:
        bc = sp.coo_matrix(b)
        coo_r.append(bc.row + r0)
        coo_c.append(bc.col + c0)
        coo_v.append(bc.data)
        r0 += b.shape[0]
        c0 += b.shape[1]
    return from_triplets(np.concatenate(coo_r), np.concatenate(coo_c),
                         np.concatenate(coo_v), (rows, cols))


# ---------------------------------------------------------------------------
# ordering


def min_degree_order(M, n_primal=None):
    """Fill-reducing symmetric ordering by minimum degree.

    With ``n_primal`` set, indices ``>= n_primal`` are dual (constraint)
    variables of a quasi-definite KKT matrix. A dual index is only eligible
    once none of its remaining neighbours is primal, so every dual pivot is
    preceded by the primal block that makes it negative. This keeps the
    factorization regularization-free when the constraint rows are
    independent.

    Args:
        M: Square sparse matrix; only its symmetric pattern is used.
        n_primal: Size of the leading positive-definite block, or None for a
            plain minimum-degree ordering.

    Returns:
        Permutation ``perm`` such that ``M[perm][:, perm]`` is factored.
    """
    n = M.shape[0]
    pat = sp.csr_matrix(M, copy=True)
    pat = pat + pat.T
    pat = pat.tocsr()
    adj = [set() for _ in range(n)]
    for i in range(n):
        row = pat.indices[pat.indptr[i]:pat.indptr[i + 1]]
        adj[i].update(int(j) for j in row if j != i)
    limit = n if n_primal is None else n_primal
    primal_left = [0] * n
    if n_primal is not None:
        for i in range(n_primal, n):
            primal_left[i] = sum(1 for j in adj[i] if j < limit)

    heap = [(len(adj[i]), i) for i in range(n) if i < limit or primal_left[i] == 0]
    heapq.heapify(heap)
    done = [False] * n
    perm = []
    while heap:
        deg, i = heapq.heappop(heap)
        if done[i] or deg != len(adj[i]) or (i >= limit and primal_left[i] > 0):
            continue
        done[i] = True
        perm.append(i)
        nbrs = adj[i]
        for a in nbrs:
            adj[a].discard(i)
            if i < limit and a >= limit:
                primal_left[a] -= 1
        for a in nbrs:
            extra = nbrs - adj[a]
            extra.discard(a)
            if extra:
                adj[a] |= extra
                if a >= limit:
                    primal_left[a] += sum(1 for j in extra if j < limit)
        for a in nbrs:
            if a < limit or primal_left[a] == 0:
                heapq.heappush(heap, (len(adj[a]), a))
        adj[i] = set()
    if len(perm) != n:  # isolated dual nodes never pushed
        missing = [i for i in range(n) if not done[i]]
        perm.extend(missing)
    return np.asarray(perm, dtype=np.int64)


# ---------------------------------------------------------------------------
# factorization


class SymFactorization:
    """Permuted LDL^T factorization of a symmetric matrix.

    Attributes:
        n: Matrix order.
        perm: Elimination order.
        Lp, Li, Lx: Strictly lower unit factor ``L`` in CSC form.
        D: Pivots; ``Dinv`` their reciprocals.
        inertia: ``(positive, negative)`` pivot counts.
        n_small_pivots: Pivots with ``|d| <= pivot_tol * scale``.
    """

    def __init__(self, n, perm, Lp, Li, Lx, D, pivot_tol):
        self.n = int(n)
        self.perm = np.ascontiguousarray(perm, dtype=np.int64)
        self.Lp = np.ascontiguousarray(Lp, dtype=np.int64)
        self.Li = np.ascontiguousarray(Li, dtype=np.int64)
        self.Lx = np.ascontiguousarray(Lx, dtype=np.float64)
        self.D = np.ascontiguousarray(D, dtype=np.float64)
        with np.errstate(divide="ignore"):
            self.Dinv = np.ascontiguousarray(1.0 / self.D)
        self.inertia = (int(np.sum(self.D > 0)), int(np.sum(self.D < 0)))
        self.n_small_pivots = int(np.sum(np.abs(self.D) <= pivot_tol))

    @property
    def nnz_L(self):
        return int(self.Lp[-1]) if self.n else 0

    def solve(self, rhs, backend=None):
        """Solve ``M x = rhs`` for a vector ``rhs``."""
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape != (self.n,):
            raise InvalidShape(f"rhs must have shape ({self.n},), got {rhs.shape}")
        work = np.ascontiguousarray(rhs[self.perm])
        if self.n:
            _backend.get_backend(backend).ldl_solve(self.Lp, self.Li, self.Lx, self.Dinv, work)
        out = np.empty(self.n)
        out[self.perm] = work
        return out


def factorize_sym(M, n_primal=None, pivot_tol=1e-9, backend=None):
    """Factor a symmetric (quasi-definite) sparse matrix as ``P^T L D L^T P``.

    Args:
        M: Symmetric sparse matrix; only the upper triangle is read after
            permutation.
        n_primal: Size of the leading positive block when ``M`` is a KKT
            matrix ``[[P, A^T], [A, 0]]``; enables the constrained ordering.
        pivot_tol: Relative threshold; a pivot with
            ``|d| <= pivot_tol * max(1, max|M|)`` counts as structurally zero.
        backend: Kernel backend name, or None for the active one.

    Returns:
        SymFactorization

    Raises:
        StructurallySingular: A pivot was zero to working precision, which
            for a KKT matrix means dependent constraint rows.
    """
    M = sp.csc_matrix(M, dtype=np.float64)
    n = M.shape[0]
    if M.shape != (n, n):
        raise InvalidShape("matrix must be square")
    perm = min_degree_order(M, n_primal)
    Mp = sp.triu(M[perm][:, perm], format="csc")
    Mp.sum_duplicates()
    Mp.sort_indices()
    scale = max(1.0, float(np.max(np.abs(M.data))) if M.nnz else 1.0)
    Lp, Li, Lx, D, _ = _backend.get_backend(backend).ldl_factor(
        n, Mp.indptr.astype(np.int64), Mp.indices.astype(np.int64), Mp.data)
    fact = SymFactorization(n, perm, Lp, Li, Lx, D, pivot_tol * scale)
    if fact.n_small_pivots:
        raise StructurallySingular(
            f"{fact.n_small_pivots} pivot(s) below {pivot_tol * scale:.3g}")
    return fact


def solve_sym(fact, rhs, backend=None):
    """Solve with a :class:`SymFactorization`; see its ``solve`` method."""
    return fact.solve(rhs, backend=backend)


def remove_redundant_rows(A, b, tol=1e-9, return_index=False):
    """Drop linearly dependent rows from ``A x = b``.

    Rank is revealed by a column-pivoted QR of ``A^T``; rows whose pivots
    exceed ``tol`` times the largest are kept, in their original order.

    Raises:
        InconsistentSystem: A dropped row is not satisfied by the kept ones.
    """
    A = sp.csr_matrix(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m = A.shape[0]
    if m == 0:
        return (A.tocsc(), b, np.arange(0)) if return_index else (A.tocsc(), b)
    dense = A.toarray()
    _, R, piv = scipy.linalg.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R)) if R.size else np.zeros(0)
    top = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > tol * max(top, 1.0))) if top > 0 else 0
    keep = np.sort(piv[:rank])
    A_k, b_k = dense[keep], b[keep]
    if rank:
        x, *_ = scipy.linalg.lstsq(A_k, b_k)
        resid = dense @ x - b
    else:
        resid = -b
    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    if np.max(np.abs(resid)) > 1e3 * tol * scale:
        raise InconsistentSystem(
            f"dropped rows violate the kept system by {np.max(np.abs(resid)):.3g}")
    out = prune(sp.csc_matrix(A_k))
    if return_index:
        return out, b_k.copy(), keep
    return out, b_k.copy()


# ---------------------------------------------------------------------------
# randomness


class RngStream:
    """Seeded random stream shared by the solver and scenario generators.

    Wraps numpy's PCG64 so the compiled loop can draw from the same bit
    generator through its C interface.
    """

    def __init__(self, seed=0):
        self.seed = seed
        self.bitgen = np.random.PCG64(seed)
        self.gen = np.random.Generator(self.bitgen)

    def uniform(self, a, b, size=None):
        """Draw from ``[a, b]``; ``a == b`` returns ``a`` exactly."""
        if a == b:
            return a if size is None else np.full(size, float(a))
        return a + (b - a) * self.gen.random(size)

    def normal(self, mean=0.0, std=1.0, size=None):
        return self.gen.normal(mean, std, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def spawn(self, key):
        """Independent child stream derived from the seed and ``key``."""
        return RngStream(np.random.SeedSequence([_seed_int(self.seed), int(key)]))


def _seed_int(seed):
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed)


def rand_uniform(rng, a, b):
    """Draw one value from ``[a, b]`` using ``rng`` (an :class:`RngStream`)."""
    if a > b:
        raise InvalidInterval(f"empty interval [{a}, {b}]")
    return float(rng.uniform(a, b))
