"""Union identities that build a hybrid zonotope from a list of sets.

All three constructions take 01-form inputs and return a 01-form hybrid
zonotope with one indicator binary ``lambda_i`` per constituent and a final
choose-one row ``sum_i lambda_i = 1``.

* :func:`union_sharp` keeps a slack per factor and yields a sharp set.
* :func:`union_condensed` uses one slack per constituent; fewer factors and
  constraints, weaker relaxation.
* :func:`union_zonotope` merges zonotopes that share generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from hzplan.errors import DimensionMismatch, DomainError, FormMismatch, InvalidParameter
from hzplan.kernel import block_diag, from_triplets, hstack, prune, vstack
from hzplan.zonotope import ZERO_ONE, HybridZonotope


class NotAZonotope(DomainError):
    """A constituent of a zonotope union has binaries or constraints."""


def _check_inputs(sets):
    sets = list(sets)
    if not sets:
        raise InvalidParameter("union of an empty list is undefined")
    n = sets[0].n
    for Z in sets:
        if Z.form != ZERO_ONE:
            raise FormMismatch("union identities require 01-form constituents")
        if Z.n != n:
            raise DimensionMismatch(f"constituent dimensions differ: {n} vs {Z.n}")
    return sets, n


def _ones_row(k):
    return sp.csc_matrix(np.ones((1, k))) if k else sp.csc_matrix((1, 0))


def union_sharp(sets):
    """Sharp union of 01-form hybrid zonotopes.

    Factor layout per constituent ``i``: continuous ``[xi_c_i, s_i]`` with a
    slack ``s_i`` for every factor of ``Z_i``, binary ``[xi_b_i, lambda_i]``.
    Constraints per constituent: ``A_i xi_i = b_i lambda_i`` and
    ``xi_i + s_i = lambda_i 1``.
    """
    sets, n = _check_inputs(sets)
    Gc_blocks, Gb_blocks, Ac_blocks, Ab_blocks = [], [], [], []
    for Z in sets:
        ngc, ngb, nc = Z.n_Gc, Z.n_Gb, Z.n_C
        ng = ngc + ngb
        Gc_blocks.append(hstack([Z.Gc, sp.csc_matrix((n, ng))], n))
        Gb_blocks.append(hstack([Z.Gb, sp.csc_matrix(Z.c.reshape(-1, 1))], n))
        eye_c = sp.vstack([sp.identity(ngc), sp.csc_matrix((ngb, ngc))])
        Ac_blocks.append(vstack([
            hstack([Z.Ac, sp.csc_matrix((nc, ng))], nc),
            hstack([sp.csc_matrix(eye_c), sp.identity(ng, format="csc")], ng),
        ], ngc + ng))
        eye_b = sp.vstack([sp.csc_matrix((ngc, ngb)), sp.identity(ngb)])
        Ab_blocks.append(vstack([
            hstack([Z.Ab, sp.csc_matrix(-Z.b.reshape(-1, 1))], nc),
            hstack([sp.csc_matrix(eye_b), sp.csc_matrix(-np.ones((ng, 1)))], ng),
        ], ngb + 1))
    return _assemble(sets, n, Gc_blocks, Gb_blocks, Ac_blocks, Ab_blocks)


def union_condensed(sets):
    """Condensed union of 01-form hybrid zonotopes.

    Factor layout per constituent ``i``: continuous ``[xi_c_i, sigma_i]``,
    binary ``[xi_b_i, lambda_i]``. Constraints per constituent:
    ``1^T xi_i + n_G,i (sigma_i - lambda_i) = 0`` and
    ``A_i xi_i = b_i lambda_i``.
    """
    sets, n = _check_inputs(sets)
    Gc_blocks, Gb_blocks, Ac_blocks, Ab_blocks = [], [], [], []
    for Z in sets:
        ngc, ngb, nc = Z.n_Gc, Z.n_Gb, Z.n_C
        ng = ngc + ngb
        Gc_blocks.append(hstack([Z.Gc, sp.csc_matrix((n, 1))], n))
        Gb_blocks.append(hstack([Z.Gb, sp.csc_matrix(Z.c.reshape(-1, 1))], n))
        Ac_blocks.append(vstack([
            hstack([_ones_row(ngc), sp.csc_matrix([[float(ng)]])], 1),
            hstack([Z.Ac, sp.csc_matrix((nc, 1))], nc),
        ], ngc + 1))
        Ab_blocks.append(vstack([
            hstack([_ones_row(ngb), sp.csc_matrix([[-float(ng)]])], 1),
            hstack([Z.Ab, sp.csc_matrix(-Z.b.reshape(-1, 1))], nc),
        ], ngb + 1))
    return _assemble(sets, n, Gc_blocks, Gb_blocks, Ac_blocks, Ab_blocks)


def _assemble(sets, n, Gc_blocks, Gb_blocks, Ac_blocks, Ab_blocks):
    Gc = hstack(Gc_blocks, n)
    Gb = hstack(Gb_blocks, n)
    Ac = block_diag(Ac_blocks)
    Ab = block_diag(Ab_blocks)
    # choose-one row over the indicator columns (last column of each binary block)
    ind_cols = np.cumsum([blk.shape[1] for blk in Ab_blocks]) - 1
    choose = from_triplets(np.zeros(len(sets)), ind_cols, np.ones(len(sets)), (1, Ab.shape[1]))
    Ac = vstack([Ac, sp.csc_matrix((1, Ac.shape[1]))], Ac.shape[1])
    Ab = vstack([Ab, choose], Ab.shape[1])
    b = np.zeros(Ac.shape[0])
    b[-1] = 1.0
    return HybridZonotope(Gc, Gb, np.zeros(n), Ac, Ab, b, ZERO_ONE)


@dataclass(frozen=True)
class IncidenceMatrix:
    """Shared-generator bookkeeping for :func:`union_zonotope`.

    Attributes:
        G_shared: ``n x n_shared`` matrix of distinct generator columns.
        M: ``n_shared x N`` 0/1 matrix; ``M[j, i] = 1`` iff column ``j`` is a
            generator of constituent ``i``.
        counts: Row sums of ``M``.
        columns: For each constituent, the shared column index of each of
            its generators, in order.
    """

    G_shared: sp.csc_matrix
    M: sp.csc_matrix
    counts: np.ndarray
    columns: tuple


def shared_generators(sets, tol=0.0):
    """Match generator columns across zonotopes.

    Columns are equal when they agree exactly (``tol == 0``) or within
    ``tol`` in max-norm. A constituent never maps two of its own generators
    to the same shared column.
    """
    n = sets[0].n
    shared = []
    exact = {}
    columns = []
    rows, cols = [], []
    for i, Z in enumerate(sets):
        G = Z.Gc.toarray()
        used = set()
        mine = []
        for k in range(G.shape[1]):
            g = G[:, k]
            j = None
            if tol == 0.0:
                for cand in exact.get(g.tobytes(), ()):
                    if cand not in used:
                        j = cand
                        break
            else:
                for cand, h in enumerate(shared):
                    if cand not in used and np.max(np.abs(h - g), initial=0.0) <= tol:
                        j = cand
                        break
            if j is None:
                j = len(shared)
                shared.append(g.copy())
                exact.setdefault(g.tobytes(), []).append(j)
            used.add(j)
            mine.append(j)
            rows.append(j)
            cols.append(i)
        columns.append(tuple(mine))
    n_shared = len(shared)
    G_shared = prune(np.column_stack(shared)) if shared else sp.csc_matrix((n, 0))
    M = from_triplets(rows, cols, np.ones(len(rows)), (n_shared, len(sets)))
    counts = np.asarray(M.sum(axis=1)).reshape(-1)
    return IncidenceMatrix(G_shared, M, counts, tuple(columns))


def union_zonotope(sets, tol=0.0):
    """Union of 01-form zonotopes with shared generators.

    Returns ``<[G~ 0], C, 0, [[I, N~], [0, 0]], [[-M], [1^T]], [0; 1]>`` in
    01-form, where ``G~`` holds the distinct generators, ``C`` the
    constituent centers, ``M`` the incidence matrix and ``N~`` its row sums.

    Raises:
        NotAZonotope: A constituent has binary factors or constraints.
    """
    sets, n = _check_inputs(sets)
    for Z in sets:
        if not Z.is_zonotope:
            raise NotAZonotope("union_zonotope needs zonotopes (no binaries, no constraints)")
    inc = shared_generators(sets, tol)
    ns = inc.G_shared.shape[1]
    N = len(sets)
    Gc = hstack([inc.G_shared, sp.csc_matrix((n, ns))], n)
    Gb = prune(np.column_stack([Z.c for Z in sets]))
    Ac = vstack([
        hstack([sp.identity(ns, format="csc"), sp.diags(inc.counts, format="csc")], ns),
        sp.csc_matrix((1, 2 * ns)),
    ], 2 * ns)
    Ab = vstack([-inc.M, sp.csc_matrix(np.ones((1, N)))], N)
    b = np.zeros(ns + 1)
    b[-1] = 1.0
    return HybridZonotope(Gc, Gb, np.zeros(n), Ac, Ab, b, ZERO_ONE)


UNION_KINDS = {
    "sharp": union_sharp,
    "condensed": union_condensed,
    "zonotope": union_zonotope,
}


def union(sets, kind="condensed"):
    """Dispatch to the union identity named by ``kind``."""
    try:
        fn = UNION_KINDS[kind]
    except KeyError:
        raise InvalidParameter(f"unknown union kind {kind!r}") from None
    return fn(sets)
