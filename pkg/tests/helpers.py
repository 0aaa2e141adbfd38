"""Random set generators, witness samplers and independent oracles for tests.

The oracles here use dense numpy / scipy.optimize only and share no code
with the package's solver.
"""

import itertools

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from hzplan.zonotope import CANONICAL, ZERO_ONE, HybridZonotope, factor_bounds


def random_hz(rng, n=2, n_gc=3, n_gb=1, n_c=1, form=CANONICAL, density=1.0):
    """Random non-empty hybrid zonotope with a known witness.

    Returns ``(Z, xi_c, xi_b)`` where ``(xi_c, xi_b)`` is admissible.
    """
    lo, hi = factor_bounds(form)

    def mat(r, c):
        M = rng.uniform(-1.0, 1.0, (r, c))
        return np.where(rng.random((r, c)) < density, M, 0.0)

    Gc, Gb, Ac, Ab = mat(n, n_gc), mat(n, n_gb), mat(n_c, n_gc), mat(n_c, n_gb)
    c = rng.uniform(-1.0, 1.0, n)
    xi_c = rng.uniform(lo, hi, n_gc)
    xi_b = rng.choice([lo, hi], n_gb)
    b = Ac @ xi_c + Ab @ xi_b
    return HybridZonotope(Gc, Gb, c, Ac, Ab, b, form), xi_c, xi_b


def random_zonotope(rng, n=2, n_g=3, form=ZERO_ONE):
    Z, _, _ = random_hz(rng, n, n_g, 0, 0, form)
    return Z


def sample_witness(Z, rng, tries=20, fallback=None):
    """Random admissible factors ``(xi_c, xi_b)`` of ``Z``.

    Draws a binary assignment, then a vertex of the continuous slice by
    an LP with a random objective, mixed with a random interior point of
    the slice. Falls back to ``fallback`` when no draw is feasible.
    """
    lo, hi = Z.bounds
    Ac, Ab = Z.Ac.toarray(), Z.Ab.toarray()
    for _ in range(tries):
        xi_b = rng.choice([lo, hi], Z.n_Gb)
        rhs = Z.b - Ab @ xi_b
        if Z.n_Gc == 0:
            if Z.n_C == 0 or np.max(np.abs(rhs)) <= 1e-12:
                return np.zeros(0), xi_b
            continue
        pts = []
        for _ in range(2):
            res = linprog(rng.normal(size=Z.n_Gc), A_eq=Ac if Z.n_C else None,
                          b_eq=rhs if Z.n_C else None, bounds=[(lo, hi)] * Z.n_Gc,
                          method="highs")
            if res.status != 0:
                break
            pts.append(np.clip(res.x, lo, hi))
        if len(pts) == 2:
            t = rng.random()
            xi_c = t * pts[0] + (1 - t) * pts[1]
            return xi_c, xi_b
    if fallback is None:
        raise RuntimeError("no witness found")
    return fallback


def cr_support(Z, d):
    """Support function of the convex relaxation of ``Z`` in direction ``d`` (LP)."""
    lo, hi = Z.bounds
    G = Z.G.toarray()
    A = Z.A.toarray()
    res = linprog(-(G.T @ d), A_eq=A if Z.n_C else None, b_eq=Z.b if Z.n_C else None,
                  bounds=[(lo, hi)] * Z.n_G, method="highs")
    assert res.status == 0, res.message
    return float(-res.fun + d @ Z.c)


def zonotope_support(Z, d):
    """Closed-form support function of a zonotope (no constraints or binaries)."""
    lo, hi = Z.bounds
    g = Z.Gc.toarray().T @ d
    return float(d @ Z.c + np.sum(np.maximum(lo * g, hi * g)))


def milp_optimum(Z, q):
    """``min q^T z`` over ``Z`` by scipy's MILP solver; returns ``(value, factors)``."""
    lo, hi = Z.bounds
    G = Z.G.toarray()
    A = Z.A.toarray()
    cost = G.T @ q
    if Z.form == CANONICAL:
        # binaries in {-1, 1}: xi_b = 2 y - 1 with y integer in {0, 1}
        shift = np.r_[np.zeros(Z.n_Gc), -np.ones(Z.n_Gb)]
        scale = np.r_[np.ones(Z.n_Gc), 2.0 * np.ones(Z.n_Gb)]
    else:
        shift = np.zeros(Z.n_G)
        scale = np.ones(Z.n_G)
    lb = np.r_[np.full(Z.n_Gc, lo), np.zeros(Z.n_Gb)]
    ub = np.r_[np.full(Z.n_Gc, hi), np.ones(Z.n_Gb)]
    integrality = np.r_[np.zeros(Z.n_Gc), np.ones(Z.n_Gb)]
    cons = [LinearConstraint(A * scale, Z.b - A @ shift, Z.b - A @ shift)] if Z.n_C else []
    res = milp(cost * scale, integrality=integrality, bounds=Bounds(lb, ub), constraints=cons)
    assert res.status == 0, res.message
    xi = res.x * scale + shift
    return float(q @ (G @ xi + Z.c)), xi


def enumeration_optimum(Z, q):
    """``min q^T z`` over ``Z`` by enumerating every binary assignment (one LP each)."""
    lo, hi = Z.bounds
    Gc, Gb = Z.Gc.toarray(), Z.Gb.toarray()
    Ac, Ab = Z.Ac.toarray(), Z.Ab.toarray()
    best = np.inf
    for bits in itertools.product((lo, hi), repeat=Z.n_Gb):
        xb = np.array(bits)
        res = linprog(Gc.T @ q, A_eq=Ac if Z.n_C else None,
                      b_eq=(Z.b - Ab @ xb) if Z.n_C else None,
                      bounds=[(lo, hi)] * Z.n_Gc, method="highs")
        if res.status == 0:
            best = min(best, res.fun + q @ (Gb @ xb + Z.c))
    return float(best)


def active_set_qp(P, q, A, b, lo, hi, tol=1e-9):
    """``min 1/2 x^T P x + q^T x`` s.t. ``A x = b``, ``lo <= x <= hi`` by
    enumerating every active set (each variable free, at ``lo`` or at ``hi``).

    ``P`` must be positive definite so that every face has one minimizer.
    Returns the best objective over feasible face minimizers.
    """
    n = P.shape[0]
    m = A.shape[0]
    best = np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        free = np.flatnonzero(pattern == 0)
        x = np.where(pattern == 1, lo, hi).astype(float)
        x[free] = 0.0
        fixed = pattern != 0
        k = free.size
        Pf = P[np.ix_(free, free)]
        rhs_q = -(q[free] + P[np.ix_(free, np.flatnonzero(fixed))] @ x[fixed])
        Af = A[:, free]
        rhs_b = b - A[:, fixed] @ x[fixed]
        K = np.block([[Pf, Af.T], [Af, np.zeros((m, m))]])
        sol, *_ = np.linalg.lstsq(K, np.r_[rhs_q, rhs_b], rcond=None)
        x[free] = sol[:k]
        if np.max(np.abs(A @ x - b), initial=0.0) > 1e-7:
            continue
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            continue
        best = min(best, 0.5 * x @ P @ x + q @ x)
    return float(best)


def sharp_union_factors(sets, i, xi_c, xi_b):
    """Factors of the sharp union for a witness of constituent ``i``."""
    cont, binf = [], []
    for j, Z in enumerate(sets):
        if j == i:
            xi = np.r_[xi_c, xi_b]
            cont += [xi_c, 1.0 - xi]
            binf += [xi_b, [1.0]]
        else:
            cont += [np.zeros(Z.n_Gc), np.zeros(Z.n_G)]
            binf += [np.zeros(Z.n_Gb), [0.0]]
    return np.concatenate(cont), np.concatenate(binf)


def condensed_union_factors(sets, i, xi_c, xi_b):
    """Factors of the condensed union for a witness of constituent ``i``."""
    cont, binf = [], []
    for j, Z in enumerate(sets):
        if j == i:
            sigma = 1.0 - (np.sum(xi_c) + np.sum(xi_b)) / max(Z.n_G, 1)
            cont += [xi_c, [sigma]]
            binf += [xi_b, [1.0]]
        else:
            cont += [np.zeros(Z.n_Gc), [0.0]]
            binf += [np.zeros(Z.n_Gb), [0.0]]
    return np.concatenate(cont), np.concatenate(binf)


def zonotope_union_factors(inc, n_sets, i, xi_c):
    """Factors of the zonotope union for a witness of constituent ``i``."""
    ns = inc.G_shared.shape[1]
    shared = np.zeros(ns)
    shared[list(inc.columns[i])] = xi_c
    M = inc.M.toarray()
    slack = (M[:, i] - shared) / inc.counts
    lam = np.zeros(n_sets)
    lam[i] = 1.0
    return np.r_[shared, slack], lam


def as_dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def masked_report(text):
    """Report CSV text with the wall-clock column blanked."""
    lines = text.splitlines()
    header = lines[1].split(",")
    col = header.index("wall_s")
    out = lines[:2]
    for line in lines[2:]:
        cells = line.split(",")
        cells[col] = ""
        out.append(",".join(cells))
    return "\n".join(out)


def output_differences(dir_a, dir_b):
    """Names of data files that differ between two CLI output directories.

    ``meta.json`` (timestamps) is skipped and the ``wall_s`` column of
    ``report.csv`` is masked; everything else must match byte for byte.
    """
    import os

    names_a = sorted(os.listdir(dir_a))
    names_b = sorted(os.listdir(dir_b))
    if names_a != names_b:
        return ["<file list>"]
    diffs = []
    for name in names_a:
        if name == "meta.json":
            continue
        with open(os.path.join(dir_a, name), "rb") as fa, open(os.path.join(dir_b, name), "rb") as fb:
            a, b = fa.read(), fb.read()
        if name == "report.csv":
            a, b = masked_report(a.decode()), masked_report(b.decode())
        if a != b:
            diffs.append(name)
    return diffs
