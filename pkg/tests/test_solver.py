import math

import numpy as np
import pytest
import scipy.sparse as sp

from helpers import active_set_qp, random_hz
from hzplan import _backend
from hzplan.errors import DimensionMismatch, DomainError, InvalidParameter, StructurallySingular
from hzplan.scenarios.random_milp import random_instance
from hzplan.scenarios.verify import check_factors
from hzplan.solver import (
    PERTURB,
    RESTART,
    CycleBuffer,
    IterateState,
    SolverParams,
    Status,
    _Prepared,
    admm_fp,
    binflip,
    build_kkt,
    condense_objective,
    detect_cycle,
    kkt_matrix,
    phase1_step,
    phase2_step,
    project_affine,
    project_mibox,
    solve_convex_qp,
    warm_start_from_point,
)
from hzplan.kernel import factorize_sym, RngStream
from hzplan.zonotope import CANONICAL, ZERO_ONE, HybridZonotope, box, constrained_zonotope, zonotope

SEGMENT = zonotope([[1.0]], [0.0])
TIGHT = SolverParams(eps_p=1e-8, eps_d=1e-8, rho=1.0, k_ph1=200000)


# -- objective and KKT --------------------------------------------------------


def test_condense_zero_objective():
    Z, _, _ = random_hz(np.random.default_rng(0), 2, 3, 1, 1)
    obj = condense_objective(Z)
    assert obj.P.nnz == 0
    np.testing.assert_array_equal(obj.q, 0.0)


def test_condense_scalar():
    obj = condense_objective(SEGMENT, [[2.0]], [1.0])
    assert obj.P.toarray()[0, 0] == 2.0
    assert obj.q[0] == 1.0


def test_condense_equivalence(rng):
    Z, _, _ = random_hz(rng, 3, 4, 2, 1)
    B = rng.normal(size=(3, 3))
    P = B @ B.T
    q = rng.normal(size=3)
    obj = condense_objective(Z, P, q)
    for _ in range(100):
        xi = rng.uniform(-1, 1, Z.n_G)
        z = Z.G @ xi + Z.c
        set_val = 0.5 * z @ P @ z + q @ z
        fac_val = 0.5 * xi @ (obj.P @ xi) + obj.q @ xi
        assert abs(set_val - obj.const - fac_val) <= 1e-10 * max(1.0, abs(set_val))


def test_condense_dimension_check():
    with pytest.raises(DimensionMismatch):
        condense_objective(SEGMENT, np.eye(2), None)


def test_kkt_dense_oracle(rng):
    Pt = sp.csc_matrix((2, 2))
    A = sp.csc_matrix([[1.0, 1.0]])
    fact = build_kkt(Pt, A, 10.0)
    rhs = rng.normal(size=3)
    M = np.array([[10.0, 0.0, 1.0], [0.0, 10.0, 1.0], [1.0, 1.0, 0.0]])
    np.testing.assert_allclose(fact.solve(rhs), np.linalg.solve(M, rhs), atol=1e-10)


def test_kkt_rho_touches_only_diagonal(rng):
    Pt = sp.csc_matrix(np.diag([1.0, 2.0, 0.0]))
    A = sp.csc_matrix(rng.normal(size=(2, 3)))
    d = (kkt_matrix(Pt, A, 2.0) - kkt_matrix(Pt, A, 1.0)).toarray()
    np.testing.assert_allclose(d, np.diag([1.0, 1.0, 1.0, 0.0, 0.0]))


def test_duplicate_rows_recovered():
    A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    with pytest.raises(StructurallySingular):
        build_kkt(sp.csc_matrix((3, 3)), sp.csc_matrix(A), 1.0)
    Z = constrained_zonotope(np.eye(3), np.zeros(3), A, [0.5, 0.5])
    prep = _Prepared(Z, None, None, 1.0, None)
    assert prep.rows_removed == 1
    res = solve_convex_qp(Z, np.eye(3), np.zeros(3), TIGHT)
    assert res.converged
    np.testing.assert_allclose(res.z, [0.25, 0.25, 0.0], atol=1e-5)


# -- iteration building blocks ---------------------------------------------


def test_project_mibox_examples():
    np.testing.assert_array_equal(project_mibox([0.4, 0.4], 1, 1, CANONICAL), [0.4, 1.0])
    np.testing.assert_array_equal(project_mibox([0.4, 0.0], 1, 1, CANONICAL), [0.4, 1.0])
    np.testing.assert_array_equal(project_mibox([1.7, -0.2, 0.49], 1, 2, ZERO_ONE), [1.0, 0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        project_mibox([0.0], 1, 1, CANONICAL)


def test_phase1_fixed_point():
    # min 1/2 |xi|^2 over xi1 + xi2 = 0: optimum 0 with zero multiplier
    A = sp.csc_matrix([[1.0, 1.0]])
    Pt = sp.csc_matrix(np.eye(2))
    rho = 2.0
    kkt = build_kkt(Pt, A, rho)
    s = IterateState(np.zeros(2), np.zeros(2), np.zeros(2))
    s2 = phase1_step(s, kkt, np.zeros(2), [0.0], rho, 2, CANONICAL)
    assert np.max(np.abs(s2.xi)) <= 1e-10 and np.max(np.abs(s2.u)) <= 1e-10


def test_phase1_dense_single_step(rng):
    Pt = np.array([[2.0, 0.5], [0.5, 1.0]])
    A = np.array([[1.0, -1.0]])
    b = np.array([0.2])
    qt = np.array([0.3, -0.1])
    rho = 3.0
    s = IterateState(np.zeros(2), np.array([0.1, 1.0]), np.array([0.05, -0.2]))
    s2 = phase1_step(s, build_kkt(sp.csc_matrix(Pt), sp.csc_matrix(A), rho), qt, b, rho, 1, CANONICAL)
    K = np.block([[Pt + rho * np.eye(2), A.T], [A, np.zeros((1, 1))]])
    xi = np.linalg.solve(K, np.r_[-qt + rho * (s.zeta - s.u), b])[:2]
    zeta = np.array([np.clip(xi[0] + s.u[0], -1, 1), 1.0 if xi[1] + s.u[1] >= 0 else -1.0])
    np.testing.assert_allclose(s2.xi, xi, atol=1e-12)
    np.testing.assert_array_equal(s2.zeta, zeta)
    np.testing.assert_array_equal(s2.u, s.u + (s2.xi - s2.zeta))


def test_phase2_examples():
    A = sp.csc_matrix([[1.0, 0.0]])
    aat = factorize_sym(A @ A.T)
    s = IterateState(np.zeros(2), np.array([3.0, 4.0]), np.zeros(2))
    np.testing.assert_allclose(phase2_step(s, aat, A, [0.0], 2, ZERO_ONE).xi, [0.0, 4.0])
    np.testing.assert_allclose(project_affine([0.0, 4.0], aat, A, [0.0]), [0.0, 4.0])


def test_phase2_matches_least_squares(rng):
    A = rng.normal(size=(3, 8))
    b = rng.normal(size=3)
    As = sp.csc_matrix(A)
    aat = factorize_sym(As @ As.T)
    for _ in range(100):
        v = rng.normal(size=8)
        xi = project_affine(v, aat, As, b)
        ref = v - np.linalg.lstsq(A, A @ v - b, rcond=None)[0]
        assert np.max(np.abs(A @ xi - b)) <= 1e-10
        assert np.max(np.abs(xi - ref)) <= 1e-10


def test_binflip_no_fractionality_no_flip(rng):
    z = np.array([0.3, 1.0, -1.0])
    assert np.array_equal(binflip(z, z, PERTURB, rng, 1, CANONICAL), z)


def test_binflip_restart_forced():
    xi = np.array([0.0, 0.6, -0.6])
    zeta = np.array([0.0, -1.0, 1.0])  # f = 0.8 on both binaries
    out = binflip(xi, zeta, RESTART, RngStream(0), 1, CANONICAL)
    np.testing.assert_array_equal(out, [0.0, 1.0, -1.0])


def test_binflip_perturb_rate():
    n = 10_000
    xi = np.full(n, 0.25)
    zeta = np.zeros(n)
    out = binflip(xi, zeta, PERTURB, RngStream(1), 0, ZERO_ONE)
    assert abs(out.mean() - 0.25) <= 0.02


def test_binflip_unknown_mode(rng):
    with pytest.raises(InvalidParameter):
        binflip(np.zeros(2), np.zeros(2), "other", rng, 1, ZERO_ONE)


def test_detect_cycle_examples():
    buf = CycleBuffer(20)
    assert not detect_cycle(buf, 0.5, 1e-3)
    assert detect_cycle(buf, 0.5004, 1e-3)
    buf = CycleBuffer(20)
    assert not any(detect_cycle(buf, 1.0 - 0.01 * k, 1e-3) for k in range(60))
    assert len(buf) == 20


def test_params_validation():
    with pytest.raises(InvalidParameter):
        SolverParams(rho=0.0)
    with pytest.raises(InvalidParameter):
        SolverParams(k_ph1=-1)
    with pytest.raises(InvalidParameter):
        SolverParams(t_max=0.0)
    assert SolverParams().qp_iterations == 100_000
    assert SolverParams().replace(rho=3.0).rho == 3.0


# -- drivers -------------------------------------------------------------------


def test_convex_segment(backend):
    res = solve_convex_qp(SEGMENT, [[1.0]], [0.0], TIGHT)
    assert res.converged and abs(res.z[0]) <= 1e-6


def test_convex_box_projection(backend):
    B = box([-1.0, -1.0], [1.0, 1.0])
    res = solve_convex_qp(B, np.eye(2), [-2.0, -2.0], SolverParams(eps_p=1e-6, eps_d=1e-6))
    assert res.converged
    np.testing.assert_allclose(res.z, [1.0, 1.0], atol=1e-4)


def test_convex_rejects_binaries(rng):
    Z, _, _ = random_hz(rng, 2, 2, 1, 1)
    with pytest.raises(DomainError):
        solve_convex_qp(Z)


def test_convex_matches_active_set(backend, rng):
    for _ in range(10):
        n = int(rng.integers(2, 5))
        ng = int(rng.integers(1, n + 1))
        nc = int(rng.integers(0, ng))
        Z, _, _ = random_hz(rng, n, ng, 0, nc)
        B = rng.normal(size=(n, n))
        P = B @ B.T + 0.5 * np.eye(n)
        q = rng.normal(size=n)
        res = solve_convex_qp(Z, P, q, TIGHT)
        obj = condense_objective(Z, P, q)
        ref = active_set_qp(obj.P.toarray(), obj.q, Z.A.toarray(), Z.b, -1.0, 1.0) + obj.const
        assert res.converged
        assert abs(res.objective - ref) <= 1e-4


def test_admm_fp_convex_problem_matches_qp(backend, rng):
    Z = box([-1.0, -2.0], [1.0, 2.0])
    P, q = np.eye(2), np.array([-0.5, 3.0])
    params = SolverParams(eps_p=1e-6, eps_d=1e-6)
    a = admm_fp(Z, P, q, params)
    b = solve_convex_qp(Z, P, q, params)
    assert a.converged and b.converged
    assert abs(a.objective - b.objective) <= 1e-3


def test_admm_fp_random_milps_verified(backend):
    params = SolverParams(t_max=5.0)
    for seed in range(5):
        Z, q, _ = random_instance(seed, n=8, n_Gc=12, n_Gb=4, n_C=4, density=0.5)
        res = admm_fp(Z, None, q, params)
        assert res.converged
        chk = check_factors(Z, res.xi, res.zeta)
        assert chk.ok(1e-3, params.eps_p)
        assert res.qp_iterations > 0


def test_admm_fp_state_invariants(backend):
    Z, q, _ = random_instance(3, n=6, n_Gc=8, n_Gb=3, n_C=3, density=0.6)
    for k in (1, 2, 5, 17, 60):
        res = admm_fp(Z, None, q, SolverParams(k_ph1=k, k_ph2=0, eps_p=1e-12))
        lo, hi = Z.bounds
        assert np.all(res.zeta[: Z.n_Gc] >= lo) and np.all(res.zeta[: Z.n_Gc] <= hi)
        assert np.all(np.isin(res.zeta[Z.n_Gc:], (lo, hi)))
        assert np.max(np.abs(Z.A @ res.xi - Z.b)) <= 1e-9


def test_compiled_loop_matches_reference_steps(backend):
    Z, q, _ = random_instance(11, n=6, n_Gc=8, n_Gb=3, n_C=3, density=0.6)
    rho = 10.0
    rng = np.random.default_rng(4)
    zeta0 = project_mibox(rng.uniform(-1, 1, Z.n_G), Z.n_Gc, Z.n_Gb, Z.form)
    u0 = 0.1 * rng.normal(size=Z.n_G)
    K = 40
    params = SolverParams(rho=rho, k_ph1=K, k_ph2=0, eps_p=1e-14, l_buf=0, k_restart=10**9)
    res = admm_fp(Z, None, q, params, init=(zeta0, u0))
    assert res.status == Status.ITER_LIMIT and res.iterations == K
    obj = condense_objective(Z, None, q)
    kkt = build_kkt(obj.P, Z.A, rho)
    s = IterateState(zeta0.copy(), zeta0.copy(), u0.copy())
    for _ in range(K):
        s_new = phase1_step(s, kkt, obj.q, Z.b, rho, Z.n_Gc, Z.form)
        assert np.array_equal(s_new.u - s.u, s_new.xi - s_new.zeta) or \
            np.max(np.abs((s_new.u - s.u) - (s_new.xi - s_new.zeta))) <= 1e-15
        s = s_new
    np.testing.assert_allclose(res.xi, s.xi, atol=1e-9)
    np.testing.assert_array_equal(res.zeta[Z.n_Gc:], s.zeta[Z.n_Gc:])
    np.testing.assert_allclose(res.u, s.u, atol=1e-9)


def test_backends_produce_identical_runs():
    if "cython" not in _backend.available_backends():
        pytest.skip("compiled kernel not built")
    Z, q, _ = random_instance(5, n=10, n_Gc=20, n_Gb=6, n_C=6, density=0.4)
    params = SolverParams(k_restart=50, l_buf=5, eps_buf=1e-2)
    a = admm_fp(Z, None, q, params.replace(backend="cython"))
    b = admm_fp(Z, None, q, params.replace(backend="python"))
    assert a.status == b.status
    assert a.iterations == b.iterations
    assert (a.n_perturb, a.n_restart) == (b.n_perturb, b.n_restart)
    np.testing.assert_allclose(a.xi, b.xi, atol=1e-9)
    np.testing.assert_array_equal(a.zeta[Z.n_Gc:], b.zeta[Z.n_Gc:])


def test_same_seed_same_result(backend):
    Z, q, _ = random_instance(2, n=10, n_Gc=20, n_Gb=6, n_C=6, density=0.4)
    a = admm_fp(Z, None, q, SolverParams(seed=3))
    b = admm_fp(Z, None, q, SolverParams(seed=3))
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.zeta, b.zeta)


def test_time_limit_status():
    Z, q, _ = random_instance(0, n=30, n_Gc=60, n_Gb=20, n_C=20, density=0.3)
    res = admm_fp(Z, None, q, SolverParams(t_max=1e-6))
    assert res.status == Status.TIME_LIMIT
    assert not res.converged


def test_iteration_limit_status():
    Z, q, _ = random_instance(0, n=10, n_Gc=20, n_Gb=8, n_C=8, density=0.4)
    res = admm_fp(Z, None, q, SolverParams(k_ph1=3, k_ph2=3, eps_p=1e-14, qp_max_iter=100000))
    assert res.status == Status.ITER_LIMIT
    assert res.iterations == 6


def test_infeasible_relaxation_reports_iter_limit():
    # x1 + x2 = 5 has no solution in the unit box
    Z = HybridZonotope(np.eye(2), [[0.0], [0.0]], np.zeros(2), [[1.0, 1.0]], [[0.0]], [5.0])
    res = admm_fp(Z, None, None, SolverParams(k_ph1=200, k_ph2=200))
    assert not res.converged
    assert "relaxation" in res.message


def test_warm_start_shape_check():
    Z, q, _ = random_instance(0, n=4, n_Gc=4, n_Gb=2, n_C=2, density=0.5)
    with pytest.raises(DimensionMismatch):
        admm_fp(Z, None, q, init=(np.zeros(3), np.zeros(3)))


def test_warm_start_point_inside(rng):
    Z, xc, xb = random_hz(rng, 3, 4, 2, 1)
    z = Z.point_from_factors(xc, xb)
    params = SolverParams(eps_p=1e-6, eps_d=1e-6)
    zeta, u, res = warm_start_from_point(Z, z, params, return_result=True)
    assert res.converged
    assert np.max(np.abs(Z.G @ zeta + Z.c - z)) <= 1e-3
    assert zeta.shape == u.shape == (Z.n_G,)


def test_warm_start_point_far_away(rng):
    Z, _, _ = random_hz(rng, 2, 4, 1, 1)
    params = SolverParams(eps_p=1e-7, eps_d=1e-7)
    zeta, _, res = warm_start_from_point(Z, [50.0, -40.0], params, return_result=True)
    assert res.converged
    assert np.all(np.abs(zeta) <= 1.0)
    assert np.max(np.abs(Z.A @ res.xi - Z.b)) <= 1e-8
    assert np.max(np.abs(res.xi - zeta)) <= 1e-7


def test_warm_start_dimension_check():
    with pytest.raises(DimensionMismatch):
        warm_start_from_point(SEGMENT, [1.0, 2.0])


def test_result_fields(backend):
    res = solve_convex_qp(SEGMENT, [[1.0]], [0.5], TIGHT)
    assert res.wall_time >= 0.0
    assert math.isfinite(res.r_d)
    assert res.objective == pytest.approx(-0.125, abs=1e-6)
