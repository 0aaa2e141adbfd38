"""Compare the compiled and pure-Python kernel backends.

Times the sparse LDL^T factorization, repeated triangular solves and full
solver runs on the bundled scenarios, and checks that both backends return
identical iterates.

    python benchmarks/bench_backends.py [--repeat 3] [--quick]
"""

import argparse
import statistics
import time

import numpy as np

from hzplan import _backend
from hzplan.kernel import factorize_sym, solve_sym
from hzplan.scenarios import behavior as bh
from hzplan.scenarios import reach_avoid as ra
from hzplan.scenarios.random_milp import instances
from hzplan.solver import SolverParams, admm_fp, condense_objective, kkt_matrix


def _time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def cases(quick):
    milps = instances(3 if quick else 10, 0)
    ra_scn = ra.build(seed=1)
    bh_scn = bh.build(seed=2)
    K = kkt_matrix(condense_objective(bh_scn.problem.Z, bh_scn.problem.P, bh_scn.problem.q).P,
                   bh_scn.problem.Z.A, 100.0)
    n_primal = bh_scn.problem.Z.n_G
    rhs = np.random.default_rng(0).normal(size=K.shape[0])

    def factor(backend):
        return factorize_sym(K, n_primal, backend=backend)

    def solves(backend):
        f = factorize_sym(K, n_primal, backend=backend)
        for _ in range(200):
            x = solve_sym(f, rhs, backend=backend)
        return x

    def milp(backend):
        p = SolverParams(t_max=10.0, backend=backend)
        return [admm_fp(Z, None, q, p).zeta for Z, q, _ in milps]

    def reach(backend):
        pr = ra_scn.problem
        return admm_fp(pr.Z, pr.P, pr.q, ra.PARAMS.replace(t_max=60.0, backend=backend)).zeta

    def behavior(backend):
        pr = bh_scn.problem
        return admm_fp(pr.Z, pr.P, pr.q, bh.PARAMS.replace(t_max=60.0, backend=backend)).zeta

    return [
        (f"KKT factorization (dim {K.shape[0]})", factor, False),
        ("200 KKT solves", solves, True),
        (f"{len(milps)} random MILPs", milp, True),
        ("reach-avoid f_s=1", reach, True),
        ("behavior planning", behavior, True),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="fewer random instances")
    args = ap.parse_args(argv)
    names = _backend.available_backends()
    if "cython" not in names:
        print("compiled backend not built; only the Python backend is available")
    print(f"{'case':<34}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'same':>6}")
    for label, fn, compare in cases(args.quick):
        times, outs = [], []
        for name in names:
            t, out = _time(lambda: fn(name), args.repeat)
            times.append(t)
            outs.append(out)
        speed = f"{times[-1] / times[0]:>9.1f}x" if len(names) == 2 else f"{'-':>10}"
        if compare and len(outs) == 2:
            a, b = (np.concatenate(o) if isinstance(o, list) else o for o in outs)
            same = "yes" if np.array_equal(a, b) else "no"
        else:
            same = "-"
        print(f"{label:<34}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + f"{speed}{same:>6}")


if __name__ == "__main__":
    main()
