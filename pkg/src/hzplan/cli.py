"""Command-line harness for the desk-scale experiments.

Every command writes its data files into ``--out`` and a ``meta.json`` that
holds the only non-reproducible content (timestamps, backend). Exit codes:
0 on success, 1 on a build or solve failure, 2 on bad arguments or a
malformed input file.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys

import numpy as np

from hzplan import _backend
from hzplan import io as hio
from hzplan.errors import HZError, MalformedInput
from hzplan.kernel import RngStream
from hzplan.scenarios.verify import check_factors
from hzplan.solver import SolverParams, admm_fp, solve_convex_qp, warm_start_from_point
from hzplan.zonotope import complexity

COMPLEXITY_COLUMNS = ("step", "n", "n_Gc", "n_Gb", "n_C", "nnz_G", "nnz_A")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p, union=True):
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--rho", type=float, default=None, help="ADMM penalty")
    p.add_argument("--eps-p", type=float, default=None, help="primal residual tolerance")
    p.add_argument("--t-max", type=float, default=None, help="time limit per solve [s]")
    if union:
        p.add_argument("--union", choices=("sharp", "condensed", "zonotope"),
                       default="condensed", help="union identity for mode graphs")
    p.add_argument("--out", default=".", help="output directory")


def build_parser():
    parser = _Parser(prog="hzplan", description="Hybrid-zonotope planning experiments.")
    parser.add_argument("--backend", choices=("cython", "python"), default=None,
                        help="kernel backend (default: compiled when available)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("two-equilibrium", help="set-complexity growth of the two-mode example")
    p.add_argument("--steps", type=int, default=15)
    p.add_argument("--lifted", action="store_true", help="build the lifted set Z_N")
    p.add_argument("--constrained", action="store_true",
                   help="intersect each step with the state box (lifted only)")
    _common(p)

    p = sub.add_parser("random-milp", help="ADMM-FP on random feasible MILPs")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--n-gc", type=int, default=40)
    p.add_argument("--n-gb", type=int, default=10)
    p.add_argument("--n-c", type=int, default=10)
    p.add_argument("--density", type=float, default=0.3)
    _common(p, union=False)

    p = sub.add_parser("reach-avoid", help="double-integrator reach-avoid")
    p.add_argument("--fs", type=int, default=1, help="horizon factor (dt = 2/fs, N = 10 fs)")
    p.add_argument("--count", type=int, default=1, help="number of consecutive seeds")
    _common(p)

    p = sub.add_parser("behavior", help="two-lane behavior and motion planning")
    p.add_argument("--count", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--warm-start", default=None, metavar="FILE",
                   help="prior plan (trajectory JSON) used as a warm start")
    p.add_argument("--perturb", type=float, default=0.0,
                   help="std of Gaussian noise added to the warm-start plan")
    _common(p)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("problem", help="problem JSON file")
    _common(p, union=False)
    return parser


def _params(args, base):
    kw = {"seed": args.seed}
    if args.rho is not None:
        kw["rho"] = args.rho
    if args.eps_p is not None:
        kw["eps_p"] = args.eps_p
    if args.t_max is not None:
        kw["t_max"] = args.t_max
    return base.replace(**kw)


def _write_meta(out, args, extra=None):
    meta = {
        "command": args.command,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "backend": _backend.backend_name(),
    }
    meta.update(extra or {})
    hio.write_json(os.path.join(out, "meta.json"), meta)


def _write_complexity(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(COMPLEXITY_COLUMNS) + "\n")
        for step, cx in rows:
            fh.write(",".join(str(v) for v in (step, *cx.as_tuple())) + "\n")


def cmd_two_equilibrium(args):
    from hzplan.scenarios import two_equilibrium as te

    if args.steps < 1:
        raise ValueError("--steps must be at least 1")
    if args.lifted:
        prob = te.lifted_problem(args.steps, args.union, args.constrained)
        Z = prob.Z
        rows = [(args.steps, complexity(Z))]
        hio.save_problem(os.path.join(args.out, "set.json"), Z, prob.P, prob.q)
    else:
        sets = te.reachable_sets(args.steps, args.union)
        Z = sets[-1]
        rows = [(k, complexity(X)) for k, X in enumerate(sets)]
        hio.save_problem(os.path.join(args.out, "set.json"), Z)
    _write_complexity(os.path.join(args.out, "complexity.csv"), rows)
    print(" ".join(f"{k}={v}" for k, v in zip(COMPLEXITY_COLUMNS[1:], rows[-1][1].as_tuple())))
    return 0


def cmd_random_milp(args):
    from hzplan.scenarios.random_milp import instances

    if min(args.count, args.n, args.n_gc, args.n_gb, args.n_c) < 1:
        raise ValueError("counts must be positive")
    params = _params(args, SolverParams(t_max=1.0))
    insts = instances(args.count, args.seed, n=args.n, n_Gc=args.n_gc, n_Gb=args.n_gb,
                      n_C=args.n_c, density=args.density)
    rows = []
    for i, (Z, q, _) in enumerate(insts):
        res = admm_fp(Z, None, q, params)
        ok = res.converged and check_factors(Z, res.xi, res.zeta).ok(1e-3, params.eps_p)
        rows.append(hio.report_row(i, args.seed, res, ok))
    hio.write_report(os.path.join(args.out, "report.csv"), rows)
    _summary(rows)
    return 0


def _summary(rows):
    conv = sum(r["status"] == "Converged" for r in rows)
    ver = sum(bool(r["verified"]) for r in rows)
    print(f"{conv}/{len(rows)} converged, {ver}/{len(rows)} verified")


def cmd_reach_avoid(args):
    from hzplan.scenarios import reach_avoid as ra

    if args.fs < 1:
        raise ValueError("--fs must be at least 1")
    params = _params(args, ra.PARAMS)
    rows = []
    for i in range(args.count):
        seed = args.seed + i
        scn = ra.build(args.fs, seed, union_kind=args.union)
        pr = scn.problem
        res = admm_fp(pr.Z, pr.P, pr.q, params.replace(seed=seed))
        ok = res.converged and ra.verify(scn, res.z)["ok"]
        rows.append(hio.report_row(i, seed, res, ok))
        X, U = scn.trajectory(res.z)
        hio.write_trajectory(os.path.join(args.out, _traj_name(args.count, i)), X, U)
    hio.write_report(os.path.join(args.out, "report.csv"), rows)
    _summary(rows)
    return 0


def _traj_name(count, i):
    return "trajectory.json" if count == 1 else f"trajectory_{i}.json"


def cmd_behavior(args):
    from hzplan.scenarios import behavior as bh

    params = _params(args, bh.PARAMS)
    prior = hio.load_trajectory(args.warm_start) if args.warm_start else None
    rows = []
    for i in range(args.count):
        seed = args.seed + i
        scn = bh.build(seed, union_kind=args.union)
        pr = scn.problem
        init = None
        if prior is not None:
            z_star = _stack(prior, pr.layout)
            if args.perturb > 0:
                z_star = z_star + RngStream(seed).normal(0.0, args.perturb, z_star.shape[0])
            init = warm_start_from_point(pr.Z, z_star, params)
        res = admm_fp(pr.Z, pr.P, pr.q, params.replace(seed=seed), init=init)
        ok = res.converged and bh.verify(scn, res.z)["ok"]
        rows.append(hio.report_row(i, seed, res, ok))
        X, U = scn.trajectory(res.z)
        hio.write_trajectory(os.path.join(args.out, _traj_name(args.count, i)), X, U)
    hio.write_report(os.path.join(args.out, "report.csv"), rows)
    _summary(rows)
    return 0


def _stack(traj, layout):
    X, U = traj
    if X.shape != (layout.N + 1, layout.n_x) or U.shape != (layout.N, layout.n_u):
        raise MalformedInput(
            f"warm-start plan must have {layout.N + 1} states of size {layout.n_x} "
            f"and {layout.N} inputs of size {layout.n_u}")
    z = np.zeros(layout.size)
    for k in range(layout.N + 1):
        z[layout.x_slice(k)] = X[k]
    for k in range(layout.N):
        z[layout.u_slice(k)] = U[k]
    return z


def cmd_solve(args):
    pf = hio.load_problem(args.problem)
    params = _params(args, SolverParams())
    Z = pf.Z
    if Z.n_Gb == 0:
        res = solve_convex_qp(Z, pf.P, pf.q, params)
    else:
        res = admm_fp(Z, pf.P, pf.q, params)
    ok = res.converged and check_factors(Z, res.xi, res.zeta).ok(1e-3, params.eps_p)
    hio.write_json(os.path.join(args.out, "result.json"), {
        "status": res.status.value,
        "iterations": res.iterations,
        "phase1_iterations": res.phase1_iterations,
        "r_p": float(res.r_p),
        "objective": float(res.objective),
        "z": [float(v) for v in res.z],
        "xi": [float(v) for v in res.xi],
        "zeta": [float(v) for v in res.zeta],
    })
    rows = [hio.report_row(0, args.seed, res, ok)]
    hio.write_report(os.path.join(args.out, "report.csv"), rows)
    _summary(rows)
    return 0


COMMANDS = {
    "two-equilibrium": cmd_two_equilibrium,
    "random-milp": cmd_random_milp,
    "reach-avoid": cmd_reach_avoid,
    "behavior": cmd_behavior,
    "solve": cmd_solve,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    previous = _backend.backend_name()
    try:
        if args.backend:
            _backend.set_backend(args.backend)
        os.makedirs(args.out, exist_ok=True)
        code = COMMANDS[args.command](args)
        _write_meta(args.out, args)
        return code
    except (MalformedInput, FileNotFoundError) as exc:
        print(f"hzplan: error: {exc}", file=sys.stderr)
        return 2
    except (HZError, ValueError, OSError, ImportError) as exc:
        print(f"hzplan: error: {exc}", file=sys.stderr)
        return 1
    finally:
        _backend.set_backend(previous)


if __name__ == "__main__":
    sys.exit(main())
