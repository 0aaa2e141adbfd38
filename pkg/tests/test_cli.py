import json

import numpy as np
import pytest

from helpers import output_differences
from hzplan import io as hio
from hzplan.cli import main
from hzplan.scenarios.random_milp import random_instance
from hzplan.solver import SolverParams, admm_fp, solve_convex_qp
from hzplan.zonotope import box, constrained_zonotope


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_two_equilibrium_table_row(tmp_path, capsys):
    code, out = run(tmp_path, "a", "two-equilibrium", "--steps", "15")
    assert code == 0
    assert "n_Gc=92 n_Gb=30 n_C=75 nnz_G=12 nnz_A=442" in capsys.readouterr().out
    lines = (out / "complexity.csv").read_text().splitlines()
    assert lines[0] == "step,n,n_Gc,n_Gb,n_C,nnz_G,nnz_A"
    assert lines[-1] == "15,2,92,30,75,12,442"
    assert hio.load_problem(out / "set.json").Z.n_Gb == 30


def test_two_equilibrium_lifted_sharp(tmp_path, capsys):
    code, _ = run(tmp_path, "a", "two-equilibrium", "--lifted", "--constrained",
                  "--union", "sharp")
    assert code == 0
    assert "n=32 n_Gc=182 n_Gb=30 n_C=165 nnz_G=34 nnz_A=782" in capsys.readouterr().out


def test_two_equilibrium_one_step_increments(tmp_path):
    code, out = run(tmp_path, "a", "two-equilibrium", "--steps", "1")
    assert code == 0
    rows = [list(map(int, r.split(","))) for r in (out / "complexity.csv").read_text().splitlines()[1:]]
    delta = np.subtract(rows[1], rows[0])
    assert tuple(delta[2:5]) == (6, 2, 5)


def test_two_equilibrium_bad_steps(tmp_path, capsys):
    code, _ = run(tmp_path, "a", "two-equilibrium", "--steps", "0")
    assert code == 1
    assert "steps" in capsys.readouterr().err


def test_random_milp_report_and_determinism(tmp_path):
    args = ("random-milp", "--count", "5", "--seed", "9")
    code1, out1 = run(tmp_path, "a", *args)
    code2, out2 = run(tmp_path, "b", *args)
    assert code1 == code2 == 0
    rows = hio.read_report(out1 / "report.csv")
    assert len(rows) == 5
    assert all(r["status"] == "Converged" and r["verified"] == "1" for r in rows)
    assert output_differences(out1, out2) == []
    meta = json.loads((out1 / "meta.json").read_text())
    assert "created" in meta and meta["command"] == "random-milp"


def test_reach_avoid_writes_trajectory(tmp_path):
    code, out = run(tmp_path, "a", "reach-avoid", "--seed", "1")
    assert code == 0
    X, U = hio.load_trajectory(out / "trajectory.json")
    assert X.shape == (11, 4) and U.shape == (10, 2)
    assert hio.read_report(out / "report.csv")[0]["verified"] == "1"


def test_behavior_warm_start(tmp_path):
    code, cold = run(tmp_path, "cold", "behavior", "--seed", "2")
    assert code == 0
    code, warm = run(tmp_path, "warm", "behavior", "--seed", "2", "--warm-start",
                     str(cold / "trajectory.json"), "--perturb", "0.1")
    assert code == 0
    assert hio.read_report(warm / "report.csv")[0]["status"] == "Converged"


def test_behavior_warm_start_shape_mismatch(tmp_path):
    bad = tmp_path / "bad.json"
    hio.write_trajectory(bad, np.zeros((3, 4)), np.zeros((2, 2)))
    code, _ = run(tmp_path, "a", "behavior", "--warm-start", str(bad))
    assert code == 2


def test_solve_file_matches_memory(tmp_path):
    Z, q, _ = random_instance(4, n=8, n_Gc=12, n_Gb=4, n_C=4, density=0.5)
    path = tmp_path / "p.json"
    hio.save_problem(path, Z, None, q)
    code, out = run(tmp_path, "a", "solve", str(path), "--seed", "3")
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    mem = admm_fp(Z, None, q, SolverParams(seed=3))
    assert res["status"] == mem.status.value
    assert res["iterations"] == mem.iterations
    assert res["zeta"] == [float(v) for v in mem.zeta]


def test_solve_convex_file(tmp_path):
    Z = constrained_zonotope(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [0.5])
    path = tmp_path / "c.json"
    hio.save_problem(path, Z, np.eye(2), [1.0, -1.0])
    code, out = run(tmp_path, "a", "solve", str(path), "--eps-p", "1e-6")
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    mem = solve_convex_qp(Z, np.eye(2), [1.0, -1.0], SolverParams(eps_p=1e-6))
    np.testing.assert_array_equal(res["z"], mem.z)


def test_malformed_problem_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"form": "01",\n "n": }')
    code, _ = run(tmp_path, "a", "solve", str(path))
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_schema_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    doc = hio.problem_to_dict(box([0.0], [1.0]))
    doc["Gc"]["rows"] = 3
    path.write_text(json.dumps(doc))
    code, _ = run(tmp_path, "a", "solve", str(path))
    assert code == 2
    assert "Gc.rows" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    code, _ = run(tmp_path, "a", "solve", str(tmp_path / "nope.json"))
    assert code == 2


def test_bad_arguments_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["random-milp", "--count", "x"])
    assert exc.value.code == 2


def test_python_backend_flag(tmp_path):
    code, out = run(tmp_path, "a", "--backend", "python", "random-milp", "--count", "2")
    assert code == 0
    assert json.loads((out / "meta.json").read_text())["backend"] == "python"
