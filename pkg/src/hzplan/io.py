"""File formats: problem JSON, run-report CSV and trajectory JSON.

Floats are written with Python's shortest round-trip representation, so a
saved problem reloads bit-for-bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from hzplan.errors import MalformedInput
from hzplan.kernel import from_triplets
from hzplan.zonotope import CANONICAL, ZERO_ONE, HybridZonotope

REPORT_SCHEMA = "hzplan-runreport v1"
REPORT_COLUMNS = ("instance_id", "seed", "status", "iters", "iters_ph1", "wall_s",
                  "r_p", "objective", "verified")


# ---------------------------------------------------------------------------
# problem files


@dataclass(frozen=True, eq=False)
class ProblemFile:
    """A hybrid zonotope with an optional quadratic objective."""

    Z: HybridZonotope
    P: sp.csc_matrix | None = None
    q: np.ndarray | None = None


def _float(v):
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {v!r} cannot be stored")
    return v


def _triplets(M):
    M = sp.coo_matrix(M)
    order = np.lexsort((M.row, M.col))
    trip = [[int(M.row[i]), int(M.col[i]), _float(M.data[i])] for i in order]
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "triplets": trip}


def problem_to_dict(Z, P=None, q=None):
    """JSON-ready dict of a set and optional objective."""
    doc = {
        "form": Z.form,
        "n": int(Z.n),
        "Gc": _triplets(Z.Gc),
        "Gb": _triplets(Z.Gb),
        "c": [_float(v) for v in Z.c],
        "Ac": _triplets(Z.Ac),
        "Ab": _triplets(Z.Ab),
        "b": [_float(v) for v in Z.b],
    }
    if P is not None:
        doc["P"] = _triplets(P)
    if q is not None:
        doc["q"] = [_float(v) for v in np.asarray(q).reshape(-1)]
    return doc


def dumps_problem(Z, P=None, q=None):
    return json.dumps(problem_to_dict(Z, P, q), indent=1) + "\n"


def save_problem(path, Z, P=None, q=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_problem(Z, P, q))


def _need(doc, key, where):
    if key not in doc:
        raise MalformedInput(f"{where}: missing field {key!r}")
    return doc[key]


def _as_int(v, where):
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise MalformedInput(f"{where}: expected a non-negative integer, got {v!r}")
    return v


def _as_number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedInput(f"{where}: expected a number, got {v!r}")
    return float(v)


def _vector(doc, key, length=None):
    v = _need(doc, key, "document")
    if not isinstance(v, list):
        raise MalformedInput(f"{key}: expected a list of numbers")
    out = np.array([_as_number(x, f"{key}[{i}]") for i, x in enumerate(v)], dtype=float)
    if length is not None and out.shape[0] != length:
        raise MalformedInput(f"{key}: expected length {length}, got {out.shape[0]}")
    return out


def _matrix(doc, key, rows=None):
    m = _need(doc, key, "document")
    if not isinstance(m, dict):
        raise MalformedInput(f"{key}: expected an object with rows/cols/triplets")
    r = _as_int(_need(m, "rows", key), f"{key}.rows")
    c = _as_int(_need(m, "cols", key), f"{key}.cols")
    if rows is not None and r != rows:
        raise MalformedInput(f"{key}.rows: expected {rows}, got {r}")
    trip = _need(m, "triplets", key)
    if not isinstance(trip, list):
        raise MalformedInput(f"{key}.triplets: expected a list")
    ri, ci, vi = [], [], []
    for k, t in enumerate(trip):
        where = f"{key}.triplets[{k}]"
        if not isinstance(t, list) or len(t) != 3:
            raise MalformedInput(f"{where}: expected [row, col, value]")
        i, j = _as_int(t[0], where + "[0]"), _as_int(t[1], where + "[1]")
        if i >= r or j >= c:
            raise MalformedInput(f"{where}: index ({i}, {j}) outside {r}x{c}")
        ri.append(i)
        ci.append(j)
        vi.append(_as_number(t[2], where + "[2]"))
    return from_triplets(ri, ci, vi, (r, c))


def problem_from_dict(doc):
    """Inverse of :func:`problem_to_dict`; raises MalformedInput with a field path."""
    if not isinstance(doc, dict):
        raise MalformedInput("document: expected a JSON object")
    form = _need(doc, "form", "document")
    if form not in (CANONICAL, ZERO_ONE):
        raise MalformedInput(f"form: expected 'canonical' or '01', got {form!r}")
    n = _as_int(_need(doc, "n", "document"), "n")
    Gc = _matrix(doc, "Gc", n)
    Gb = _matrix(doc, "Gb", n)
    c = _vector(doc, "c", n)
    b = _vector(doc, "b")
    Ac = _matrix(doc, "Ac", b.shape[0])
    Ab = _matrix(doc, "Ab", b.shape[0])
    if Ac.shape[1] != Gc.shape[1]:
        raise MalformedInput(f"Ac.cols: expected {Gc.shape[1]}, got {Ac.shape[1]}")
    if Ab.shape[1] != Gb.shape[1]:
        raise MalformedInput(f"Ab.cols: expected {Gb.shape[1]}, got {Ab.shape[1]}")
    P = _matrix(doc, "P", n) if "P" in doc else None
    if P is not None and P.shape[1] != n:
        raise MalformedInput(f"P.cols: expected {n}, got {P.shape[1]}")
    q = _vector(doc, "q", n) if "q" in doc else None
    try:
        Z = HybridZonotope(Gc, Gb, c, Ac, Ab, b, form)
    except ValueError as exc:
        raise MalformedInput(f"document: {exc}") from None
    return ProblemFile(Z, P, q)


def loads_problem(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(doc)


def load_problem(path):
    with open(path, encoding="utf-8") as fh:
        return loads_problem(fh.read())


# ---------------------------------------------------------------------------
# run reports


def _cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(instance_id, seed, result, verified):
    """Report fields for one solver result."""
    return {
        "instance_id": instance_id,
        "seed": seed,
        "status": result.status.value,
        "iters": result.iterations,
        "iters_ph1": result.phase1_iterations,
        "wall_s": float(result.wall_time),
        "r_p": float(result.r_p),
        "objective": float(result.objective),
        "verified": bool(verified),
    }


def dumps_report(rows):
    buf = io.StringIO()
    buf.write(f"# {REPORT_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        w.writerow([_cell(row[k]) for k in REPORT_COLUMNS])
    return buf.getvalue()


def write_report(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_report(rows))


def read_report(path):
    """Rows of a report as dicts of strings; checks the schema line and header."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != f"# {REPORT_SCHEMA}":
            raise MalformedInput(f"line 1: expected schema comment '# {REPORT_SCHEMA}'")
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != REPORT_COLUMNS:
            raise MalformedInput("line 2: unexpected report header")
        return [dict(zip(REPORT_COLUMNS, r)) for r in reader]


# ---------------------------------------------------------------------------
# trajectories


def trajectory_records(states, inputs):
    """``[{k, x, u}, ...]``; the final stage has ``u = None``."""
    out = []
    for k, x in enumerate(states):
        u = [_float(v) for v in inputs[k]] if k < len(inputs) else None
        out.append({"k": k, "x": [_float(v) for v in x], "u": u})
    return out


def dumps_trajectory(states, inputs):
    return json.dumps(trajectory_records(states, inputs), indent=1) + "\n"


def write_trajectory(path, states, inputs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_trajectory(states, inputs))


def load_trajectory(path):
    """``(states, inputs)`` arrays from a trajectory file."""
    try:
        with open(path, encoding="utf-8") as fh:
            recs = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(recs, list) or not recs:
        raise MalformedInput("trajectory: expected a non-empty list of stage records")
    states, inputs = [], []
    for i, r in enumerate(recs):
        if not isinstance(r, dict) or r.get("k") != i or "x" not in r:
            raise MalformedInput(f"trajectory[{i}]: expected {{k: {i}, x: [...], u: ...}}")
        states.append([_as_number(v, f"trajectory[{i}].x") for v in r["x"]])
        if i < len(recs) - 1:
            u = r.get("u")
            if not isinstance(u, list):
                raise MalformedInput(f"trajectory[{i}].u: expected a list")
            inputs.append([_as_number(v, f"trajectory[{i}].u") for v in u])
    return np.array(states, dtype=float), np.array(inputs, dtype=float).reshape(len(states) - 1, -1)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
