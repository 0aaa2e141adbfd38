"""Two-lane behavior and motion planning in road-aligned coordinates.

State ``x = (s, d, s', d')`` with ``s`` along the road and ``d`` lateral
(positive toward the right lane); input ``u = (s'', w)`` where ``w`` is a
small lateral acceleration added to a lane-tracking controller. Mode 1
tracks the right lane and is valid while ``d' >= 0``; mode 2 tracks the left
lane and is valid while ``d' <= 0``. In both, the heading is limited by
``|d'| <= tan(30 deg) s'``.

Other vehicles drive at constant speed in their lanes; the free space at
step ``k`` is the union of unoccupied lane segments.
"""

from dataclasses import dataclass

import numpy as np

from hzplan.kernel import RngStream
from hzplan.reach import CostSpec, PWAMode, PWASystem, build_problem
from hzplan.solver import SolverParams
from hzplan.unions import union_zonotope
from hzplan.zonotope import ZERO_ONE, box, cartesian_product, constrained_zonotope, point

K_D = 0.213
K_DDOT = 0.653
S_MAX = 10.5
D_MAX = 0.51
LANE_WIDTH = D_MAX
D_RIGHT = 0.5 * LANE_WIDTH
D_LEFT = -0.5 * LANE_WIDTH
W_MAX = 0.01
ACC_MAX = 1.0
V_MAX = 1.0
TAN_HEADING = np.tan(np.deg2rad(30.0))
V_REF = 0.5
DT = 1.0
HORIZON = 15
CAR_HALF_GAP = 0.6

PARAMS = SolverParams(rho=100.0, eps_p=0.01, k_restart=1000, k_ph1=5000, eps_d=0.1, t_max=1.0)


def open_loop(dt=DT):
    I2 = np.eye(2)
    A = np.block([[I2, dt * I2], [np.zeros((2, 2)), I2]])
    B = np.vstack([0.5 * dt * dt * I2, dt * I2])
    return A, B


def gain():
    return np.array([[0.0, 0.0, 0.0, 0.0], [0.0, K_D, 0.0, K_DDOT]])


def closed_loop(d_lane, dt=DT):
    """``(A - B K, B, B K [0, d_lane, 0, 0])`` for a lane center ``d_lane``."""
    A, B = open_loop(dt)
    K = gain()
    return A - B @ K, B, B @ K @ np.array([0.0, d_lane, 0.0, 0.0])


def velocity_triangle(sign):
    """``{(s', d') : 0 <= s' <= V_MAX, 0 <= sign d' <= tan30 s'}`` in 01-form.

    Written as ``v0 + l1 (v1 - v0) + l2 (v2 - v0)`` with
    ``l1 + l2 + l3 = 1`` over ``[0, 1]^3``.
    """
    v0 = np.zeros(2)
    v1 = np.array([V_MAX, 0.0])
    v2 = np.array([V_MAX, sign * V_MAX * TAN_HEADING])
    G = np.column_stack([v1 - v0, v2 - v0, np.zeros(2)])
    return constrained_zonotope(G, v0, np.ones((1, 3)), [1.0], ZERO_ONE)


def velocity_bounds():
    """Both triangles together: ``0 <= s' <= V_MAX``, ``|d'| <= tan30 s'``."""
    v1 = np.array([V_MAX, -V_MAX * TAN_HEADING])
    v2 = np.array([V_MAX, V_MAX * TAN_HEADING])
    G = np.column_stack([v1, v2, np.zeros(2)])
    return constrained_zonotope(G, np.zeros(2), np.ones((1, 3)), [1.0], ZERO_ONE)


def position_bounds():
    return box([0.0, -D_MAX], [S_MAX, D_MAX], ZERO_ONE)


def input_bounds():
    return box([-ACC_MAX, -W_MAX], [ACC_MAX, W_MAX], ZERO_ONE)


def system():
    modes = []
    for d_lane, sign in ((D_RIGHT, 1.0), (D_LEFT, -1.0)):
        A, B, f = closed_loop(d_lane)
        dom = cartesian_product(cartesian_product(position_bounds(), velocity_triangle(sign)),
                                input_bounds())
        modes.append(PWAMode(A, B, f, dom))
    S_bar = cartesian_product(position_bounds(), velocity_bounds())
    return PWASystem(tuple(modes), S_bar, input_bounds())


@dataclass(frozen=True)
class Vehicle:
    lane: float
    s0: float
    speed: float

    def s(self, k):
        return self.s0 + self.speed * k * DT


def random_vehicles(rng, count=2, ego_lane=D_RIGHT):
    """Vehicles with ``s0 ~ U[0, V_MAX dt N]`` and speed ``~ N(0.2, 0.1)``.

    Lanes alternate right/left. A draw that overlaps the ego vehicle at
    ``k = 0`` in its own lane is redrawn.
    """
    out = []
    for i in range(count):
        lane = D_RIGHT if i % 2 == 0 else D_LEFT
        while True:
            s0 = float(rng.uniform(0.0, V_MAX * DT * HORIZON))
            speed = max(float(rng.normal(0.2, 0.1)), 0.0)
            if lane != ego_lane or abs(s0) > CAR_HALF_GAP:
                break
        out.append(Vehicle(lane, s0, speed))
    return out


def free_segments(vehicles, k):
    """Unoccupied ``(lo, hi)`` boxes over ``(s, d)`` at step ``k``."""
    boxes = []
    for lane_lo, lane_hi, lane in ((0.0, D_MAX, D_RIGHT), (-D_MAX, 0.0, D_LEFT)):
        blocked = sorted((v.s(k) - CAR_HALF_GAP, v.s(k) + CAR_HALF_GAP)
                         for v in vehicles if v.lane == lane)
        s = 0.0
        for a, b in blocked:
            if a > s:
                boxes.append((np.array([s, lane_lo]), np.array([min(a, S_MAX), lane_hi])))
            s = max(s, b)
            if s >= S_MAX:
                break
        if s < S_MAX:
            boxes.append((np.array([s, lane_lo]), np.array([S_MAX, lane_hi])))
    return [(lo, hi) for lo, hi in boxes if hi[0] - lo[0] > 1e-9]


@dataclass
class Behavior:
    problem: object
    vehicles: list
    segments: list
    x0: np.ndarray
    seed: int

    def trajectory(self, z):
        lay = self.problem.layout
        return lay.states(z), lay.inputs(z)


def build(seed=0, n_vehicles=2, union_kind="condensed"):
    """Build the lifted behavior-planning problem for one random scenario."""
    rng = RngStream(seed)
    vehicles = random_vehicles(rng, n_vehicles)
    sys = system()
    v_set = velocity_bounds()
    segments, F = [], []
    for k in range(1, HORIZON + 1):
        segs = free_segments(vehicles, k)
        segments.append(segs)
        P_k = union_zonotope([box(lo, hi, ZERO_ONE) for lo, hi in segs])
        F.append(cartesian_product(P_k, v_set))
    x0 = np.array([0.0, D_RIGHT, V_REF, 0.0])
    x_ref = np.array([[V_REF * k * DT, D_RIGHT, V_REF, 0.0] for k in range(1, HORIZON + 1)])
    cost = CostSpec(np.diag([0.5, 0.5, 0.0, 0.0]), 10.0 * np.eye(2), 10.0 * np.eye(4), x_ref)
    problem = build_problem(sys, point(x0, ZERO_ONE), F, cost, union_kind)
    return Behavior(problem, vehicles, segments, x0, seed)


def mode_domain_ok(x, u, sign, tol):
    """Direct inequality test of ``(x, u)`` against one mode's domain."""
    s, d, sd, dd = x
    return bool(
        -tol <= s <= S_MAX + tol and abs(d) <= D_MAX + tol
        and sd <= V_MAX + tol and sign * dd >= -tol
        and sign * dd <= TAN_HEADING * sd + tol
        and abs(u[0]) <= ACC_MAX + tol and abs(u[1]) <= W_MAX + tol
    )


def verify(scn, z, tol=0.02):
    """Per-stage checks: some mode contains ``(x_k, u_k)`` and reproduces
    ``x_{k+1}``; every ``(s_k, d_k)`` lies in a free segment of step ``k``."""
    from hzplan.scenarios.verify import in_boxes

    X, U = scn.trajectory(z)
    modes = []
    dyn_ok = True
    for k in range(len(U)):
        found = None
        for idx, (d_lane, sign) in enumerate(((D_RIGHT, 1.0), (D_LEFT, -1.0))):
            A, B, f = closed_loop(d_lane)
            resid = np.max(np.abs(X[k + 1] - (A @ X[k] + B @ U[k] + f)))
            if mode_domain_ok(X[k], U[k], sign, tol) and resid <= tol:
                found = idx
                break
        modes.append(found)
        dyn_ok &= found is not None
    free_ok = all(in_boxes(X[k][:2], scn.segments[k - 1], tol) for k in range(1, len(X)))
    start_err = float(np.max(np.abs(X[0] - scn.x0)))
    return {"modes": modes, "domains": bool(dyn_ok), "free_space": bool(free_ok),
            "start_error": start_err,
            "ok": bool(dyn_ok and free_ok and start_err <= tol)}
