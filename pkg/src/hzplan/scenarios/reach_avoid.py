"""Double-integrator reach-avoid problem in a box-union free space.

State ``x = (p_x, p_y, v_x, v_y)``, input ``u = (a_x, a_y)``. The vehicle
starts near the origin, must end in a small neighbourhood of ``(10, 0)`` at
rest, and must keep its position inside the free space, a union of
axis-aligned boxes obtained by slicing the workspace around seeded
rectangular obstacles.
"""

from dataclasses import dataclass

import numpy as np

from hzplan.kernel import RngStream
from hzplan.reach import CostSpec, PWAMode, PWASystem, build_problem
from hzplan.solver import SolverParams
from hzplan.unions import union_zonotope
from hzplan.zonotope import (
    ZERO_ONE,
    box,
    cartesian_product,
    generalized_intersection,
    minkowski_sum,
    point,
    regular_polygon_zonotope,
)

WORKSPACE_LO = np.array([0.0, -5.0])
WORKSPACE_HI = np.array([10.0, 5.0])
X0 = np.array([0.1, 0.0, 0.1, 0.0])
GOAL = np.array([10.0, 0.0, 0.0, 0.0])

# Factor-space residuals scale by generator lengths (up to 10 m here), so the
# default tolerance is tightened to keep set-space errors below 1e-3.
PARAMS = SolverParams(eps_p=1e-5, t_max=5.0)


def dynamics(dt):
    """Discrete double integrator matrices ``(A, B)``."""
    I2 = np.eye(2)
    A = np.block([[I2, dt * I2], [np.zeros((2, 2)), I2]])
    B = np.vstack([0.5 * dt * dt * I2, dt * I2])
    return A, B


def random_obstacles(rng, count=3, half_range=(0.5, 1.0), margin=0.4, tries=1000):
    """Non-overlapping axis-aligned obstacle boxes away from start and goal."""
    obstacles = []
    for _ in range(tries):
        if len(obstacles) == count:
            break
        center = np.array([rng.uniform(2.5, 7.5), rng.uniform(-3.5, 3.5)])
        half = np.array([rng.uniform(*half_range), rng.uniform(*half_range)])
        lo, hi = center - half, center + half
        clash = any(np.all(lo < h + margin) and np.all(l - margin < hi) for l, h in obstacles)
        if not clash:
            obstacles.append((lo, hi))
    return obstacles


def free_space_boxes(obstacles, lo=WORKSPACE_LO, hi=WORKSPACE_HI):
    """Decompose ``[lo, hi]`` minus the obstacles into vertical-slab boxes.

    The x-axis is cut at every obstacle edge; inside each slab the free
    y-intervals become boxes. Neighbouring slabs with identical free
    intervals are merged.
    """
    xs = sorted({lo[0], hi[0], *[float(o[0][0]) for o in obstacles], *[float(o[1][0]) for o in obstacles]})
    xs = [x for x in xs if lo[0] <= x <= hi[0]]
    slabs = []
    for xa, xb in zip(xs[:-1], xs[1:]):
        if xb - xa <= 1e-12:
            continue
        blocked = sorted((float(o[0][1]), float(o[1][1])) for o in obstacles
                         if o[0][0] < xb and o[1][0] > xa)
        free, y = [], lo[1]
        for ya, yb in blocked:
            if ya > y:
                free.append((y, ya))
            y = max(y, yb)
        if y < hi[1]:
            free.append((y, hi[1]))
        if slabs and slabs[-1][2] == free:
            slabs[-1] = (slabs[-1][0], xb, free)
        else:
            slabs.append((xa, xb, free))
    boxes = []
    for xa, xb, free in slabs:
        for ya, yb in free:
            boxes.append((np.array([xa, ya]), np.array([xb, yb])))
    return boxes


@dataclass
class ReachAvoid:
    """Built problem plus the data needed to verify a solution."""

    problem: object
    boxes: list
    obstacles: list
    A: np.ndarray
    B: np.ndarray
    dt: float
    N: int
    seed: int

    def trajectory(self, z):
        lay = self.problem.layout
        return lay.states(z), lay.inputs(z)


def build(f_s=1, seed=0, n_obstacles=3, union_kind="condensed"):
    """Build the lifted reach-avoid problem.

    Args:
        f_s: Horizon factor; ``dt = 2 / f_s`` and ``N = 10 f_s``.
        seed: Obstacle-field seed.
        n_obstacles: Number of obstacles (0 gives an empty workspace).
        union_kind: Union identity for the (single-mode) graph; unused
            unless forced, kept for a uniform interface.
    """
    if f_s < 1:
        raise ValueError("f_s must be at least 1")
    dt = 2.0 / f_s
    N = int(round(10 * f_s))
    A, B = dynamics(dt)
    Sp = box(WORKSPACE_LO, WORKSPACE_HI, ZERO_ONE)
    Sv = regular_polygon_zonotope(1.0, 4, form=ZERO_ONE)
    S = cartesian_product(Sp, Sv)
    U = regular_polygon_zonotope(0.1 * np.pi / 2, 4, form=ZERO_ONE)
    mode = PWAMode(A, B, np.zeros(4), cartesian_product(S, U))
    sys = PWASystem((mode,), S, U)

    goal_set = cartesian_product(regular_polygon_zonotope(1.0, 6, form=ZERO_ONE),
                                 regular_polygon_zonotope(0.01, 6, form=ZERO_ONE))
    F_N = minkowski_sum(point(GOAL, ZERO_ONE), goal_set)
    F = [S] * (N - 1) + [F_N]

    rng = RngStream(seed)
    obstacles = random_obstacles(rng, n_obstacles) if n_obstacles else []
    boxes = free_space_boxes(obstacles)
    P_free = union_zonotope([box(lo, hi, ZERO_ONE) for lo, hi in boxes])

    def add_obstacle_step(Z, k):
        R = np.zeros((2, Z.n))
        R[0, Z.n - 4] = 1.0
        R[1, Z.n - 3] = 1.0
        return generalized_intersection(Z, P_free, R)

    Q = np.diag([0.1 / N, 0.1 / N, 0.0, 0.0])
    Q_N = np.diag([1.0, 1.0, 0.0, 0.0])
    R_cost = (10.0 / N) * np.eye(2)
    cost = CostSpec(Q, R_cost, Q_N, np.tile(GOAL, (N, 1)))
    problem = build_problem(sys, point(X0, ZERO_ONE), F, cost, union_kind,
                            step_hook=add_obstacle_step)
    return ReachAvoid(problem, boxes, obstacles, A, B, dt, N, seed)


def verify(scn, z, tol=1e-3):
    """Independent checks on a lifted solution vector.

    Returns a dict with the dynamics residual, whether every position
    ``p_1 ... p_N`` lies in a free box (to ``tol``), the start-state error
    and whether the final state is inside the goal polygon.
    """
    from hzplan.scenarios.verify import dynamics_residual, in_boxes, in_polygon, polygon_halfspaces

    X, U = scn.trajectory(z)
    dyn = dynamics_residual(X, U, lambda x, u: scn.A @ x + scn.B @ u)
    contained = all(in_boxes(X[k, :2], scn.boxes, tol) for k in range(1, len(X)))
    n6, o6 = polygon_halfspaces(1.0, 6, GOAL[:2])
    goal_ok = in_polygon(X[-1, :2], n6, o6, tol)
    start_err = float(np.max(np.abs(X[0] - X0)))
    return {
        "dynamics_residual": dyn,
        "contained": bool(contained),
        "goal": bool(goal_ok),
        "start_error": start_err,
        "ok": bool(dyn <= tol and contained and goal_ok and start_err <= tol),
    }
