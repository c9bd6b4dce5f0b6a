"""Seeded experiment harness: goal samplers, batch runner and Stewart checks."""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .assembly import GoalSpec
from .rankmin import RankMinConfig, certify, run
from .robot_model import (PRISMATIC, JointConfig, ModelError, Pose, RobotGraph, euler_zyx,
                          forward_kinematics, rot_x, rot_y, rot_z,
                          sample_config, stewart_anchors, stewart_inverse_legs)
from .verify import SolveReport, verify

#: translation box and Euler ranges used for dual-arm style sampling
ARM_BOX = {"x": (0.4, 0.75), "y": (-0.2, 0.2), "z": (0.2, 0.7)}
ARM_EULER = {"alpha": (0.0, np.pi / 2), "beta": (0.0, np.pi), "gamma": (0.0, np.pi / 2)}
#: Stewart platform pose box
STEWART_BOX = {"x": (0.2, 0.8), "y": (-0.3, 0.3), "z": (0.8, 1.05)}
STEWART_EULER = {"alpha": (-np.pi / 3, np.pi / 3), "beta": (-np.pi / 12, np.pi / 12),
                 "gamma": (-np.pi / 12, np.pi / 12)}


# ---------------------------------------------------------------------------
# goal samplers
# ---------------------------------------------------------------------------

def sample_box_pose(rng: np.random.Generator, box=ARM_BOX, euler=ARM_EULER) -> Pose:
    """Uniform translation in a box with ``Rz(a) Ry(b) Rx(g)`` from uniform Euler angles.

    The orientation distribution is not Haar-uniform on SO(3).
    """
    for name, (lo, hi) in list(box.items()) + list(euler.items()):
        if lo > hi:
            raise ValueError(f"range {name} is not ordered: {lo} > {hi}")
    T = [rng.uniform(*box[k]) for k in ("x", "y", "z")]
    a, b, g = (rng.uniform(*euler[k]) for k in ("alpha", "beta", "gamma"))
    return Pose(euler_zyx(a, b, g), T)


def total_reach(g: RobotGraph) -> float:
    """Upper bound on how far any link can be from a base."""
    return float(sum(np.linalg.norm(e.offset) if e.kind != PRISMATIC
                     else max(abs(v) for v in e.extension_limits) for e in g.edges))


def roundtrip_goals(g: RobotGraph, n: int, seed: int = 0) -> list[tuple[JointConfig, GoalSpec]]:
    """Goals built from forward kinematics of uniformly sampled configurations."""
    out = []
    for i in range(n):
        q = sample_config(g, seed * 100003 + i)
        out.append((q, GoalSpec(forward_kinematics(g, q)[g.end_effector])))
    return out


def closed_chain_goals(g: RobotGraph, n: int, seed: int = 0, spread: float = 0.5,
                       attempts: int = 50):
    """Feasible goals for a closed chain.

    The joints of the second closure path are fitted numerically so every
    closure holds.  After a first feasible configuration is found, later
    samples perturb the remaining joints of the previous one by up to
    ``spread`` radians (a seeded random walk) and warm-start the fit from
    its values, which keeps most fits to a few iterations.  Samples whose
    fit misses by more than 1e-10 are discarded.
    """
    from .verify import path_pose

    rng = np.random.default_rng(seed)
    free = _closure_joints(g)
    out, prev, tries = [], None, 0
    while len(out) < n and tries < n * attempts:
        tries += 1
        q = sample_config(g, int(rng.integers(2 ** 31)))
        if prev is not None:
            for e in g.edges:
                if e.kind == "revolute" and e.alpha > 0:
                    th = prev.angles[e.key] + rng.uniform(-spread, spread)
                    q.angles[e.key] = float(np.clip(th, -e.alpha, e.alpha))
        fitted = _fit_closures(g, q, rng, free, prev)
        if fitted is None:
            prev = None if tries % 10 == 0 else prev
            continue
        poses = forward_kinematics(g, fitted)
        worst = 0.0
        for cl in g.closures:
            start = poses[cl.path_a[0]]
            pa = path_pose(g, cl.path_a, start, fitted).compose(cl.relative)
            pb = path_pose(g, cl.path_b, start, fitted)
            worst = max(worst, np.abs(pa.R - pb.R).max(), np.abs(pa.T - pb.T).max())
        if worst <= 1e-10:
            out.append((fitted, GoalSpec(poses[g.end_effector])))
            prev = fitted
    return out


def _closure_joints(g: RobotGraph) -> list:
    free = []
    for cl in g.closures:
        for a, b in zip(cl.path_b[:-1], cl.path_b[1:]):
            e, _ = g.edge_between(a, b)
            if e.kind == "revolute" and e.alpha > 0 and e.key not in free:
                free.append(e.key)
    return free


def _fit_closures(g: RobotGraph, q: JointConfig, rng, free=None,
                  warm: JointConfig | None = None) -> JointConfig | None:
    from .verify import path_pose

    free = _closure_joints(g) if free is None else free
    if not free:
        return None
    edges = {e.key: e for e in g.edges}
    lo = np.array([-edges[k].alpha for k in free])
    hi = np.array([edges[k].alpha for k in free])

    def with_free(theta):
        qq = JointConfig(dict(q.angles), dict(q.extensions), dict(q.spherical))
        qq.angles.update(zip(free, map(float, theta)))
        return qq

    def residual(theta):
        qq = with_free(theta)
        out = []
        poses = forward_kinematics(g, qq, check_limits=False)
        for cl in g.closures:
            start = poses[cl.path_a[0]]
            pa = path_pose(g, cl.path_a, start, qq).compose(cl.relative)
            pb = path_pose(g, cl.path_b, start, qq)
            out.append((pa.R - pb.R).ravel())
            out.append(pa.T - pb.T)
        return np.concatenate(out)

    starts = []
    if warm is not None:
        starts.append(np.clip([warm.angles[k] for k in free], lo, hi))
    starts += [rng.uniform(lo, hi) for _ in range(2 if warm is not None else 8)]
    for x0 in starts:
        sol = least_squares(residual, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.abs(sol.fun).max() <= 1e-11:
            return with_free(sol.x)
    return None


def out_of_reach_goals(g: RobotGraph, n: int, seed: int = 0, margin: float = 0.5):
    """Goals translated to at least ``margin`` beyond the total reach from every base."""
    rng = np.random.default_rng(seed)
    reach = total_reach(g)
    out = []
    for q, goal in roundtrip_goals(g, n, seed):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        T = goal.target.T + (2.0 * reach + margin) * u
        out.append((q, GoalSpec(Pose(goal.target.R, T))))
    return out


# ---------------------------------------------------------------------------
# batch runner
# ---------------------------------------------------------------------------

@dataclass
class BatchSpec:
    robot: str
    count: int = 10
    seed: int = 0
    sampler: str = "roundtrip"  # roundtrip | feasible | box | out_of_reach | closed
    box: dict = field(default_factory=lambda: dict(ARM_BOX))
    euler: dict = field(default_factory=lambda: dict(ARM_EULER))
    config: RankMinConfig = field(default_factory=RankMinConfig)
    restarts: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be at least 1")
        for name, (lo, hi) in list(self.box.items()) + list(self.euler.items()):
            if lo > hi:
                raise ValueError(f"range {name} is not ordered")


def failed_report(message: str, mode: str = "", variant: str = "") -> SolveReport:
    nan = float("nan")
    return SolveReport(status="Failed", err_R=nan, err_T=nan, max_so3_distance=nan,
                       max_rank_gap=nan, f_lifted=nan, f_fk=nan, f_discrepancy=nan,
                       joint_limit_slack={}, min_limit_slack=nan, closure_residual=nan,
                       certified=False, mode=mode, variant=variant, message=message)


def solve_goal(g: RobotGraph, goal: GoalSpec, cfg: RankMinConfig, restarts: bool = True,
               certify_miss: bool = False, f_tol: float = 1e-6):
    """Run and verify one goal; returns ``(report, run_result)``.

    With ``certify_miss`` a run that does not end at a rank-one point with
    ``f <= f_tol`` is followed by the stationarity-augmented relaxation, and
    the report status becomes ``Infeasible`` when that proves the goal
    unreachable.
    """
    t0 = time.perf_counter()
    res = run(g, goal, cfg, restarts=restarts)
    report = verify(g, goal, res, time.perf_counter() - t0, cfg.eps1)
    if certify_miss and report.status != "Infeasible" and not (
            report.status == "RankOne" and report.f_lifted <= f_tol):
        cert = certify(g, goal, cfg.mode, cfg.m_dirs, cfg.solver)
        if cert.status == "Infeasible":
            report.status = "Infeasible"
            report.certified = False
            report.message = "goal certified unreachable"
        report.wall_time = time.perf_counter() - t0
    return report, res


def _batch_item(args):
    g, goal, cfg, restarts, certify_miss = args
    try:
        return solve_goal(g, goal, cfg, restarts, certify_miss)[0]
    except Exception as exc:  # one bad item must not abort the batch
        return failed_report(f"{type(exc).__name__}: {exc}", cfg.mode, cfg.variant)


def batch_goals(g: RobotGraph, spec: BatchSpec) -> list[GoalSpec]:
    if spec.sampler == "roundtrip":
        return [gl for _, gl in roundtrip_goals(g, spec.count, spec.seed)]
    if spec.sampler == "out_of_reach":
        return [gl for _, gl in out_of_reach_goals(g, spec.count, spec.seed)]
    if spec.sampler == "closed":
        return [gl for _, gl in closed_chain_goals(g, spec.count, spec.seed)]
    if spec.sampler == "feasible":
        return feasible_goals(g, spec.count, spec.seed)
    if spec.sampler == "box":
        rng = np.random.default_rng(spec.seed)
        return [GoalSpec(sample_box_pose(rng, spec.box, spec.euler)) for _ in range(spec.count)]
    raise ValueError(f"unknown sampler {spec.sampler!r}")


def run_batch(g: RobotGraph, goals, cfg: RankMinConfig, restarts: bool = True,
              jobs: int | None = 1, certify_miss: bool = False) -> list[SolveReport]:
    """Solve goals independently; order of the results follows ``goals``."""
    items = [(g, gl, cfg, restarts, certify_miss) for gl in goals]
    if jobs == 1 or len(items) <= 1:
        return [_batch_item(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_batch_item, items))


SUMMARY_COLUMNS = ("item", "status", "certified", "f_lifted", "err_R", "err_T",
                   "max_so3_distance", "max_rank_gap", "min_limit_slack", "closure_residual",
                   "iterations", "restarts", "variant", "wall_time")


def summary_csv(reports, path=None, timing: bool = True) -> str:
    cols = [c for c in SUMMARY_COLUMNS if timing or c != "wall_time"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i, r in enumerate(reports):
        d = r.to_dict()
        d["item"] = i
        w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def aggregate(reports, f_tol: float = 1e-6) -> dict:
    ok = [r for r in reports if r.status == "RankOne" and r.f_lifted <= f_tol]
    n = len(reports)
    counts = {}
    for r in reports:
        counts[r.status] = counts.get(r.status, 0) + 1
    mean = (lambda xs: float(np.mean(xs)) if xs else float("nan"))
    return {
        "count": n,
        "success_rate": len(ok) / n if n else 1.0,
        "infeasible_rate": counts.get("Infeasible", 0) / n if n else 0.0,
        "status_counts": counts,
        "mean_err_R": mean([r.err_R for r in ok]),
        "mean_err_T": mean([r.err_T for r in ok]),
        "mean_iterations": mean([r.iterations for r in ok]),
        "mean_time": mean([r.wall_time for r in ok]),
        "max_so3_distance": max((r.max_so3_distance for r in ok), default=float("nan")),
        "max_rank_gap": max((r.max_rank_gap for r in ok), default=float("nan")),
    }


# ---------------------------------------------------------------------------
# Stewart platforms
# ---------------------------------------------------------------------------

def _pose_from_params(p) -> Pose:
    return Pose(rot_z(p[3]) @ rot_y(p[4]) @ rot_x(p[5]), p[:3])


def stewart_forward(g: RobotGraph, legs, n_starts: int = 600, seed: int = 0,
                    tol: float = 1e-12) -> list[Pose]:
    """Distinct platform poses whose analytic leg lengths equal ``legs``.

    Solved by damped least squares from random starts; only converged,
    mutually distinct poses are returned.
    """
    legs = np.asarray(legs, dtype=float)
    A, B = stewart_anchors(g)
    rng = np.random.default_rng(seed)
    scale = float(np.max(np.linalg.norm(A, axis=1)) + np.max(legs) + 1.0)
    found: list[Pose] = []

    def resid(p):
        pose = _pose_from_params(p)
        return np.linalg.norm(pose.T + B @ pose.R.T - A, axis=1) - legs

    for _ in range(n_starts):
        p0 = np.concatenate([rng.uniform(-scale, scale, 3), rng.uniform(-np.pi, np.pi, 3)])
        sol = least_squares(resid, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        if np.abs(sol.fun).max() > tol:
            continue
        pose = _pose_from_params(sol.x)
        if all(not pose.allclose(f, atol=1e-6) for f in found):
            found.append(pose)
    return found


@dataclass
class StewartRow:
    pose: Pose
    status: str
    analytic: np.ndarray
    solved: np.ndarray
    f: float
    wall_time: float
    feasible: bool

    @property
    def leg_error(self) -> np.ndarray:
        return np.abs(self.solved - self.analytic)


def stewart_extensions(g: RobotGraph, report: SolveReport) -> np.ndarray:
    """Physical leg lengths from a report's extracted extensions."""
    out = []
    for e in g.edges_of(PRISMATIC):
        tau = report.config["extensions"].get(f"{e.parent}->{e.child}", float("nan"))
        out.append(e.extension(tau) if tau is not None else float("nan"))
    return np.array(out)


def stewart_check(g: RobotGraph, poses, cfg: RankMinConfig, restarts: bool = True):
    rows = []
    legs = g.edges_of(PRISMATIC)
    for pose in poses:
        analytic = stewart_inverse_legs(g, pose)
        feasible = all(e.extension_limits[0] - 1e-12 <= L <= e.extension_limits[1] + 1e-12
                       for e, L in zip(legs, analytic))
        goal = GoalSpec(pose)
        try:
            rep, _ = solve_goal(g, goal, cfg, restarts)
            solved = stewart_extensions(g, rep)
        except ModelError as exc:
            rep = failed_report(str(exc))
            solved = np.full(6, np.nan)
        rows.append(StewartRow(pose, rep.status, analytic, solved, rep.f_lifted,
                               rep.wall_time, feasible))
    return rows


def stewart_table(rows) -> str:
    """Per-leg mean absolute extension error over solved poses, as CSV."""
    solved = [r for r in rows if r.status == "RankOne" and r.f <= 1e-6]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["leg", "mean_abs_error", "max_abs_error", "solved", "total", "analytic_feasible"])
    errs = np.array([r.leg_error for r in solved]) if solved else np.full((0, 6), np.nan)
    for k in range(6):
        col = errs[:, k] if len(errs) else np.array([np.nan])
        w.writerow([k + 1, repr(float(np.mean(col))), repr(float(np.max(col))),
                    len(solved), len(rows), sum(r.feasible for r in rows)])
    return buf.getvalue()


def stewart_box_poses(n: int, seed: int = 0) -> list[Pose]:
    rng = np.random.default_rng(seed)
    return [sample_box_pose(rng, STEWART_BOX, STEWART_EULER) for _ in range(n)]


def _frame_with_z(z: np.ndarray) -> np.ndarray:
    z = z / np.linalg.norm(z)
    helper = np.eye(3)[int(np.argmin(np.abs(z)))]
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


def stewart_config(g: RobotGraph, pose: Pose) -> JointConfig:
    """Joint configuration that places the platform at ``pose``.

    Each leg frame has its z-axis along the leg; extensions come from the
    analytic leg lengths and are not clipped, so an unreachable pose gives
    values outside [0, 1].
    """
    legs = g.edges_of(PRISMATIC)
    A, B = stewart_anchors(g)
    L = stewart_inverse_legs(g, pose)
    q = JointConfig()
    for leg, a, b, length in zip(legs, A, B, L):
        d = pose.T + pose.R @ b - a
        R_leg = _frame_with_z(d)
        R_up = R_leg @ leg.zero_rotation
        lo, hi = leg.extension_limits
        q.extensions[leg.key] = float((length - lo) / (hi - lo))
        for nb, e, fwd in g.neighbors(leg.parent):
            if e.kind == "spherical" and not fwd:
                base_R = g.bases[nb].R
                q.spherical[e.key] = (base_R @ e.zero_rotation).T @ R_leg
        for nb, e, fwd in g.neighbors(leg.child):
            if e.kind == "spherical" and nb == g.end_effector:
                q.spherical[e.key] = (pose.R @ e.zero_rotation).T @ R_up
    return q


def stewart_feasible_poses(g: RobotGraph, n: int, seed: int = 0, tilt: float = 0.3,
                           max_tries: int = 100000) -> list[Pose]:
    """Platform poses whose analytic leg lengths all lie inside the travel limits.

    Poses are drawn around the origin of the base frame with a random small
    rotation, then kept only if every leg is reachable.
    """
    A, B = stewart_anchors(g)
    legs = g.edges_of(PRISMATIC)
    lo = max(e.extension_limits[0] for e in legs)
    hi = min(e.extension_limits[1] for e in legs)
    centre = A.mean(axis=0) - B.mean(axis=0)
    rng = np.random.default_rng(seed)
    out: list[Pose] = []
    for _ in range(max_tries):
        if len(out) == n:
            break
        R = rot_z(rng.uniform(-tilt, tilt)) @ rot_y(rng.uniform(-tilt, tilt)) \
            @ rot_x(rng.uniform(-tilt, tilt))
        T = centre + rng.uniform(-0.5, 0.5, 3) * hi + np.array([0, 0, rng.uniform(lo, hi)])
        L = np.linalg.norm(T + B @ R.T - A, axis=1)
        if np.all(L >= lo + 1e-3 * (hi - lo)) and np.all(L <= hi - 1e-3 * (hi - lo)):
            out.append(Pose(R, T))
    if len(out) < n:
        raise ValueError(f"only {len(out)} feasible poses found")
    return out


def feasible_goals(g: RobotGraph, n: int, seed: int = 0) -> list[GoalSpec]:
    """Reachable goals for any bundled robot type."""
    if g.closures and len(g.edges_of(PRISMATIC)) == 6:
        return [GoalSpec(p) for p in stewart_feasible_poses(g, n, seed)]
    if g.closures:
        return [gl for _, gl in closed_chain_goals(g, n, seed)]
    return [gl for _, gl in roundtrip_goals(g, n, seed)]
