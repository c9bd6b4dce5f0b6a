"""Read joint values back out of a lifted solution and score it."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import GoalSpec, Layout, tau_block_name
from .lifting import (QUAT, LiftError, recover_rotation, recover_tau, rotation_from_lift,
                      rotation_from_quaternion_lift)
from .robot_model import (PRISMATIC, REVOLUTE, SPHERICAL, JointConfig, ModelError, Pose,
                          RobotGraph, forward_kinematics, joint_step)

E1, E3 = np.eye(3)[0], np.eye(3)[2]


def project_so3(R) -> tuple[np.ndarray, bool]:
    """Nearest rotation in Frobenius norm and a flag for ill-defined projections."""
    R = np.asarray(R, dtype=float)
    U, s, Vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    P = U @ np.diag([1.0, 1.0, d]) @ Vt
    ill = bool(s[-1] <= 1e-12 * max(s[0], 1e-300) or (d < 0 and abs(s[1] - s[2]) < 1e-12))
    return P, ill


def so3_distance(R) -> float:
    P, _ = project_so3(R)
    return float(np.linalg.norm(np.asarray(R, dtype=float) - P))


@dataclass
class Extraction:
    config: JointConfig
    poses: dict
    raw_rotations: dict
    certified: bool
    notes: list = field(default_factory=list)


def extract_solution(g: RobotGraph, layout: Layout, x, eps1: float = 1e-3) -> Extraction:
    """Joint configuration and link poses encoded by a lifted point.

    Rotations are read through the linear recovery map and projected onto
    SO(3) before use, so a higher-rank point still yields a consistent
    (but non-certified) configuration.
    """
    mats = layout.unpack(x)
    raw, rots, notes = {}, {}, []
    certified = True
    for v, pose in g.bases.items():
        raw[v] = rots[v] = pose.R
    for b in layout.blocks:
        if b.kind == "tau":
            continue
        M = mats[b.name]
        if b.kind == QUAT:
            R = rotation_from_quaternion_lift(M)
        else:
            try:
                R = recover_rotation(M, tol=1e-5)
            except LiftError:
                R = rotation_from_lift(M)
                notes.append(f"{b.name}: structure rows violated")
                certified = False
        w = np.linalg.eigvalsh(M)
        if w[-2] > eps1:
            certified = False
        raw[b.name] = R
        P, ill = project_so3(R)
        if ill:
            notes.append(f"{b.name}: projection ill-defined")
            certified = False
        rots[b.name] = P

    q = JointConfig()
    for e in g.edges:
        Ri, Rj = rots[e.parent], rots[e.child]
        if e.kind == REVOLUTE:
            wi, wj = Ri @ e.zero_rotation @ E1, Rj @ E1
            z = Rj @ E3
            q.angles[e.key] = float(np.arctan2(z @ np.cross(wi, wj), wi @ wj))
        elif e.kind == SPHERICAL:
            S = e.zero_rotation.T @ Ri.T @ Rj
            q.spherical[e.key] = project_so3(S)[0]
        else:
            W = mats[tau_block_name(e)]
            try:
                q.extensions[e.key] = recover_tau(W, tol=1e-6)
            except ValueError:
                q.extensions[e.key] = float(np.clip(W[6, 6], 0.0, 1.0))
                notes.append(f"{e.key}: extension clamped")
                certified = False

    poses = dict(g.bases)
    for known, new, e, fwd in g.spanning_tree():
        Tk = poses[known].T
        if e.kind == PRISMATIC:
            d = e.extension(q.extensions[e.key])
            T = Tk + d * rots[new][:, 2] if fwd else Tk - d * rots[known][:, 2]
        else:
            T = Tk + rots[known] @ e.offset if fwd else Tk - rots[new] @ e.offset
        poses[new] = Pose(rots[new], T)
    return Extraction(q, poses, raw, certified, notes)


def path_pose(g: RobotGraph, path, start: Pose, q: JointConfig) -> Pose:
    pose = start
    for a, b in zip(path[:-1], path[1:]):
        e, fwd = g.edge_between(a, b)
        pose = joint_step(e, fwd, pose, q, check_limits=False)
    return pose


@dataclass
class SolveReport:
    status: str
    err_R: float
    err_T: float
    max_so3_distance: float
    max_rank_gap: float
    f_lifted: float
    f_fk: float
    f_discrepancy: float
    joint_limit_slack: dict
    min_limit_slack: float
    closure_residual: float
    certified: bool
    iterations: int = 0
    restarts: int = 0
    variant: str = ""
    mode: str = ""
    wall_time: float = 0.0
    program: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    poses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        def clean(o):
            if isinstance(o, float) and not np.isfinite(o):
                return None
            if isinstance(o, dict):
                return {k: clean(v) for k, v in o.items()}
            if isinstance(o, list):
                return [clean(v) for v in o]
            return o
        return json.dumps(clean(self.to_dict()), **kw)


def verify(g: RobotGraph, goal: GoalSpec, run_result, wall_time: float = 0.0,
           eps1: float = 1e-3) -> SolveReport:
    """Fill every metric of a report from a finished rank-minimisation run."""
    res = run_result
    base = dict(status=res.status, iterations=res.iterations, restarts=res.restarts,
                variant=res.variant, mode=res.prog.layout.mode, wall_time=wall_time,
                program=res.prog.stats(), message=res.message)
    nan = float("nan")
    if res.x is None:
        return SolveReport(err_R=nan, err_T=nan, max_so3_distance=nan, max_rank_gap=nan,
                           f_lifted=nan, f_fk=nan, f_discrepancy=nan, joint_limit_slack={},
                           min_limit_slack=nan, closure_residual=nan, certified=False, **base)

    ex = extract_solution(g, res.prog.layout, res.x, eps1)
    fk = forward_kinematics(g, ex.config, check_limits=False)
    ee = fk[g.end_effector]
    err_R = float(np.linalg.norm(ee.R - goal.target.R))
    err_T = float(np.linalg.norm(ee.T - goal.target.T))
    f_fk = goal.weight_rotation * err_R ** 2 + goal.weight_translation * err_T ** 2
    f_lifted = float(res.prog.objective.value(res.x))

    mats = res.prog.layout.unpack(res.x)
    gaps = [max(float(np.linalg.eigvalsh(M)[-2]), 0.0) for M in mats.values()]
    so3 = [so3_distance(R) for v, R in ex.raw_rotations.items() if v not in g.bases]

    slack = {}
    for e in g.edges_of(REVOLUTE):
        wi = fk[e.parent].R @ e.zero_rotation @ E1
        wj = fk[e.child].R @ E1
        slack[f"{e.parent}->{e.child}"] = float(e.limit_radius - np.linalg.norm(wi - wj))

    closure = 0.0
    for cl in g.closures:
        start = fk[cl.path_a[0]]
        pa = path_pose(g, cl.path_a, start, ex.config).compose(cl.relative)
        pb = path_pose(g, cl.path_b, start, ex.config)
        closure = max(closure, float(np.abs(pa.R - pb.R).max()), float(np.abs(pa.T - pb.T).max()))

    status = res.status
    return SolveReport(
        err_R=err_R, err_T=err_T,
        max_so3_distance=max(so3, default=0.0),
        max_rank_gap=max(gaps, default=0.0),
        f_lifted=f_lifted, f_fk=f_fk, f_discrepancy=abs(f_lifted - f_fk),
        joint_limit_slack=slack, min_limit_slack=min(slack.values(), default=float("inf")),
        closure_residual=closure,
        certified=bool(ex.certified and status == "RankOne"),
        config=ex.config.to_dict(),
        poses={k: p.to_dict() for k, p in fk.items()},
        notes=ex.notes, **base)


def identity_state(g: RobotGraph, layout: Layout) -> np.ndarray:
    """Lifted point with every free rotation at identity and all extensions at zero."""
    from .lifting import lift_prismatic, lift_quaternion, lift_rotation

    mats = {}
    for b in layout.blocks:
        if b.kind == "tau":
            continue
        mats[b.name] = lift_quaternion(np.eye(3)) if b.kind == QUAT else lift_rotation(np.eye(3))
    for e in g.edges_of(PRISMATIC):
        mats[tau_block_name(e)] = lift_prismatic(np.eye(3), 0.0)
    expected = {v for v in g.links if v not in g.bases}
    expected |= {tau_block_name(e) for e in g.edges_of(PRISMATIC)}
    if set(mats) != expected or len(layout.blocks) != len(expected):
        raise ModelError("layout does not match the robot")
    return layout.pack(mats)
