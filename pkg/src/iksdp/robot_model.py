"""Kinematic graph, robot-description loading and forward kinematics.

A robot is a graph of links joined by directed joint edges.  Every link
carries a frame ``(R, T)`` expressed in the world frame.  Joint edges relate
parent and child frames:

* revolute   ``R_j = R_i R_e Rz(theta)`` and ``T_j = T_i + R_i o``
* spherical  ``R_j = R_i R_e S`` with ``S`` free, ``T_j = T_i + R_i o``
* prismatic  ``R_j = R_i R_p`` and ``T_j = T_i + d R_j e_3`` where
  ``d = tau_l + tau (tau_u - tau_l)`` and ``tau`` in ``[0, 1]``

Edges may be traversed in either direction when propagating poses, which is
how parallel mechanisms (several legs meeting at one platform) are described.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

TOL_SO3 = 1e-8

SPHERICAL = "spherical"
REVOLUTE = "revolute"
PRISMATIC = "prismatic"
JOINT_KINDS = (SPHERICAL, REVOLUTE, PRISMATIC)


class ModelError(ValueError):
    """Invalid robot description or joint configuration."""


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``Rz(alpha) @ Ry(beta) @ Rx(gamma)``."""
    return rot_z(alpha) @ rot_y(beta) @ rot_x(gamma)


def is_rotation(R, tol: float = TOL_SO3) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a normalised Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pose:
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.array(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "T", np.array(self.T, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.R, self.T + self.R @ other.T)

    def allclose(self, other: "Pose", atol: float = 1e-12) -> bool:
        return (np.allclose(self.R, other.R, atol=atol, rtol=0)
                and np.allclose(self.T, other.T, atol=atol, rtol=0))

    def to_dict(self) -> dict:
        return {"R": self.R.reshape(-1).tolist(), "T": self.T.tolist()}


@dataclass(frozen=True, eq=False)
class JointEdge:
    parent: str
    child: str
    kind: str
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    zero_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    alpha: float = np.pi
    extension_limits: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "offset", np.array(self.offset, dtype=float).reshape(3))
        object.__setattr__(self, "zero_rotation",
                           np.array(self.zero_rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "alpha", float(self.alpha))
        lo, hi = self.extension_limits
        object.__setattr__(self, "extension_limits", (float(lo), float(hi)))

    @property
    def key(self) -> tuple[str, str]:
        return (self.parent, self.child)

    def extension(self, tau: float) -> float:
        """Physical prismatic displacement for a normalised extension."""
        lo, hi = self.extension_limits
        return lo + tau * (hi - lo)

    @property
    def limit_radius(self) -> float:
        """Radius of the ball bounding ``w_i - w_j`` for this angle limit."""
        return float(np.sqrt(max(2.0 - 2.0 * np.cos(min(self.alpha, np.pi)), 0.0)))


@dataclass(frozen=True, eq=False)
class Closure:
    path_a: tuple[str, ...]
    path_b: tuple[str, ...]
    relative: Pose = field(default_factory=Pose.identity)


@dataclass
class JointConfig:
    """Joint values keyed by ``(parent, child)``.

    Revolute angles are measured from the middle of the joint range, so
    ``|theta| <= alpha``.  Prismatic values are normalised to ``[0, 1]``.
    """

    angles: dict = field(default_factory=dict)
    extensions: dict = field(default_factory=dict)
    spherical: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "angles": {f"{p}->{c}": float(v) for (p, c), v in self.angles.items()},
            "extensions": {f"{p}->{c}": float(v) for (p, c), v in self.extensions.items()},
            "spherical": {f"{p}->{c}": np.asarray(v).reshape(-1).tolist()
                          for (p, c), v in self.spherical.items()},
        }


class RobotGraph:
    """Immutable kinematic graph.  Build with :func:`load_model`."""

    def __init__(self, links, edges, bases, end_effector, closures=()):
        self.links: tuple[str, ...] = tuple(links)
        self.edges: tuple[JointEdge, ...] = tuple(edges)
        self.bases: dict[str, Pose] = dict(bases)
        self.end_effector: str = end_effector
        self.closures: tuple[Closure, ...] = tuple(closures)
        self._adj: dict[str, list[tuple[str, JointEdge, bool]]] = {v: [] for v in self.links}
        for e in self.edges:
            self._adj[e.parent].append((e.child, e, True))
            self._adj[e.child].append((e.parent, e, False))

    def __repr__(self):
        kinds = {k: len(self.edges_of(k)) for k in JOINT_KINDS}
        return (f"RobotGraph(links={len(self.links)}, revolute={kinds[REVOLUTE]}, "
                f"spherical={kinds[SPHERICAL]}, prismatic={kinds[PRISMATIC]}, "
                f"closures={len(self.closures)})")

    def edges_of(self, kind: str) -> list[JointEdge]:
        return [e for e in self.edges if e.kind == kind]

    @property
    def free_links(self) -> list[str]:
        """Links whose rotation is a decision variable."""
        return [v for v in self.links if v not in self.bases]

    def edge_between(self, a: str, b: str) -> tuple[JointEdge, bool]:
        """Edge joining ``a`` and ``b``; the flag is True when ``a`` is the parent."""
        for nb, e, fwd in self._adj[a]:
            if nb == b:
                return e, fwd
        raise ModelError(f"no joint between links {a!r} and {b!r}")

    def neighbors(self, v: str):
        return self._adj[v]

    def spanning_tree(self) -> list[tuple[str, str, JointEdge, bool]]:
        """BFS tree from the bases: ``(known, new, edge, forward)`` steps in order."""
        seen = set(self.bases)
        queue = deque(b for b in self.links if b in self.bases)
        steps = []
        while queue:
            v = queue.popleft()
            for nb, e, fwd in self._adj[v]:
                if nb not in seen:
                    seen.add(nb)
                    steps.append((v, nb, e, fwd))
                    queue.append(nb)
        return steps

    def path_from_base(self, target: str) -> list[str]:
        """Link sequence from a base to ``target`` along the BFS tree."""
        parent = {}
        for v, nb, _, _ in self.spanning_tree():
            parent[nb] = v
        if target in self.bases:
            return [target]
        if target not in parent:
            raise ModelError(f"link {target!r} is not reachable from a base")
        path = [target]
        while path[-1] not in self.bases:
            path.append(parent[path[-1]])
        return path[::-1]

    def fk_path(self) -> list[str]:
        return self.path_from_base(self.end_effector)


# ---------------------------------------------------------------------------
# loading and serialisation
# ---------------------------------------------------------------------------

_POSE_SCHEMA = {
    "type": "object",
    "properties": {
        "R": {"type": "array", "items": {"type": "number"}, "minItems": 9, "maxItems": 9},
        "T": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    },
    "additionalProperties": False,
}

ROBOT_SCHEMA = {
    "type": "object",
    "required": ["links", "bases", "joints", "end_effector"],
    "properties": {
        "name": {"type": "string"},
        "links": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "bases": {"type": "object", "additionalProperties": _POSE_SCHEMA},
        "joints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["parent", "child", "kind"],
                "properties": {
                    "parent": {"type": "string"},
                    "child": {"type": "string"},
                    "kind": {"enum": list(JOINT_KINDS)},
                    "offset": {"type": "array", "items": {"type": "number"},
                               "minItems": 3, "maxItems": 3},
                    "zero_rotation": {"type": "array", "items": {"type": "number"},
                                      "minItems": 9, "maxItems": 9},
                    "angle_limits": {"type": "array", "items": {"type": "number"},
                                     "minItems": 2, "maxItems": 2},
                    "extension_limits": {"type": "array", "items": {"type": "number"},
                                         "minItems": 2, "maxItems": 2},
                },
                "additionalProperties": False,
            },
        },
        "end_effector": {"type": "string"},
        "closures": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path_a", "path_b"],
                "properties": {
                    "path_a": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "path_b": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "relative": _POSE_SCHEMA,
                },
                "additionalProperties": False,
            },
        },
    },
}


def _rotation_field(values, where: str) -> np.ndarray:
    R = np.asarray(values, dtype=float).reshape(3, 3)
    if not is_rotation(R):
        raise ModelError(f"{where}: not a rotation matrix (tolerance {TOL_SO3:g})")
    return R


def _pose_field(d: Mapping | None, where: str) -> Pose:
    d = d or {}
    R = _rotation_field(d["R"], f"{where}.R") if "R" in d else np.eye(3)
    T = np.asarray(d.get("T", [0.0, 0.0, 0.0]), dtype=float)
    return Pose(R, T)


def load_model(doc) -> RobotGraph:
    """Parse and validate a robot description.

    ``doc`` may be JSON text, a path-like object or an already decoded dict.
    Asymmetric angle limits ``[lo, hi]`` are folded into the joint's zero
    rotation so the stored limit is the half-width ``alpha``.
    """
    import jsonschema

    if isinstance(doc, (str, bytes)) and not str(doc).lstrip().startswith("{"):
        with open(doc) as fh:
            doc = json.load(fh)
    elif isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    elif hasattr(doc, "read_text"):
        doc = json.loads(doc.read_text())

    try:
        jsonschema.validate(doc, ROBOT_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelError(f"schema violation at {where}: {exc.message}") from None

    links = list(doc["links"])
    if len(set(links)) != len(links):
        raise ModelError("links: duplicate link ids")
    known = set(links)

    bases = {}
    for name, pose in doc["bases"].items():
        if name not in known:
            raise ModelError(f"bases.{name}: unknown link")
        bases[name] = _pose_field(pose, f"bases.{name}")
    if not bases:
        raise ModelError("bases: at least one base link is required")

    edges = []
    for k, j in enumerate(doc["joints"]):
        where = f"joints[{k}]"
        p, c, kind = j["parent"], j["child"], j["kind"]
        for role, v in (("parent", p), ("child", c)):
            if v not in known:
                raise ModelError(f"{where}.{role}: unknown link {v!r}")
        if p == c:
            raise ModelError(f"{where}: parent and child are the same link")
        R0 = (_rotation_field(j["zero_rotation"], f"{where}.zero_rotation")
              if "zero_rotation" in j else np.eye(3))
        kw = {}
        if kind == PRISMATIC:
            if "offset" in j and np.any(np.asarray(j["offset"]) != 0):
                raise ModelError(f"{where}.offset: prismatic joints carry no offset")
            lo, hi = j.get("extension_limits", [0.0, 1.0])
            if not lo < hi:
                raise ModelError(f"{where}.extension_limits: need tau_l < tau_u")
            kw["extension_limits"] = (lo, hi)
        else:
            kw["offset"] = j.get("offset", [0.0, 0.0, 0.0])
            if "extension_limits" in j:
                raise ModelError(f"{where}.extension_limits: only valid for prismatic joints")
        if kind == REVOLUTE:
            lo, hi = j.get("angle_limits", [-np.pi, np.pi])
            if hi < lo:
                raise ModelError(f"{where}.angle_limits: lower bound exceeds upper bound")
            alpha = 0.5 * (hi - lo)
            if alpha > np.pi + 1e-12:
                raise ModelError(f"{where}.angle_limits: interval wider than 2*pi")
            mid = 0.5 * (hi + lo)
            if mid != 0.0:
                R0 = R0 @ rot_z(mid)
            kw["alpha"] = min(alpha, np.pi)
        elif "angle_limits" in j:
            raise ModelError(f"{where}.angle_limits: only valid for revolute joints")
        edges.append(JointEdge(p, c, kind, zero_rotation=R0, **kw))

    ee = doc["end_effector"]
    if ee not in known:
        raise ModelError(f"end_effector: unknown link {ee!r}")

    g = RobotGraph(links, edges, bases, ee)
    reached = set(bases) | {nb for _, nb, _, _ in g.spanning_tree()}
    missing = [v for v in links if v not in reached]
    if missing:
        raise ModelError(f"links: {missing} not connected to any base")

    closures = []
    for k, cl in enumerate(doc.get("closures", [])):
        where = f"closures[{k}]"
        pa, pb = tuple(cl["path_a"]), tuple(cl["path_b"])
        for name, path in (("path_a", pa), ("path_b", pb)):
            for v in path:
                if v not in known:
                    raise ModelError(f"{where}.{name}: unknown link {v!r}")
            for a, b in zip(path[:-1], path[1:]):
                try:
                    g.edge_between(a, b)
                except ModelError:
                    raise ModelError(f"{where}.{name}: no joint between {a!r} and {b!r}") from None
        rel = _pose_field(cl.get("relative"), f"{where}.relative")
        if pa[0] != pb[0]:
            raise ModelError(f"{where}: paths must start at the same link")
        if pa[-1] == pb[-1] and not rel.allclose(Pose.identity(), atol=1e-12):
            raise ModelError(f"{where}: paths end at the same link but relative is not identity")
        closures.append(Closure(pa, pb, rel))

    return RobotGraph(links, edges, bases, ee, closures)


def serialize(g: RobotGraph) -> dict:
    """Inverse of :func:`load_model` (limits are written in folded form)."""
    joints = []
    for e in g.edges:
        j = {"parent": e.parent, "child": e.child, "kind": e.kind,
             "zero_rotation": e.zero_rotation.reshape(-1).tolist()}
        if e.kind == PRISMATIC:
            j["extension_limits"] = list(e.extension_limits)
        else:
            j["offset"] = e.offset.tolist()
        if e.kind == REVOLUTE:
            j["angle_limits"] = [-e.alpha, e.alpha]
        joints.append(j)
    return {
        "links": list(g.links),
        "bases": {k: p.to_dict() for k, p in g.bases.items()},
        "joints": joints,
        "end_effector": g.end_effector,
        "closures": [{"path_a": list(c.path_a), "path_b": list(c.path_b),
                      "relative": c.relative.to_dict()} for c in g.closures],
    }


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

def joint_step(e: JointEdge, forward: bool, pose: Pose, q: JointConfig,
               check_limits: bool = True) -> Pose:
    """Propagate a pose across one joint, in either direction."""
    if e.kind == REVOLUTE:
        if e.key not in q.angles:
            raise ModelError(f"missing angle for revolute joint {e.key}")
        th = float(q.angles[e.key])
        if check_limits and abs(th) > e.alpha + 1e-12:
            raise ModelError(f"joint {e.key}: |theta|={abs(th):.6g} exceeds alpha={e.alpha:.6g}")
        rel = e.zero_rotation @ rot_z(th)
    elif e.kind == SPHERICAL:
        if e.key not in q.spherical:
            raise ModelError(f"missing rotation for spherical joint {e.key}")
        rel = e.zero_rotation @ np.asarray(q.spherical[e.key], dtype=float).reshape(3, 3)
    else:
        if e.key not in q.extensions:
            raise ModelError(f"missing extension for prismatic joint {e.key}")
        tau = float(q.extensions[e.key])
        if check_limits and not (-1e-12 <= tau <= 1 + 1e-12):
            raise ModelError(f"joint {e.key}: tau={tau:.6g} outside [0, 1]")
        rel = e.zero_rotation
    if forward:
        Rj = pose.R @ rel
        if e.kind == PRISMATIC:
            return Pose(Rj, pose.T + e.extension(tau) * Rj[:, 2])
        return Pose(Rj, pose.T + pose.R @ e.offset)
    Ri = pose.R @ rel.T
    if e.kind == PRISMATIC:
        return Pose(Ri, pose.T - e.extension(tau) * pose.R[:, 2])
    return Pose(Ri, pose.T - Ri @ e.offset)


def forward_kinematics(g: RobotGraph, q: JointConfig, check_limits: bool = True) -> dict[str, Pose]:
    """World pose of every link.

    Poses are propagated from the bases along a BFS spanning tree.  Edges
    outside the tree (closed loops) are not used, so for a closed chain the
    result is only consistent when ``q`` satisfies the closure.
    """
    poses = dict(g.bases)
    for known, new, e, fwd in g.spanning_tree():
        poses[new] = joint_step(e, fwd, poses[known], q, check_limits)
    return poses


def sample_config(g: RobotGraph, seed: int) -> JointConfig:
    """Uniform sample inside the joint limits, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    q = JointConfig()
    for e in g.edges:
        if e.kind == REVOLUTE:
            q.angles[e.key] = float(rng.uniform(-e.alpha, e.alpha))
        elif e.kind == PRISMATIC:
            q.extensions[e.key] = float(rng.uniform(0.0, 1.0))
        else:
            q.spherical[e.key] = random_rotation(rng)
    return q


# ---------------------------------------------------------------------------
# Stewart platforms
# ---------------------------------------------------------------------------

_C, _S = np.cos(np.pi / 3), np.sin(np.pi / 3)

GRIFFIS_DUFFY = {
    "base": np.array([(0, 0, 0), (_C, _S, 0), (2 * _C, 2 * _S, 0),
                      (1 + _C, _S, 0), (2, 0, 0), (1, 0, 0)], dtype=float),
    "platform": np.array([(0, 0, 0), (-_C, _S, 0), (_C, _S, 0),
                          (3 * _C, _S, 0), (2 * _C, 0, 0), (_C, -_S, 0)], dtype=float),
}

DIETMAIER = {
    "base": np.array([(0, 0, 0), (1.107915, 0, 0), (0.549094, 0.756063, 0),
                      (0.735077, -0.223935, 0.525991), (0.514188, -0.526063, -0.368418),
                      (0.590473, 0.094733, -0.205018)]),
    "platform": np.array([(0, 0, 0), (0.542805, 0, 0), (0.956919, -0.528915, 0),
                          (0.665885, -0.353482, 1.402538), (0.478359, 1.158742, 0.107672),
                          (-0.137087, -0.235121, 0.353913)]),
    "legs": np.array([1.0, 0.645275, 1.086284, 1.503439, 1.281933, 0.771071]),
}


def stewart_document(base_anchors, platform_anchors, tau_l: float, tau_u: float,
                     center: Iterable[float] | None = None, name: str = "stewart") -> dict:
    """Robot description of a six-leg platform.

    Each leg is ``base -(spherical)-> lower_k -(prismatic)-> upper_k`` and the
    platform reaches the upper link through a spherical joint whose offset is
    the platform anchor in platform coordinates.  ``center`` moves the
    platform frame origin (in the anchors' coordinates).
    """
    A = np.asarray(base_anchors, dtype=float)
    B = np.asarray(platform_anchors, dtype=float)
    c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    links = ["base", "platform"]
    joints = []
    for k in range(len(A)):
        lo, up = f"lower{k + 1}", f"upper{k + 1}"
        links += [lo, up]
        joints.append({"parent": "base", "child": lo, "kind": SPHERICAL, "offset": A[k].tolist()})
        joints.append({"parent": lo, "child": up, "kind": PRISMATIC,
                       "extension_limits": [tau_l, tau_u]})
        joints.append({"parent": "platform", "child": up, "kind": SPHERICAL,
                       "offset": (B[k] - c).tolist()})
    first = ["base", "lower1", "upper1", "platform"]
    closures = [{"path_a": first, "path_b": ["base", f"lower{k + 1}", f"upper{k + 1}", "platform"]}
                for k in range(1, len(A))]
    return {"name": name, "links": links, "bases": {"base": {}}, "joints": joints,
            "end_effector": "platform", "closures": closures}


def stewart_anchors(g: RobotGraph) -> tuple[np.ndarray, np.ndarray]:
    """World-frame base anchors and platform-frame platform anchors per leg."""
    legs = g.edges_of(PRISMATIC)
    ee = g.end_effector
    if len(legs) != 6:
        raise ModelError(f"expected 6 prismatic legs, found {len(legs)}")
    A, B = [], []
    for leg in legs:
        lower = [(nb, e, f) for nb, e, f in g.neighbors(leg.parent)
                 if e.kind == SPHERICAL and nb in g.bases and not f]
        upper = [(nb, e, f) for nb, e, f in g.neighbors(leg.child)
                 if e.kind == SPHERICAL and nb == ee and not f]
        if len(lower) != 1 or len(upper) != 1:
            raise ModelError(f"leg {leg.key}: expected base-spherical-prismatic-spherical-platform")
        base_pose = g.bases[lower[0][0]]
        A.append(base_pose.T + base_pose.R @ lower[0][1].offset)
        B.append(upper[0][1].offset)
    return np.array(A), np.array(B)


def stewart_inverse_legs(g: RobotGraph, ee_pose: Pose) -> np.ndarray:
    """Analytic leg lengths ``|T + R b_k - a_k|`` for a platform pose."""
    A, B = stewart_anchors(g)
    return np.linalg.norm(ee_pose.T + B @ ee_pose.R.T - A, axis=1)
