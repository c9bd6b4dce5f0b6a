"""Bundled robot descriptions and their generators."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .robot_model import (DIETMAIER, GRIFFIS_DUFFY, JointConfig, Pose, RobotGraph,
                          forward_kinematics, load_model, rot_x, stewart_document)

ROBOT_NAMES = ("planar2", "planar3", "chain7", "dual_arm", "stewart_gd", "stewart_dietmaier")


def _rev(parent, child, offset, limits, zero=None):
    j = {"parent": parent, "child": child, "kind": "revolute",
         "offset": list(map(float, offset)), "angle_limits": list(map(float, limits))}
    if zero is not None:
        j["zero_rotation"] = np.asarray(zero, dtype=float).reshape(-1).tolist()
    return j


def planar_document(lengths, limit: float = 2.8, name: str = "planar") -> dict:
    """Planar arm; the last link length is a rigid tool attached by a locked joint."""
    links = ["base"] + [f"link{i + 1}" for i in range(len(lengths))] + ["tool"]
    joints = []
    prev_len = 0.0
    for i in range(len(lengths)):
        joints.append(_rev(links[i], links[i + 1], [prev_len, 0, 0], [-limit, limit]))
        prev_len = lengths[i]
    joints.append(_rev(links[-2], "tool", [prev_len, 0, 0], [0, 0]))
    return {"name": name, "links": links, "bases": {"base": {}}, "joints": joints,
            "end_effector": "tool"}


# Baxter-like joint ranges (radians) for a seven-joint arm
_CHAIN7_LIMITS = [(-1.70, 1.70), (-2.147, 1.047), (-3.05, 3.05), (-0.05, 2.618),
                  (-3.059, 3.059), (-1.57, 2.094), (-3.059, 3.059)]
_CHAIN7_OFFSETS = [(0, 0, 0.27), (0.069, 0, 0), (0, 0, 0.364), (0.069, 0, 0),
                   (0, 0, 0.375), (0.01, 0, 0), (0, 0, 0.28)]
_CHAIN7_TWISTS = [0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, np.pi / 2, -np.pi / 2, np.pi / 2]


def arm_joints(prefix: str, root: str, root_offset, n: int, limits=None):
    """Joints of an ``n``-joint spatial arm with alternating twists."""
    limits = limits or _CHAIN7_LIMITS
    links, joints = [], []
    parent, offset = root, list(root_offset)
    for i in range(n):
        child = f"{prefix}{i + 1}"
        joints.append(_rev(parent, child, offset, limits[i], rot_x(_CHAIN7_TWISTS[i])))
        links.append(child)
        parent, offset = child, _CHAIN7_OFFSETS[i]
    return links, joints, parent, offset


def chain7_document() -> dict:
    links, joints, last, off = arm_joints("j", "base", (0, 0, 0), 7)
    joints.append(_rev(last, "tool", off, [0, 0]))
    return {"name": "chain7", "links": ["base"] + links + ["tool"], "bases": {"base": {}},
            "joints": joints, "end_effector": "tool"}


DUAL_ARM_REFERENCE = {
    "left": [0.5, -0.6, 0.3, 1.4, -0.2, 0.8, 0.0],
    "right": [-0.5, -0.6, -0.3, 1.4, 0.2, 0.8, 0.0],
}


def dual_arm_document() -> dict:
    """Two six-joint arms on a torso, both gripping one rigid bar.

    The closure's relative transform is read from a reference posture, so
    the closed chain is feasible by construction.  The end effector is a
    tool frame rigidly attached to the left gripper.
    """
    ll, lj, llast, loff = arm_joints("l", "torso", (0, 0.26, 0.3), 6)
    rl, rj, rlast, roff = arm_joints("r", "torso", (0, -0.26, 0.3), 6)
    joints = lj + rj
    joints.append(_rev(llast, "lgrip", loff, [0, 0]))
    joints.append(_rev(rlast, "rgrip", roff, [0, 0]))
    joints.append(_rev("lgrip", "tool", (0.0, -0.15, 0.05), [0, 0]))
    links = ["torso"] + ll + rl + ["lgrip", "rgrip", "tool"]
    doc = {"name": "dual_arm", "links": links, "bases": {"torso": {}}, "joints": joints,
           "end_effector": "tool"}
    g = load_model(doc)
    q = JointConfig()
    for side, pre in (("left", "l"), ("right", "r")):
        for e in g.edges:
            if e.child.startswith(pre) and e.child[1:].isdigit():
                q.angles[e.key] = DUAL_ARM_REFERENCE[side][int(e.child[1:]) - 1]
            elif e.alpha == 0.0:
                q.angles[e.key] = 0.0
    # folded limits store angles relative to the range midpoint
    for e in g.edges:
        if e.key in q.angles and e.alpha > 0:
            lo_hi = [j for j in joints if (j["parent"], j["child"]) == e.key][0]["angle_limits"]
            q.angles[e.key] -= 0.5 * (lo_hi[0] + lo_hi[1])
    poses = forward_kinematics(g, q)
    rel = Pose(poses["lgrip"].R.T @ poses["rgrip"].R,
               poses["lgrip"].R.T @ (poses["rgrip"].T - poses["lgrip"].T))
    path_a = ["torso"] + ll + ["lgrip"]
    path_b = ["torso"] + rl + ["rgrip"]
    doc["closures"] = [{"path_a": path_a, "path_b": path_b, "relative": rel.to_dict()}]
    return doc


def all_documents() -> dict[str, dict]:
    return {
        "planar2": planar_document([1.0, 0.8], name="planar2"),
        "planar3": planar_document([1.0, 0.8, 0.5], name="planar3"),
        "chain7": chain7_document(),
        "dual_arm": dual_arm_document(),
        "stewart_gd": stewart_document(GRIFFIS_DUFFY["base"], GRIFFIS_DUFFY["platform"],
                                       0.0001, 1.0, center=GRIFFIS_DUFFY["platform"].mean(axis=0),
                                       name="stewart_gd"),
        "stewart_dietmaier": stewart_document(DIETMAIER["base"], DIETMAIER["platform"],
                                              0.3, 1.8, name="stewart_dietmaier"),
    }


def robot_path(name: str):
    return resources.files("iksdp") / "robots" / f"{name}.json"


def load_robot(name_or_path) -> RobotGraph:
    """A bundled robot by name, or any description file."""
    if str(name_or_path) in ROBOT_NAMES:
        return load_model(json.loads(robot_path(str(name_or_path)).read_text()))
    return load_model(str(name_or_path))


def write_bundled(directory) -> None:
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, doc in all_documents().items():
        (out / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
