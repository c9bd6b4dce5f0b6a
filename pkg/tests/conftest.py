import numpy as np
import pytest

from iksdp.catalog import load_robot


def revolute(parent, child, offset=(0, 0, 0), limits=(-np.pi, np.pi), zero=None):
    j = {"parent": parent, "child": child, "kind": "revolute",
         "offset": [float(v) for v in offset], "angle_limits": [float(v) for v in limits]}
    if zero is not None:
        j["zero_rotation"] = np.asarray(zero, dtype=float).reshape(-1).tolist()
    return j


def serial_doc(offsets, mounts=None, limits=None, tool_offset=(0, 0, 0)):
    """Serial revolute chain ``base -> l1 -> ... -> ln -> tool`` (tool on a locked joint)."""
    n = len(offsets)
    links = ["base"] + [f"l{i + 1}" for i in range(n)] + ["tool"]
    joints = []
    for i in range(n):
        joints.append(revolute(links[i], links[i + 1], offsets[i],
                               limits[i] if limits else (-np.pi, np.pi),
                               None if mounts is None else mounts[i]))
    joints.append(revolute(links[n], "tool", tool_offset, (0, 0)))
    return {"links": links, "bases": {"base": {}}, "joints": joints, "end_effector": "tool"}


@pytest.fixture(scope="session")
def robots():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_robot(name)
        return cache[name]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
