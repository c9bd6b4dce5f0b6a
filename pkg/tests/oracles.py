"""Independent reference computations used by the tests.

Nothing here imports the package under test; each routine is a direct,
deliberately naive implementation of the quantity it checks.
"""
from __future__ import annotations

import numpy as np


def rotz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def homogeneous(R, T):
    H = np.eye(4)
    H[:3, :3] = R
    H[:3, 3] = T
    return H


def chain_fk_homogeneous(mounts, offsets, angles):
    """End pose of a serial revolute chain by multiplying 4x4 transforms.

    Joint ``i`` is placed at ``offsets[i]`` in the previous link frame and
    rotates by ``mounts[i] @ rotz(angles[i])``.  The last offset is a rigid tool.
    """
    H = np.eye(4)
    for i, th in enumerate(angles):
        H = H @ homogeneous(np.eye(3), offsets[i]) @ homogeneous(mounts[i] @ rotz(th), np.zeros(3))
    return H @ homogeneous(np.eye(3), offsets[len(angles)])


def rotation_lift_entries(R):
    v = np.concatenate([R[:, 0], R[:, 1], [1.0]])
    return np.outer(v, v)


def prismatic_items(R, tau):
    """Entry-by-entry prismatic lift built from scratch (no outer product call)."""
    z = R[:, 2]
    a, b = np.sqrt(tau), np.sqrt(1.0 - tau)
    w = [a * z[0], a * z[1], a * z[2], b * z[0], b * z[1], b * z[2], a, b]
    W = np.zeros((8, 8))
    for i in range(8):
        for j in range(8):
            W[i, j] = w[i] * w[j]
    return W


def leg_lengths(A, B, R, T):
    out = []
    for a, b in zip(A, B):
        d = np.asarray(T, float) + np.asarray(R, float) @ np.asarray(b, float) - np.asarray(a, float)
        out.append(np.sqrt(d @ d))
    return np.array(out)


def quat_to_rot(q):
    r, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * r), 2 * (x * z + y * r)],
        [2 * (x * y + z * r), 1 - 2 * (x * x + z * z), 2 * (y * z - x * r)],
        [2 * (x * z - y * r), 2 * (y * z + x * r), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng):
    q = rng.normal(size=4)
    return quat_to_rot(q / np.linalg.norm(q))


def so3_distance_by_sampling(M, n=200000, seed=0):
    """Approximate min over SO(3) of ``|M - R|_F`` by dense random sampling plus local polish."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    best, best_q = np.inf, None
    for qi in q:
        d = np.linalg.norm(M - quat_to_rot(qi))
        if d < best:
            best, best_q = d, qi
    # coordinate polish on the quaternion sphere
    step = 0.05
    while step > 1e-7:
        improved = False
        for k in range(4):
            for sgn in (1, -1):
                cand = best_q.copy()
                cand[k] += sgn * step
                cand /= np.linalg.norm(cand)
                d = np.linalg.norm(M - quat_to_rot(cand))
                if d < best:
                    best, best_q, improved = d, cand, True
        if not improved:
            step /= 2
    return best


def central_difference_top_eigenvalue(M, E, h=1e-5):
    lp = np.linalg.eigvalsh(M + h * E)[-1]
    lm = np.linalg.eigvalsh(M - h * E)[-1]
    return (lp - lm) / (2 * h)
