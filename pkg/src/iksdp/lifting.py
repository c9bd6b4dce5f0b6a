"""Lifted PSD representations of rotations, prismatic extensions and quaternions.

Index conventions (0-based) for the 7x7 rotation lift ``Y = v v^T`` with
``v = (R[:, 0], R[:, 1], 1)``:

* first column  ``Y[0:3, 6]``
* second column ``Y[3:6, 6]``
* third column  ``(Y[1,5]-Y[2,4], Y[2,3]-Y[0,5], Y[0,4]-Y[1,3])``, the cross
  product of the first two written in the quadratic entries

The 8x8 prismatic lift is ``W = w w^T`` with
``w = (sqrt(t) z, sqrt(1-t) z, sqrt(t), sqrt(1-t))`` for the sliding axis ``z``.
The 4x4 quaternion lift is ``Q = q q^T`` with ``q = (q_r, q_x, q_y, q_z)``.
"""
from __future__ import annotations

import numpy as np

from .robot_model import TOL_SO3, is_rotation

TOL_PSD = 1e-9
TOL_LIN = 1e-8

ROT, QUAT = "rot", "quat"
BLOCK_SIZE = {ROT: 7, QUAT: 4}
#: trace of each lifted block, the value ``lambda_1`` reaches at rank one
TRACE = {ROT: 3.0, QUAT: 1.0, "tau": 2.0}


class LiftError(ValueError):
    pass


def _check_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, TOL_SO3):
        raise LiftError("input is not a rotation matrix")
    return R


def lift_rotation(R) -> np.ndarray:
    R = _check_rotation(R)
    v = np.concatenate([R[:, 0], R[:, 1], [1.0]])
    return np.outer(v, v)


def structure_residual(Y) -> np.ndarray:
    """Residuals of the four structure equalities of a rotation lift."""
    Y = np.asarray(Y, dtype=float)
    return np.array([
        np.trace(Y[0:3, 0:3]) - 1.0,
        np.trace(Y[3:6, 3:6]) - 1.0,
        np.trace(Y[0:3, 3:6]),
        Y[6, 6] - 1.0,
    ])


def third_column(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return np.array([Y[1, 5] - Y[2, 4], Y[2, 3] - Y[0, 5], Y[0, 4] - Y[1, 3]])


def rotation_from_lift(Y) -> np.ndarray:
    """The linear map from a 7x7 lift to a 3x3 matrix, without any checks."""
    Y = np.asarray(Y, dtype=float)
    return np.column_stack([Y[0:3, 6], Y[3:6, 6], third_column(Y)])


def recover_rotation(Y, tol: float = TOL_LIN) -> np.ndarray:
    """Read the rotation encoded in a (possibly higher-rank) rotation lift.

    The result lies on SO(3) exactly when ``Y`` has rank one; use
    :func:`rank_gap` to decide whether a relaxed block is acceptable.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (7, 7):
        raise LiftError(f"expected a 7x7 block, got {Y.shape}")
    res = np.abs(structure_residual(Y)).max()
    if res > tol:
        raise LiftError(f"structure constraints violated by {res:.3g}")
    return rotation_from_lift(Y)


def lift_prismatic(R, tau: float) -> np.ndarray:
    """8x8 lift of the sliding axis ``R[:, 2]`` and normalised extension ``tau``."""
    R = np.asarray(R, dtype=float)
    z = R[:, 2] if R.ndim == 2 else R.reshape(3)
    if abs(np.linalg.norm(z) - 1.0) > TOL_SO3:
        raise LiftError("sliding axis must have unit length")
    if not 0.0 <= tau <= 1.0:
        raise LiftError(f"tau={tau} outside [0, 1]")
    a, b = np.sqrt(tau), np.sqrt(1.0 - tau)
    w = np.concatenate([a * z, b * z, [a, b]])
    return np.outer(w, w)


def prismatic_residuals(W, axis=None) -> dict[str, np.ndarray]:
    """Residuals of the seven linear relations on a prismatic lift.

    Equalities are zero when satisfied; inequality entries are the amount of
    violation (zero when satisfied).  ``axis`` is the third rotation column
    the lift must agree with; item 7 is skipped when it is None.
    """
    W = np.asarray(W, dtype=float)
    out = {
        "trace": np.array([np.trace(W) - 2.0]),
        "block_trace": np.array([np.trace(W[0:3, 0:3]) - W[6, 6],
                                 np.trace(W[3:6, 3:6]) - W[7, 7]]),
        "cross_column": W[3:6, 6] - W[0:3, 7],
        "cross_trace": np.array([np.trace(W[0:3, 3:6]) - W[6, 7]]),
        "tau_range": np.array([max(-W[6, 6], 0.0), max(W[6, 6] - 1.0, 0.0)]),
        "cross_sign": np.array([max(-W[6, 7], 0.0)]),
    }
    if axis is not None:
        out["axis"] = W[0:3, 6] + W[3:6, 7] - np.asarray(axis, dtype=float)
    return out


def recover_tau(W, tol: float = TOL_LIN) -> float:
    t = float(np.asarray(W)[6, 6])
    if t < -tol or t > 1.0 + tol:
        raise LiftError(f"extension entry {t:.6g} outside [0, 1]")
    return min(max(t, 0.0), 1.0)


def factor_prismatic(W, tol: float = 1e-9) -> tuple[float, np.ndarray, float]:
    """Split a rank-one prismatic lift into ``(t, y, s)``.

    The lift equals ``m m'`` with ``m = (sqrt(t) y, sqrt(1-t) y, s sqrt(t), s sqrt(1-t))``,
    ``|y| = 1`` and one sign ``s`` shared by the last two entries.  Raises
    :class:`LiftError` if ``W`` has no factor of that shape within ``tol``.
    """
    W = np.asarray(W, dtype=float)
    if W.shape != (8, 8):
        raise LiftError(f"expected an 8x8 block, got {W.shape}")
    lam, V = np.linalg.eigh(0.5 * (W + W.T))
    w = np.sqrt(max(lam[-1], 0.0)) * V[:, -1]
    a, b = abs(w[6]), abs(w[7])   # sqrt(t) and sqrt(1 - t), kept apart for accuracy
    t = float(min(max(a * a, 0.0), 1.0))
    # w is the factor up to a global sign; (y, s) and (-y, -s) describe the same lift
    u = w[0:3] + w[3:6]
    n = np.linalg.norm(u)
    if n == 0.0:
        raise LiftError("lift has no sliding-axis component")
    y = u / n
    s = 1.0 if (w[6] if abs(w[6]) >= abs(w[7]) else w[7]) >= 0 else -1.0
    m = np.concatenate([a * y, b * y, [s * a, s * b]])
    err = float(np.abs(W - np.outer(m, m)).max())
    if err > tol:
        raise LiftError(f"lift is not of the matched-sign form (error {err:.3g})")
    return t, y, s


def quaternion_from_rotation(R) -> np.ndarray:
    """Unit quaternion ``(r, x, y, z)``, picking the largest component first."""
    R = _check_rotation(R)
    tr = np.trace(R)
    cands = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(cands))
    if k == 0:
        r = 0.5 * np.sqrt(1.0 + tr)
        q = np.array([r, (R[2, 1] - R[1, 2]) / (4 * r),
                      (R[0, 2] - R[2, 0]) / (4 * r), (R[1, 0] - R[0, 1]) / (4 * r)])
    elif k == 1:
        x = 0.5 * np.sqrt(1.0 + 2 * R[0, 0] - tr)
        q = np.array([(R[2, 1] - R[1, 2]) / (4 * x), x,
                      (R[0, 1] + R[1, 0]) / (4 * x), (R[0, 2] + R[2, 0]) / (4 * x)])
    elif k == 2:
        y = 0.5 * np.sqrt(1.0 + 2 * R[1, 1] - tr)
        q = np.array([(R[0, 2] - R[2, 0]) / (4 * y), (R[0, 1] + R[1, 0]) / (4 * y),
                      y, (R[1, 2] + R[2, 1]) / (4 * y)])
    else:
        z = 0.5 * np.sqrt(1.0 + 2 * R[2, 2] - tr)
        q = np.array([(R[1, 0] - R[0, 1]) / (4 * z), (R[0, 2] + R[2, 0]) / (4 * z),
                      (R[1, 2] + R[2, 1]) / (4 * z), z])
    return q / np.linalg.norm(q)


def lift_quaternion(R) -> np.ndarray:
    q = quaternion_from_rotation(R)
    return np.outer(q, q)


def rotation_from_quaternion_lift(Q) -> np.ndarray:
    """Rotation matrix whose entries are affine in the entries of ``Q``."""
    Q = np.asarray(Q, dtype=float)
    rr, xx, yy, zz = Q[0, 0], Q[1, 1], Q[2, 2], Q[3, 3]
    rx, ry, rz = Q[0, 1], Q[0, 2], Q[0, 3]
    xy, xz, yz = Q[1, 2], Q[1, 3], Q[2, 3]
    return np.array([
        [1 - 2 * (yy + zz), 2 * (xy - rz), 2 * (xz + ry)],
        [2 * (xy + rz), 1 - 2 * (xx + zz), 2 * (yz - rx)],
        [2 * (xz - ry), 2 * (yz + rx), 1 - 2 * (xx + yy)],
    ])


def rank_gap(M) -> float:
    """Second-largest eigenvalue, clipped at zero."""
    w = np.linalg.eigvalsh(np.asarray(M, dtype=float))
    return float(max(w[-2], 0.0)) if len(w) > 1 else 0.0


def is_psd(M, tol: float = TOL_PSD) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= -tol)
