import numpy as np
import pytest

from iksdp.lifting import (LiftError, factor_prismatic, is_psd, lift_prismatic, lift_quaternion,
                           lift_rotation, prismatic_residuals, quaternion_from_rotation, rank_gap,
                           recover_rotation, recover_tau, rotation_from_quaternion_lift,
                           structure_residual)
from iksdp.robot_model import rot_x, rot_z
from iksdp.verify import so3_distance

from oracles import prismatic_items, quat_to_rot, random_rotation, rotation_lift_entries


def test_identity_lift():
    Y = lift_rotation(np.eye(3))
    v = np.array([1, 0, 0, 0, 1, 0, 1.0])
    np.testing.assert_array_equal(Y, np.outer(v, v))
    assert np.linalg.eigvalsh(Y)[-1] == pytest.approx(3.0)


def test_quarter_turn_lift():
    Y = lift_rotation(rot_z(np.pi / 2))
    v = np.array([0, 1, 0, -1, 0, 0, 1.0])
    np.testing.assert_allclose(Y, np.outer(v, v), atol=1e-15)


def test_lift_matches_entry_oracle(rng):
    R = random_rotation(rng)
    np.testing.assert_allclose(lift_rotation(R), rotation_lift_entries(R), atol=1e-15)


def test_recover_identity():
    np.testing.assert_allclose(recover_rotation(lift_rotation(np.eye(3))), np.eye(3))


def test_rotation_round_trip_1000(rng):
    worst = 0.0
    for _ in range(1000):
        R = random_rotation(rng)
        worst = max(worst, np.linalg.norm(recover_rotation(lift_rotation(R)) - R))
    assert worst < 1e-12


def test_averaged_lifts_are_flagged(rng):
    Ra, Rb = random_rotation(rng), random_rotation(rng)
    Y = 0.5 * (lift_rotation(Ra) + lift_rotation(Rb))
    np.testing.assert_allclose(structure_residual(Y), 0.0, atol=1e-15)
    R = recover_rotation(Y)
    # third column is the averaged cross-product map, not the cross product of the columns
    assert np.linalg.norm(R[:, 2] - np.cross(R[:, 0], R[:, 1])) > 1e-3
    assert rank_gap(Y) > 1e-3


def test_recover_rejects_bad_structure():
    Y = lift_rotation(np.eye(3))
    Y[6, 6] = 2.0
    with pytest.raises(LiftError):
        recover_rotation(Y)


def test_non_rotation_rejected():
    with pytest.raises(LiftError):
        lift_rotation(2 * np.eye(3))


def test_prismatic_full_extension():
    W = lift_prismatic(np.eye(3), 1.0)
    w = np.array([0, 0, 1, 0, 0, 0, 1, 0.0])
    np.testing.assert_allclose(W, np.outer(w, w), atol=1e-15)
    np.testing.assert_allclose(W[0:3, 6], [0, 0, 1])


def test_prismatic_zero_extension():
    W = lift_prismatic(np.eye(3), 0.0)
    np.testing.assert_allclose(W[0:3, 6], 0.0)
    assert W[6, 6] == 0.0


def test_prismatic_items_against_entry_oracle(rng):
    for _ in range(50):
        R, tau = random_rotation(rng), rng.uniform()
        W = lift_prismatic(R, tau)
        np.testing.assert_allclose(W, prismatic_items(R, tau), atol=1e-15)
        res = prismatic_residuals(W, R[:, 2])
        assert max(np.abs(v).max() for v in res.values()) <= 1e-12


def test_prismatic_residual_reports_violation():
    W = lift_prismatic(np.eye(3), 0.4)
    W[3, 6] += 0.25
    W[6, 3] += 0.25
    assert np.abs(prismatic_residuals(W)["cross_column"]).max() == pytest.approx(0.25)


def test_recover_tau():
    assert recover_tau(lift_prismatic(np.eye(3), 0.37)) == pytest.approx(0.37, abs=1e-15)
    W = lift_prismatic(np.eye(3), 1.0)
    W[6, 6] = 1 + 1e-12
    assert recover_tau(W) == 1.0
    W[6, 6] = 1.01
    with pytest.raises(LiftError):
        recover_tau(W)


def test_factor_prismatic_rejects_mismatched_axes(rng):
    y1, y2 = rng.normal(size=3), rng.normal(size=3)
    y1, y2 = y1 / np.linalg.norm(y1), y2 / np.linalg.norm(y2)
    t = 0.3
    m = np.concatenate([np.sqrt(t) * y1, np.sqrt(1 - t) * y2, [np.sqrt(t), np.sqrt(1 - t)]])
    with pytest.raises(LiftError):
        factor_prismatic(np.outer(m, m))


def test_quaternion_lifts():
    np.testing.assert_allclose(lift_quaternion(np.eye(3)), np.diag([1.0, 0, 0, 0]))
    np.testing.assert_allclose(lift_quaternion(rot_x(np.pi)), np.diag([0, 1.0, 0, 0]), atol=1e-15)


def test_rotation_from_quaternion_lift_cases():
    np.testing.assert_allclose(rotation_from_quaternion_lift(np.diag([1.0, 0, 0, 0])), np.eye(3))
    np.testing.assert_allclose(rotation_from_quaternion_lift(np.diag([0, 0, 0, 1.0])),
                               np.diag([-1.0, -1, 1]))
    R = rotation_from_quaternion_lift(0.5 * np.diag([1.0, 1, 0, 0]))
    assert abs(np.linalg.det(R) - 1) > 1e-3
    assert so3_distance(R) > 1e-3


def test_quaternion_round_trip(rng):
    for _ in range(200):
        R = random_rotation(rng)
        np.testing.assert_allclose(rotation_from_quaternion_lift(lift_quaternion(R)), R,
                                   atol=1e-12)


def test_quaternion_formula_matches_oracle(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    np.testing.assert_allclose(rotation_from_quaternion_lift(np.outer(q, q)), quat_to_rot(q),
                               atol=1e-14)
    # the (3, 2) entry is 2(yz + xr): a doubled xr term would break orthogonality
    Rq = quat_to_rot(q)
    np.testing.assert_allclose(Rq.T @ Rq, np.eye(3), atol=1e-14)


def test_quaternion_sign_convention():
    q = quaternion_from_rotation(rot_z(0.5))
    assert q[0] > 0
    np.testing.assert_allclose(q, [np.cos(0.25), 0, 0, np.sin(0.25)], atol=1e-15)


def test_rank_gap_cases(rng):
    v = rng.normal(size=7)
    assert rank_gap(np.outer(v, v)) <= 1e-12 * (v @ v)
    assert rank_gap(np.diag([2.0, 1, 0, 0])) == pytest.approx(1.0)
    eps = 1e-4
    u = v / np.linalg.norm(v)
    M = 3 * np.outer(u, u) + eps * np.eye(7)
    assert eps * (1 - 1e-9) <= rank_gap(M) <= eps * (1 + 1e-9)


def test_is_psd():
    assert is_psd(np.eye(3))
    assert not is_psd(np.diag([1.0, -1e-3]))
