import numpy as np
import pytest

from iksdp.assembly import (Affine, ConicProgram, GoalSpec, Layout, QuadraticObjective,
                            assemble_angle_balls, assemble_angle_polyhedron, assemble_axis,
                            assemble_closure, assemble_cost, assemble_parallel,
                            assemble_prismatic, assemble_relaxation, assemble_stationarity,
                            assemble_structure, lift_configuration, smat, sphere_directions, svec,
                            svec_size, tau_block_name)
from iksdp.backend import solve
from iksdp.bench import stewart_config, stewart_feasible_poses
from iksdp.catalog import load_robot
from iksdp.lifting import QUAT, ROT, lift_prismatic, lift_rotation
from iksdp.robot_model import (JointConfig, ModelError, Pose, forward_kinematics, load_model,
                               rot_x, rot_z, sample_config)

from conftest import revolute, serial_doc
from oracles import random_rotation


def rows_residual(rb, x):
    return np.abs(rb.A @ x - rb.b).max() if len(rb.b) else 0.0


def test_svec_round_trip_and_inner_product(rng):
    A = rng.normal(size=(5, 5))
    A = A + A.T
    B = rng.normal(size=(5, 5))
    B = B + B.T
    np.testing.assert_allclose(smat(svec(A), 5), A)
    assert svec(A) @ svec(B) == pytest.approx(np.sum(A * B))
    assert svec_size(7) == 28


def single_joint(zero=None):
    return load_model({"links": ["a", "b"], "bases": {"a": {}},
                       "joints": [revolute("a", "b", (1, 0, 0), (-1, 1), zero)],
                       "end_effector": "b"})


def test_axis_rows_aligned_mount():
    g = single_joint()
    L = Layout(g)
    rb = assemble_axis(g, L)
    assert rows_residual(rb, L.pack({"b": lift_rotation(np.eye(3))})) <= 1e-15
    assert rows_residual(rb, L.pack({"b": lift_rotation(rot_x(0.3))})) > 1e-2


def test_axis_rows_rotated_mount():
    # rot_x(-pi/2) carries e3 onto e2: the child z-column must be the parent's y-column
    g = single_joint(rot_x(-np.pi / 2))
    L = Layout(g)
    rb = assemble_axis(g, L)
    good = rot_x(-np.pi / 2) @ rot_z(0.4)
    np.testing.assert_allclose(good[:, 2], [0, 1, 0], atol=1e-15)
    assert rows_residual(rb, L.pack({"b": lift_rotation(good)})) <= 1e-14
    assert rows_residual(rb, L.pack({"b": lift_rotation(np.eye(3))})) > 0.5


@pytest.mark.parametrize("mode", [ROT, QUAT])
@pytest.mark.parametrize("name", ["planar3", "chain7", "stewart_dietmaier"])
def test_fk_lift_satisfies_every_row(name, mode):
    g = load_robot(name)
    if g.closures:
        q = stewart_config(g, stewart_feasible_poses(g, 1, 0)[0])
    else:
        q = sample_config(g, 5)
    goal = GoalSpec(forward_kinematics(g, q)[g.end_effector])
    prog = assemble_relaxation(g, goal, mode)
    x = lift_configuration(g, q, prog.layout)
    req, rin = prog.residuals(x)
    assert req <= 1e-10 and rin <= 1e-10
    assert prog.objective.value(x) <= 1e-20 + 1e-12


def test_limit_radius_values():
    for alpha, rho in ((np.pi / 3, 1.0), (np.pi / 2, np.sqrt(2))):
        g = load_model({"links": ["a", "b"], "bases": {"a": {}},
                        "joints": [revolute("a", "b", limits=(-alpha, alpha))],
                        "end_effector": "b"})
        assert g.edges[0].limit_radius == pytest.approx(rho)


def test_polyhedron_accepts_inside_rejects_outside():
    alpha = 0.8
    g = load_model({"links": ["a", "b"], "bases": {"a": {}},
                    "joints": [revolute("a", "b", limits=(-alpha, alpha))], "end_effector": "b"})
    L = Layout(g)
    ineq, _ = assemble_angle_polyhedron(g, 42, L)
    inside = L.pack({"b": lift_rotation(rot_z(0.9 * alpha))})
    outside = L.pack({"b": lift_rotation(rot_z(1.2 * alpha))})
    assert (ineq.A @ inside - ineq.b).max() <= 1e-12
    assert (ineq.A @ outside - ineq.b).max() > 0


def test_sphere_directions_are_unit():
    for m in (12, 42, 50, 162):
        D = sphere_directions(m)
        assert D.shape == (m, 3)
        np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0)


def test_locked_joint_gives_equalities():
    g = load_robot("planar2")
    _, eq = assemble_angle_polyhedron(g, 42)
    assert len(eq.b) == 3


def test_balls_are_second_order_cones():
    g = load_robot("chain7")
    L = Layout(g)
    cones = assemble_angle_balls(g, L)
    x = lift_configuration(g, sample_config(g, 1), L)
    assert len(cones) == 7
    for t in cones:
        v = t(x)
        assert np.linalg.norm(v[1:]) <= v[0] + 1e-12


def prismatic_pair(R_p=np.eye(3)):
    return load_model({"links": ["a", "b", "c"], "bases": {"a": {}},
                       "joints": [revolute("a", "b", (0, 0, 0), (-np.pi, np.pi)),
                                  {"parent": "b", "child": "c", "kind": "prismatic",
                                   "zero_rotation": np.asarray(R_p).reshape(-1).tolist(),
                                   "extension_limits": [0.2, 1.5]}],
                       "end_effector": "c"})


@pytest.mark.parametrize("mode", [ROT, QUAT])
def test_parallel_rows(mode, rng):
    Rp = random_rotation(rng)
    g = prismatic_pair(Rp)
    L = Layout(g, mode)
    rb = assemble_parallel(g, L)
    q = JointConfig(angles={("a", "b"): 0.3}, extensions={("b", "c"): 0.5})
    x = lift_configuration(g, q, L)
    assert rows_residual(rb, x) <= 1e-12
    if mode == ROT:
        R1, R2 = rot_z(0.3), random_rotation(rng)
        mats = L.unpack(x)
        mats["c"] = lift_rotation(R2)
        resid = rows_residual(rb, L.pack(mats))
        expect = np.abs(np.concatenate([R2[:, 0] - (R1 @ Rp)[:, 0], R2[:, 1] - (R1 @ Rp)[:, 1],
                                        R2[:, 2] - (R1 @ Rp)[:, 2]])).max()
        assert resid == pytest.approx(expect, abs=1e-12)
    else:
        assert len(rb.b) == 10


def test_prismatic_rows_and_violation(rng):
    g = prismatic_pair()
    L = Layout(g)
    eq, ineq = assemble_prismatic(g, L)
    for _ in range(20):
        th, tau = rng.uniform(-3, 3), rng.uniform()
        q = JointConfig(angles={("a", "b"): th}, extensions={("b", "c"): tau})
        x = lift_configuration(g, q, L)
        assert rows_residual(eq, x) <= 1e-12
        assert (ineq.A @ x - ineq.b).max() <= 1e-12
    mats = L.unpack(lift_configuration(g, JointConfig(angles={("a", "b"): 0.0},
                                                      extensions={("b", "c"): 0.5}), L))
    t = tau_block_name(g.edges[1])
    mats[t][3, 6] += 0.1
    mats[t][6, 3] += 0.1
    assert rows_residual(eq, L.pack(mats)) == pytest.approx(0.1, abs=1e-12)


def test_cost_zero_and_quadratic_offset():
    g = load_robot("planar3")
    q = sample_config(g, 2)
    ee = forward_kinematics(g, q)[g.end_effector]
    L = Layout(g)
    x = lift_configuration(g, q, L)
    assert assemble_cost(g, GoalSpec(ee), L).value(x) <= 1e-24
    d = 0.37
    goal = GoalSpec(Pose(ee.R, ee.T + [d, 0, 0]), weight_translation=2.5)
    assert assemble_cost(g, goal, L).value(x) == pytest.approx(2.5 * d * d, rel=1e-12)


def test_cost_matches_fk_on_random_goal(rng):
    g = load_robot("chain7")
    q = sample_config(g, 9)
    L = Layout(g)
    goal = GoalSpec(Pose(random_rotation(rng), rng.normal(size=3)), 0.7, 1.3)
    ee = forward_kinematics(g, q)[g.end_effector]
    direct = 0.7 * np.sum((ee.R - goal.target.R) ** 2) + 1.3 * np.sum((ee.T - goal.target.T) ** 2)
    obj = assemble_cost(g, goal, L)
    x = lift_configuration(g, q, L)
    assert obj.value(x) == pytest.approx(direct, abs=1e-10)
    # the explicit quadratic form agrees with the residual form
    assert x @ obj.P @ x + obj.q @ x + obj.r == pytest.approx(direct, abs=1e-9)


def test_degenerate_closure_rows_vanish():
    doc = {"links": ["a", "b"], "bases": {"a": {}},
           "joints": [revolute("a", "b", (1, 0, 0))], "end_effector": "b",
           "closures": [{"path_a": ["a", "b"], "path_b": ["a", "b"]}]}
    g = load_model(doc)
    assert len(assemble_closure(g).b) == 0


def test_dual_arm_closure_rows_hold_on_fitted_config():
    from iksdp.bench import closed_chain_goals
    g = load_robot("dual_arm")
    q, _ = closed_chain_goals(g, 1, 3)[0]
    L = Layout(g)
    assert rows_residual(assemble_closure(g, L), lift_configuration(g, q, L)) <= 1e-10


def test_unreachable_closure_makes_relaxation_infeasible():
    doc = serial_doc([(0, 0, 0), (1, 0, 0)], tool_offset=(1, 0, 0))
    doc["closures"] = [{"path_a": ["base"], "path_b": ["base", "l1", "l2", "tool"],
                        "relative": {"T": [10.0, 0, 0]}}]
    g = load_model(doc)
    prog = assemble_relaxation(g, GoalSpec(Pose.identity()))
    assert solve(prog).status == "Infeasible"


def test_relaxation_block_counts():
    g = single_joint()
    prog = assemble_relaxation(g, GoalSpec(Pose.identity()))
    st = prog.stats()
    assert st["blocks"] == 1 and st["block_sizes"] == {"7": 1}
    assert st["rows_by_label"]["structure"] == 4
    assert prog.eq_system[0].shape[1] == svec_size(7)


def test_griffis_duffy_blocks():
    g = load_robot("stewart_gd")
    st = assemble_relaxation(g, GoalSpec(Pose.identity())).stats()
    assert st["block_sizes"]["8"] == 6
    assert st["block_sizes"]["7"] == 13
    for mode, size in ((ROT, "7"), (QUAT, "4")):
        assert size in assemble_relaxation(g, GoalSpec(Pose.identity()), mode).stats()["block_sizes"]


def test_column_count_matches_layout():
    for name in ("planar2", "dual_arm", "stewart_dietmaier"):
        g = load_robot(name)
        prog = assemble_relaxation(g, GoalSpec(Pose.identity()))
        n = sum(svec_size(b.size) for b in prog.layout.blocks)
        assert prog.eq_system[0].shape[1] == n == prog.ineq_system[0].shape[1]


def test_stationarity_feasible_at_minimiser():
    g = load_robot("planar2")
    q = sample_config(g, 4)
    goal = GoalSpec(forward_kinematics(g, q)[g.end_effector])
    prog = assemble_relaxation(g, goal)
    st = assemble_stationarity(prog)
    x = lift_configuration(g, q, prog.layout)
    assert rows_residual(st, x) <= 1e-10
    assert solve(prog.with_rows(eq=[st])).status == "Optimal"


def test_stationarity_certifies_far_goal():
    g = load_robot("planar2")
    prog = assemble_relaxation(g, GoalSpec(Pose(np.eye(3), [5.0, 0, 0])), stationarity=True)
    assert solve(prog).status == "Infeasible"


def test_stationarity_zero_quadratic_edge_case():
    L = Layout.from_blocks([("y", 2, ROT)])
    prog = ConicProgram(L, objective=QuadraticObjective(np.zeros((3, 3)), np.zeros(3)))
    assert len(assemble_stationarity(prog).b) == 0
    prog = ConicProgram(L, objective=QuadraticObjective(np.zeros((3, 3)), np.array([1.0, 0, 0])))
    with pytest.raises(ValueError):
        assemble_stationarity(prog)


def test_stationarity_matches_gradient_form(rng):
    # rows from the reduced form have the same solutions as 2Px + q = 0
    M = rng.normal(size=(5, 8))
    c = rng.normal(size=5)
    res = Affine(M, c)
    P, q = M.T @ M, 2 * M.T @ c
    x_star = np.linalg.lstsq(M, -c, rcond=None)[0]
    np.testing.assert_allclose(2 * P @ x_star + q, 0, atol=1e-10)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    np.testing.assert_allclose(Vt @ x_star, -(U.T @ c) / s, atol=1e-10)
    np.testing.assert_allclose(M.T @ res(x_star), 0, atol=1e-10)


def test_closure_bad_paths_rejected():
    doc = serial_doc([(0, 0, 0)], tool_offset=(1, 0, 0))
    doc["closures"] = [{"path_a": ["l1"], "path_b": ["base", "l1"]}]
    with pytest.raises(ModelError):
        load_model(doc)
