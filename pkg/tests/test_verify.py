import numpy as np
import pytest

from iksdp.assembly import GoalSpec, Layout, assemble_relaxation, lift_configuration
from iksdp.bench import closed_chain_goals, roundtrip_goals
from iksdp.catalog import load_robot
from iksdp.lifting import QUAT
from iksdp.rankmin import STALLED, RankMinConfig, run
from iksdp.robot_model import (DIETMAIER, PRISMATIC, ModelError, forward_kinematics, load_model,
                               sample_config)
from iksdp.verify import (extract_solution, identity_state, project_so3, so3_distance, verify)

from conftest import serial_doc
from oracles import random_rotation, so3_distance_by_sampling


class Done:
    """Minimal stand-in for a finished run built from an exact lifted point."""

    def __init__(self, prog, x):
        self.prog, self.x = prog, x
        self.status, self.iterations, self.restarts = "RankOne", 0, 0
        self.variant, self.message = "EigenMax", ""


@pytest.mark.parametrize("name", ["planar3", "chain7", "stewart_dietmaier"])
def test_extract_recovers_joint_values(name):
    g = load_robot(name)
    q = sample_config(g, 8) if name != "stewart_dietmaier" else None
    if q is None:
        from iksdp.bench import stewart_config, stewart_forward
        q = stewart_config(g, stewart_forward(g, DIETMAIER["legs"])[0])
    goal = GoalSpec(forward_kinematics(g, q)[g.end_effector])
    layout = assemble_relaxation(g, goal).layout
    ex = extract_solution(g, layout, lift_configuration(g, q, layout))
    assert ex.certified
    for k, th in q.angles.items():
        assert abs(np.angle(np.exp(1j * (ex.config.angles[k] - th)))) <= 1e-8
    for k, t in q.extensions.items():
        assert ex.config.extensions[k] == pytest.approx(t, abs=1e-8)


def test_identity_state_stacks_offsets():
    offs = [(0, 0, 0), (1.0, 0, 0), (0.5, 0.2, 0)]
    g = load_model(serial_doc(offs, tool_offset=(0.3, 0, 0)))
    layout = assemble_relaxation(g, GoalSpec(forward_kinematics(g, sample_config(g, 0))["tool"])).layout
    ex = extract_solution(g, layout, identity_state(g, layout))
    assert all(abs(a) <= 1e-12 for a in ex.config.angles.values())
    np.testing.assert_allclose(ex.poses["tool"].T, [1.8, 0.2, 0.0], atol=1e-12)
    np.testing.assert_allclose(ex.poses["l2"].T, [1.0, 0.0, 0.0], atol=1e-12)


def test_identity_state_rejects_foreign_layout():
    g = load_robot("planar2")
    other = Layout.from_blocks([("zz", 7, "rot")])
    with pytest.raises(ModelError):
        identity_state(g, other)


def test_closed_chain_exact_state_closes():
    g = load_robot("dual_arm")
    q, goal = closed_chain_goals(g, 1, 2)[0]
    prog = assemble_relaxation(g, goal)
    rep = verify(g, goal, Done(prog, lift_configuration(g, q, prog.layout)))
    assert rep.closure_residual <= 1e-8
    assert rep.err_T <= 1e-8 and rep.certified


def test_so3_distance_cases(rng):
    assert so3_distance(random_rotation(rng)) <= 1e-14
    assert so3_distance(2 * np.eye(3)) == pytest.approx(np.sqrt(3))
    M = np.diag([1.0, 1.0, -1.0]) + 0.1 * rng.normal(size=(3, 3))
    assert np.linalg.det(M) < 0
    assert so3_distance(M) == pytest.approx(so3_distance_by_sampling(M, n=20000), abs=1e-3)


def test_projection_flags_zero_matrix():
    _, ill = project_so3(np.zeros((3, 3)))
    assert ill


def test_verify_exact_state_scores_zero():
    g = load_robot("chain7")
    q = sample_config(g, 4)
    goal = GoalSpec(forward_kinematics(g, q)[g.end_effector])
    for mode in ("rot", QUAT):
        prog = assemble_relaxation(g, goal, mode)
        rep = verify(g, goal, Done(prog, lift_configuration(g, q, prog.layout)))
        assert rep.err_R <= 1e-8 and rep.err_T <= 1e-8
        assert rep.f_discrepancy <= 1e-8
        assert rep.max_so3_distance <= 1e-8
        assert rep.min_limit_slack >= -1e-12


def test_truncated_run_reports_rank_gap():
    g = load_robot("chain7")
    _, goal = roundtrip_goals(g, 1, 0)[0]
    res = run(g, goal, RankMinConfig(k_max=0), restarts=False)
    assert res.status == STALLED
    rep = verify(g, goal, res)
    assert rep.max_rank_gap > 1e-3
    assert not rep.certified


def test_report_json_has_no_nan():
    g = load_robot("planar2")
    _, goal = roundtrip_goals(g, 1, 0)[0]
    res = run(g, goal)
    res.x = None
    text = verify(g, goal, res).to_json()
    assert "NaN" not in text and "null" in text


def test_prismatic_extensions_from_relaxed_solve():
    g = load_robot("stewart_dietmaier")
    from iksdp.bench import stewart_config, stewart_forward
    pose = stewart_forward(g, DIETMAIER["legs"])[3]
    q = stewart_config(g, pose)
    res = run(g, GoalSpec(pose), RankMinConfig(mode=QUAT))
    ex = extract_solution(g, res.prog.layout, res.x)
    for e in g.edges_of(PRISMATIC):
        assert e.extension(ex.config.extensions[e.key]) == pytest.approx(
            e.extension(q.extensions[e.key]), abs=1e-4)
