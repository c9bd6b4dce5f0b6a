import json

import numpy as np
import pytest

from iksdp import bench
from iksdp.assembly import GoalSpec
from iksdp.catalog import load_robot
from iksdp.cli import EXIT_FAIL, EXIT_INFEASIBLE, EXIT_OK, EXIT_SCHEMA, main
from iksdp.rankmin import RankMinConfig
from iksdp.robot_model import DIETMAIER, Pose, forward_kinematics, sample_config

from oracles import leg_lengths


def goal_json(pose):
    return json.dumps({"R": pose.R.reshape(-1).tolist(), "T": pose.T.tolist()})


def test_solve_reachable_goal_exits_zero(tmp_path, capsys):
    g = load_robot("planar2")
    pose = forward_kinematics(g, sample_config(g, 3))[g.end_effector]
    code = main(["solve", "--robot", "planar2", "--goal", goal_json(pose),
                 "--trace", str(tmp_path / "trace.csv")])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["status"] == "RankOne" and report["err_T"] <= 1e-6
    assert (tmp_path / "trace.csv").read_text().startswith("k,block,lambda1")


def test_solve_far_goal_reports_infeasible():
    far = Pose(np.eye(3), [5.0, 0.0, 0.0])
    assert main(["solve", "--robot", "planar2", "--goal", goal_json(far)]) == EXIT_INFEASIBLE


def test_certify_subcommand(capsys):
    far = Pose(np.eye(3), [0.0, 9.0, 0.0])
    assert main(["certify", "--robot", "chain7", "--goal", goal_json(far)]) == EXIT_INFEASIBLE
    assert json.loads(capsys.readouterr().out)["unreachable"] is True


def test_malformed_robot_file(tmp_path):
    bad = tmp_path / "robot.json"
    bad.write_text('{"links": ["a"], "joints": 3}')
    goal = goal_json(Pose.identity())
    assert main(["solve", "--robot", str(bad), "--goal", goal]) == EXIT_SCHEMA
    bad.write_text("{not json")
    assert main(["solve", "--robot", str(bad), "--goal", goal]) == EXIT_SCHEMA


def test_malformed_goal():
    assert main(["solve", "--robot", "planar2", "--goal", '{"R": [1]}']) == EXIT_SCHEMA


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k_max": 0}))
    g = load_robot("chain7")
    pose = forward_kinematics(g, sample_config(g, 0))[g.end_effector]
    code = main(["solve", "--robot", "chain7", "--kmax", "200", "--restarts", "0",
                 "--config", str(cfg), "--goal", goal_json(pose)])
    assert code == EXIT_FAIL


def test_roundtrip_zero_goals_passes(capsys):
    assert main(["roundtrip", "--robot", "planar3", "--count", "0", "--jobs", "1"]) == EXIT_OK


def test_batch_out_of_reach_certified(tmp_path):
    code = main(["batch", "--robot", "planar3", "--count", "4", "--sampler", "out_of_reach",
                 "--certify", "--jobs", "1", "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    summary = json.loads((tmp_path / "batch_summary.json").read_text())
    assert summary["infeasible_rate"] == 1.0


def test_batch_spec_validation():
    with pytest.raises(ValueError):
        bench.BatchSpec(robot="planar2", count=0)
    with pytest.raises(ValueError):
        bench.BatchSpec(robot="planar2", box={"x": (1.0, 0.0)})


def test_batch_is_deterministic():
    g = load_robot("planar3")
    spec = bench.BatchSpec(robot="planar3", count=4, seed=9, sampler="box")
    runs = [bench.summary_csv(bench.run_batch(g, bench.batch_goals(g, spec), spec.config,
                                              jobs=1), timing=False) for _ in range(2)]
    assert runs[0] == runs[1]


def test_batch_isolates_a_broken_item():
    g = load_robot("planar2")
    goals = [gl for _, gl in bench.roundtrip_goals(g, 2, 0)]
    alone = bench.run_batch(g, goals, RankMinConfig(), jobs=1)
    mixed = bench.run_batch(g, [goals[0], None, goals[1]], RankMinConfig(), jobs=1)
    assert mixed[1].status == "Failed"
    assert bench.summary_csv([mixed[0], mixed[2]], timing=False) == bench.summary_csv(
        alone, timing=False)


def test_roundtrip_samples_are_reproducible():
    g = load_robot("chain7")
    a = bench.roundtrip_goals(g, 3, 5)
    b = bench.roundtrip_goals(g, 3, 5)
    for (qa, ga), (qb, gb) in zip(a, b):
        assert qa.angles == qb.angles
        assert ga.target.allclose(gb.target, atol=0)


def test_out_of_reach_goals_exceed_reach():
    g = load_robot("chain7")
    base = g.bases[next(iter(g.bases))].T
    for _, gl in bench.out_of_reach_goals(g, 10, 0):
        assert np.linalg.norm(gl.target.T - base) > bench.total_reach(g)


def test_dual_arm_roundtrip_closes():
    g = load_robot("dual_arm")
    for q, goal in bench.closed_chain_goals(g, 2, 0):
        rep, _ = bench.solve_goal(g, goal, RankMinConfig())
        if rep.status == "RankOne":
            assert rep.closure_residual <= 1e-6


def test_dietmaier_forward_postures_match_legs():
    g = load_robot("stewart_dietmaier")
    poses = bench.stewart_forward(g, DIETMAIER["legs"])
    assert len(poses) == 40          # every assembly mode of this geometry is real
    for p in poses:
        np.testing.assert_allclose(
            leg_lengths(DIETMAIER["base"], DIETMAIER["platform"], p.R, p.T),
            DIETMAIER["legs"], atol=1e-8)


def test_dietmaier_extensions_recovered():
    g = load_robot("stewart_dietmaier")
    poses = bench.stewart_forward(g, DIETMAIER["legs"])[:2]
    rows = bench.stewart_check(g, poses, RankMinConfig(mode="quat"))
    for r in rows:
        assert r.feasible and r.status == "RankOne"
        assert r.leg_error.max() <= 1e-4
    assert "mean_abs_error" in bench.stewart_table(rows)


def test_stewart_goal_beyond_extension_limits_is_not_clamped():
    g = load_robot("stewart_gd")
    pose = Pose(np.eye(3), [0.0, 0.0, 3.5])
    row = bench.stewart_check(g, [pose], RankMinConfig())[0]
    assert not row.feasible
    assert row.status == "Infeasible" or row.f > 1e-6 or row.status != "RankOne"
    rep, _ = bench.solve_goal(g, GoalSpec(pose), RankMinConfig(), certify_miss=True)
    assert not (rep.status == "RankOne" and rep.f_lifted <= 1e-6)
