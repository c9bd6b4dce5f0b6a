"""Command line entry point: ``iksdp solve|batch|certify|stewart|roundtrip``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .assembly import GoalSpec
from .backend import SolverSettings
from .catalog import ROBOT_NAMES, load_robot
from .lifting import QUAT, ROT
from .rankmin import AUTO, COSTRELAX, EIGENMAX, RANK_ONE, RankMinConfig, certify
from .robot_model import DIETMAIER, ModelError, Pose

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_INFEASIBLE = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--robot", required=True,
                   help=f"bundled name ({', '.join(ROBOT_NAMES)}) or a JSON description path")
    p.add_argument("--mode", choices=(ROT, QUAT), default=ROT)
    p.add_argument("--variant", choices=(AUTO, EIGENMAX, COSTRELAX), default=AUTO)
    p.add_argument("--c0", type=float, default=None)
    p.add_argument("--adaptive-c", dest="adaptive_c", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--restarts", type=int, default=10, help="restart attempts (0 disables)")
    p.add_argument("--eps1", type=float, default=1e-3)
    p.add_argument("--eps2", type=float, default=1e-7)
    p.add_argument("--kmax", type=int, default=200)
    p.add_argument("--mdirs", type=int, default=42)
    p.add_argument("--limits", choices=("polyhedron", "ball"), default="polyhedron")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--config", default=None,
                   help="JSON file of RankMinConfig fields; its values override flags")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iksdp", description="Inverse kinematics by lifted SDP")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one goal pose")
    _common(s)
    s.add_argument("--goal", required=True,
                   help='JSON file or inline JSON {"R": [9 values], "T": [3 values]}')
    s.add_argument("--trace", default=None, help="write the iteration trace CSV here")

    b = sub.add_parser("batch", help="solve a batch of sampled goals")
    _common(b)
    b.add_argument("--count", type=int, default=10)
    b.add_argument("--sampler", default="roundtrip",
                   choices=("roundtrip", "feasible", "box", "out_of_reach", "closed"))
    b.add_argument("--certify", action="store_true",
                   help="certify unreached goals as Infeasible where possible")

    c = sub.add_parser("certify", help="try to prove a goal unreachable")
    _common(c)
    c.add_argument("--goal", required=True)

    st = sub.add_parser("stewart", help="compare solved leg extensions with analytic lengths")
    _common(st)
    st.add_argument("--count", type=int, default=20)
    st.add_argument("--poses", choices=("box", "forward", "feasible"), default="box",
                    help="box: sampled goal box; forward: all assembly postures for the "
                         "tabulated legs; feasible: poses with reachable legs")

    r = sub.add_parser("roundtrip", help="forward kinematics goals solved back")
    _common(r)
    r.add_argument("--count", type=int, default=25)
    return ap


def config_from_args(a) -> RankMinConfig:
    return RankMinConfig(eps1=a.eps1, eps2=a.eps2, k_max=a.kmax, variant=a.variant, c0=a.c0,
                         adaptive_c=a.adaptive_c, restart_attempts=max(a.restarts, 0),
                         mode=a.mode, m_dirs=a.mdirs, limits=a.limits, seed=a.seed,
                         solver=SolverSettings())


def parse_goal(text: str) -> GoalSpec:
    inline = text.lstrip().startswith("{")
    doc = json.loads(text if inline else Path(text).read_text())
    if not isinstance(doc, dict) or "R" not in doc or "T" not in doc:
        raise ModelError('goal must be an object with "R" and "T"')
    R = np.asarray(doc["R"], dtype=float).reshape(3, 3)
    return GoalSpec(Pose(R, doc["T"]), float(doc.get("weight_rotation", 1.0)),
                    float(doc.get("weight_translation", 1.0)))


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        print(text)
        return
    path = Path(out)
    if path.suffix == "":
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    path.write_text(text if text.endswith("\n") else text + "\n")
    print(f"wrote {path}", file=sys.stderr)


def _finite(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def _batch_output(reports, out, label) -> int:
    csv_text = bench.summary_csv(reports)
    agg = _finite(bench.aggregate(reports))
    if out is None:
        print(csv_text, end="")
    else:
        _emit(csv_text, out if Path(out).suffix == "" else out, f"{label}.csv")
        if Path(out).suffix == "":
            _emit(json.dumps(agg, indent=1), out, f"{label}_summary.json")
    print(json.dumps(agg), file=sys.stderr)
    return EXIT_OK if agg["success_rate"] == 1.0 else EXIT_FAIL


def cmd_solve(a, g, cfg) -> int:
    goal = parse_goal(a.goal)
    report, res = bench.solve_goal(g, goal, cfg, restarts=a.restarts > 0, certify_miss=True)
    if a.trace:
        res.trace.to_csv(a.trace)
    _emit(report.to_json(indent=1), a.out, "report.json")
    if report.status == "Infeasible":
        return EXIT_INFEASIBLE
    return EXIT_OK if report.status == RANK_ONE and report.f_lifted <= 1e-6 else EXIT_FAIL


def cmd_certify(a, g, cfg) -> int:
    goal = parse_goal(a.goal)
    t0 = time.perf_counter()
    r = certify(g, goal, cfg.mode, cfg.m_dirs)
    doc = {"status": r.status, "unreachable": r.status == "Infeasible",
           "raw_status": r.raw_status, "wall_time": time.perf_counter() - t0}
    _emit(json.dumps(doc, indent=1), a.out, "certificate.json")
    if r.status == "Infeasible":
        return EXIT_INFEASIBLE
    return EXIT_OK if r.status == "Optimal" else EXIT_FAIL


def cmd_batch(a, g, cfg) -> int:
    spec = bench.BatchSpec(robot=a.robot, count=a.count, seed=a.seed, sampler=a.sampler,
                           config=cfg, restarts=a.restarts > 0)
    goals = bench.batch_goals(g, spec)
    reports = bench.run_batch(g, goals, cfg, spec.restarts, a.jobs, a.certify)
    return _batch_output(reports, a.out, "batch")


def cmd_roundtrip(a, g, cfg) -> int:
    goals = [gl for _, gl in bench.roundtrip_goals(g, a.count, a.seed)]
    reports = bench.run_batch(g, goals, cfg, a.restarts > 0, a.jobs)
    return _batch_output(reports, a.out, "roundtrip")


def cmd_stewart(a, g, cfg) -> int:
    if a.poses == "box":
        poses = bench.stewart_box_poses(a.count, a.seed)
    elif a.poses == "feasible":
        poses = bench.stewart_feasible_poses(g, a.count, a.seed)
    else:
        poses = bench.stewart_forward(g, DIETMAIER["legs"], seed=a.seed)[:a.count]
    rows = bench.stewart_check(g, poses, cfg, a.restarts > 0)
    _emit(bench.stewart_table(rows), a.out, "stewart.csv")
    solved = sum(r.status == RANK_ONE and r.f <= 1e-6 for r in rows)
    print(f"solved {solved}/{len(rows)}; analytically reachable "
          f"{sum(r.feasible for r in rows)}/{len(rows)}", file=sys.stderr)
    return EXIT_OK if solved == len(rows) else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "batch": cmd_batch, "certify": cmd_certify,
            "stewart": cmd_stewart, "roundtrip": cmd_roundtrip}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        g = load_robot(a.robot)
        cfg = config_from_args(a)
        if a.config:
            cfg = replace(cfg, **json.loads(Path(a.config).read_text()))
        return COMMANDS[a.command](a, g, cfg)
    except (ModelError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"iksdp: invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValueError, TypeError) as exc:
        print(f"iksdp: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
