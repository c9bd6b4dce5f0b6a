"""Semidefinite-relaxation inverse kinematics for serial, closed and parallel chains.

Typical use::

    from iksdp import load_robot, GoalSpec, RankMinConfig, run, verify
    g = load_robot("chain7")
    res = run(g, GoalSpec(target_pose))
    report = verify(g, GoalSpec(target_pose), res)
"""
from .assembly import GoalSpec, Layout, assemble_relaxation, assemble_stationarity
from .backend import SolverResult, SolverSettings, solve
from .catalog import ROBOT_NAMES, load_robot
from .lifting import QUAT, ROT, lift_prismatic, lift_quaternion, lift_rotation, recover_rotation
from .rankmin import RankMinConfig, RunResult, certify, resume, run
from .robot_model import (JointConfig, ModelError, Pose, RobotGraph, forward_kinematics,
                          load_model, sample_config)
from .verify import SolveReport, extract_solution, verify

__all__ = [
    "GoalSpec", "Layout", "assemble_relaxation", "assemble_stationarity",
    "SolverResult", "SolverSettings", "solve",
    "ROBOT_NAMES", "load_robot",
    "QUAT", "ROT", "lift_prismatic", "lift_quaternion", "lift_rotation", "recover_rotation",
    "RankMinConfig", "RunResult", "certify", "resume", "run",
    "JointConfig", "ModelError", "Pose", "RobotGraph", "forward_kinematics", "load_model",
    "sample_config",
    "SolveReport", "extract_solution", "verify",
]
