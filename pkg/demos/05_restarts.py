"""Stalled runs and restarts on the closed-chain dual arm.

A short iteration budget leaves most runs short of rank one.  ``resume``
perturbs the stalled point inside the feasible set and carries on.
"""
from iksdp import RankMinConfig, load_robot, resume, run
from iksdp.bench import closed_chain_goals

g = load_robot("dual_arm")
for i, (_, goal) in enumerate(closed_chain_goals(g, 4, seed=10)):
    res = run(g, goal, RankMinConfig(k_max=2, stall_window=0), restarts=False)
    before = res.status
    resume(res, RankMinConfig(), attempts=10)
    print(f"goal {i}: {before} -> {res.status} after {res.restarts} restarts, "
          f"{res.iterations} iterations")
