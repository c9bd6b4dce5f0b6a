# Goals beyond reach. Two tools are available: a certificate that no joint
# configuration reaches the goal, and CostRelax, which finds the closest pose.
import numpy as np

from iksdp import GoalSpec, Pose, RankMinConfig, certify, load_robot, run, verify
from iksdp.rankmin import COSTRELAX
from iksdp.bench import total_reach

g = load_robot("chain7")
reach = total_reach(g)
goal = GoalSpec(Pose(np.eye(3), [reach + 0.3, 0.0, 0.2]))
print(f"reach bound {reach:.3f} m, goal at {np.linalg.norm(goal.target.T):.3f} m")

verdict = certify(g, goal)
print("certificate:", verdict.status, f"({verdict.wall_time * 1e3:.1f} ms)")

res = run(g, goal, RankMinConfig(variant=COSTRELAX))
rep = verify(g, goal, res)
print(f"CostRelax: {rep.status}, lifted cost {rep.f_lifted:.4f}, tool distance {rep.err_T:.4f} m")

# Each accepted step shrinks the rank deficiency W by at least the factor c.
W = [sum(3 - r["lambda1"] for r in res.trace.at(k)) for k in res.trace.iterations]
print("W per iteration:", " ".join(f"{w:.1e}" for w in W))
