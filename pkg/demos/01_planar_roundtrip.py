# Round trip on a small planar arm: pick joint angles, compute the tool pose,
# then ask the solver to find joint angles that reach that pose again.
import numpy as np

from iksdp import GoalSpec, RankMinConfig, forward_kinematics, load_robot, run, sample_config, verify

g = load_robot("planar3")
q = sample_config(g, seed=4)
print("sampled angles:", np.round(list(q.angles.values()), 4))

target = forward_kinematics(g, q)[g.end_effector]
goal = GoalSpec(target)
print("goal position:", np.round(target.T, 4))

# The default config picks EigenMax here, since the relaxation already has zero cost.
res = run(g, goal, RankMinConfig())
report = verify(g, goal, res)
print(f"status {report.status} after {report.iterations} iterations, {report.restarts} restarts")
print(f"position error {report.err_T:.2e}, rotation error {report.err_R:.2e}")
print("recovered angles:", np.round(list(report.config["angles"].values()), 4))

# The trace holds the top eigenvalue of every lifted block per iteration.
# Each should climb to 3, the trace of a rotation lift.
for k in res.trace.iterations:
    lams = [r["lambda1"] for r in res.trace.at(k)]
    print(k, " ".join(f"{v:.6f}" for v in lams))
