# The Dietmaier platform with its tabulated leg lengths has up to 40 assembly
# postures.  Find them numerically, then hand each pose back to the solver and
# read the leg extensions out of the lifted solution.
import numpy as np

from iksdp import GoalSpec, RankMinConfig, load_robot, run, verify
from iksdp.bench import stewart_extensions, stewart_forward
from iksdp.robot_model import DIETMAIER

g = load_robot("stewart_dietmaier")
poses = stewart_forward(g, DIETMAIER["legs"])
print(f"{len(poses)} postures share the legs {np.round(DIETMAIER['legs'], 4)}")

cfg = RankMinConfig(mode="quat")    # 4x4 blocks keep these solves quick
for pose in poses[:5]:
    goal = GoalSpec(pose)
    rep = verify(g, goal, run(g, goal, cfg))
    err = np.abs(stewart_extensions(g, rep) - DIETMAIER["legs"]).max()
    print(f"z={pose.T[2]:+.3f}  {rep.status}  max leg error {err:.1e}")
