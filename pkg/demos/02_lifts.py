# What the lifted variables look like.
import numpy as np

from iksdp.lifting import (factor_prismatic, lift_prismatic, lift_quaternion, lift_rotation,
                           recover_rotation, rotation_from_quaternion_lift)
from iksdp.robot_model import rot_x, rot_z

R = rot_z(0.7) @ rot_x(-0.3)

Y = lift_rotation(R)                 # 7x7, built from the first two columns and a 1
print("rotation lift eigenvalues:", np.round(np.linalg.eigvalsh(Y), 12))
print("recovered R matches:", np.allclose(recover_rotation(Y), R))

Q = lift_quaternion(R)               # 4x4 with unit trace
print("quaternion lift trace:", np.trace(Q))
print("rotation from its entries matches:", np.allclose(rotation_from_quaternion_lift(Q), R))

# A prismatic lift couples the sliding axis with the extension t in [0, 1].
W = lift_prismatic(R, 0.35)
t, y, s = factor_prismatic(W)
print(f"factored extension {t:.6f}, axis {np.round(s * y, 6)} vs {np.round(R[:, 2], 6)}")

# Mixing two different rotations leaves the lifted set of rank-one points:
# the second eigenvalue is what the rank minimiser drives to zero.
M = 0.5 * (Y + lift_rotation(rot_z(-1.0)))
print("second eigenvalue of a mixture:", round(np.linalg.eigvalsh(M)[-2], 4))
