"""
Rotations, SLERP and forward kinematics
=======================================

A short walk through the geometry layer: 6D rotations, quaternion
interpolation and the skeleton tree.
"""

import numpy as np

from deltainterp import geometry as geo
from deltainterp import synth

# A 6D rotation is two 3-vectors. Gram-Schmidt turns any non-degenerate pair
# into a proper rotation matrix, so a network can emit raw 6-vectors.
rng = np.random.default_rng(0)
raw = rng.standard_normal((4, 6))
mats = geo.rot6_to_matrix(raw)
print("R^T R - I, worst entry:", np.abs(np.einsum("nji,njk->nik", mats, mats) - np.eye(3)).max())
print("determinants:", np.round(np.linalg.det(mats), 12))

# Degenerate pairs are refused instead of producing garbage.
try:
    geo.rot6_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))
except geo.DegenerateRotationError as exc:
    print("refused:", exc)

# SLERP between 0 and 90 degrees about z passes 45 degrees at t = 0.5.
about_z = lambda deg: geo.quat_from_axis_angle(np.array([0, 0, 1.0]), np.deg2rad(deg))
path = geo.slerp(about_z(0), about_z(90), np.linspace(0, 1, 5))
for t, q in zip(np.linspace(0, 1, 5), path):
    print(f"t={t:.2f}  q={np.round(q, 5)}  angle={np.degrees(geo.quat_angle(q)):.1f} deg")

# Forward kinematics composes parent-relative rotations down the tree.
skeleton = synth.humanoid_skeleton()
rest = np.tile([1.0, 0, 0, 0, 1, 0], (skeleton.n_joints, 1))
pos, _ = geo.fk(skeleton, np.zeros(3), rest)
print(f"{skeleton.n_joints} joints, rest-pose height {np.ptp(pos[:, 1]):.2f}")

# Random rotations move joints around but never stretch a bone.
pos, _ = geo.fk(skeleton, np.zeros(3), rng.standard_normal((skeleton.n_joints, 6)))
bones = np.linalg.norm(pos[1:] - pos[skeleton.parents[1:]], axis=-1)
print("bone length drift:", np.abs(bones - skeleton.bone_lengths()[1:]).max())
