"""Synthetic, band-limited motion for experiments without licensed mocap data.

Every generator is deterministic in ``seed``. Joint rotations are smooth
axis-angle curves with a few low harmonics; the root follows a simple path.
Y is up and characters face +Z in the rest pose (left hip on +X).
"""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .geometry import Skeleton
from .motion import MotionSequence

KINDS = ("sinusoid-walk", "figure-eight", "two-pose-blend")


def tiny_skeleton() -> Skeleton:
    """Five joints: hips, two legs, spine and head. About 1.05 units tall."""
    return Skeleton(
        ["Hips", "LeftUpLeg", "RightUpLeg", "Spine", "Head"],
        [-1, 0, 0, 0, 3],
        [[0, 0, 0], [0.1, -0.45, 0], [-0.1, -0.45, 0], [0, 0.3, 0], [0, 0.3, 0]],
    )


def humanoid_skeleton() -> Skeleton:
    return Skeleton(
        ["Hips", "LeftUpLeg", "LeftLeg", "LeftFoot", "RightUpLeg", "RightLeg", "RightFoot",
         "Spine", "Neck", "Head", "LeftArm", "LeftForeArm", "RightArm", "RightForeArm"],
        [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 7, 10, 7, 12],
        [[0, 0, 0],
         [0.1, -0.05, 0], [0, -0.42, 0], [0, -0.42, 0.02],
         [-0.1, -0.05, 0], [0, -0.42, 0], [0, -0.42, 0.02],
         [0, 0.25, 0], [0, 0.25, 0], [0, 0.12, 0.02],
         [0.18, 0.2, 0], [0.28, 0, 0],
         [-0.18, 0.2, 0], [-0.28, 0, 0]],
    )


def _rotation_curves(rng, n_joints, n_frames, frame_rate, base_freq, max_angle, harmonics=2):
    """Local joint rotations [T, J, 4] from smooth per-joint axis-angle curves."""
    t = np.arange(n_frames) / frame_rate
    axes = rng.standard_normal((n_joints, 3))
    amps = rng.uniform(0.2, 1.0, (n_joints, harmonics)) * max_angle / harmonics
    phases = rng.uniform(0, 2 * np.pi, (n_joints, harmonics))
    freqs = base_freq * np.arange(1, harmonics + 1) * rng.uniform(0.8, 1.2, (n_joints, 1))
    angle = (amps[None] * np.sin(2 * np.pi * freqs[None] * t[:, None, None] + phases[None])).sum(-1)
    bias = rng.uniform(-0.3, 0.3, n_joints) * max_angle
    return geo.quat_from_axis_angle(np.broadcast_to(axes, (n_frames, n_joints, 3)), angle + bias)


def _yaw_quat(heading):
    return geo.quat_from_axis_angle(np.broadcast_to([0.0, 1.0, 0.0], np.shape(heading) + (3,)),
                                    heading)


def synth_motion(kind: str, skeleton: Skeleton, n_frames: int, seed: int,
                 frame_rate: float = 30.0) -> MotionSequence:
    """Generate one sequence of the given ``kind`` (see :data:`KINDS`)."""
    if kind not in KINDS:
        raise ValueError(f"unknown motion kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(seed)
    J = skeleton.n_joints
    t = np.arange(n_frames) / frame_rate
    base_freq = rng.uniform(0.6, 1.4)
    hip_height = -skeleton.rest_positions()[:, 1].min() + 0.02

    if kind == "sinusoid-walk":
        speed = rng.uniform(0.6, 1.6)
        heading = np.full(n_frames, np.pi / 2)
        root = np.stack([speed * t,
                         hip_height + 0.03 * np.sin(4 * np.pi * base_freq * t),
                         0.05 * np.sin(2 * np.pi * base_freq * t + rng.uniform(0, 2 * np.pi))], -1)
        local = _rotation_curves(rng, J, n_frames, frame_rate, base_freq, max_angle=0.9)
    elif kind == "figure-eight":
        radius = rng.uniform(1.0, 2.5)
        w = 2 * np.pi * rng.uniform(0.08, 0.15)
        x, z = radius * np.sin(w * t), radius * np.sin(w * t) * np.cos(w * t)
        dx, dz = radius * w * np.cos(w * t), radius * w * np.cos(2 * w * t)
        heading = np.unwrap(np.arctan2(dx, dz))
        root = np.stack([x, hip_height + 0.03 * np.sin(4 * np.pi * base_freq * t), z], -1)
        local = _rotation_curves(rng, J, n_frames, frame_rate, base_freq, max_angle=0.8)
    else:
        axes = rng.standard_normal((2, J, 3))
        angles = rng.uniform(0.2, 1.2, (2, J))
        pose_a, pose_b = geo.quat_from_axis_angle(axes, angles)
        blend = 0.5 - 0.5 * np.cos(2 * np.pi * base_freq * 0.5 * t)
        local = geo.slerp(pose_a[None], pose_b[None], blend[:, None])
        start, end = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        start[1] = end[1] = hip_height
        root = start + blend[:, None] * (end - start)
        h0, h1 = rng.uniform(-np.pi, np.pi, 2)
        heading = h0 + blend * (h1 - h0)

    sway = geo.quat_from_axis_angle(
        np.broadcast_to([1.0, 0.0, 0.0], (n_frames, 3)),
        0.1 * np.sin(2 * np.pi * base_freq * t + rng.uniform(0, 2 * np.pi)))
    root_quat = geo.quat_mul(_yaw_quat(heading), geo.quat_mul(sway, local[:, 0]))
    local = local.copy()
    local[:, 0] = root_quat
    rot6 = geo.quaternion_to_rot6(local)
    return MotionSequence(skeleton, root, rot6, frame_rate, name=f"{kind}-{seed}")


def synth_dataset(skeleton: Skeleton, seeds, n_frames: int = 200, kinds=KINDS,
                  frame_rate: float = 30.0) -> list:
    """One sequence per (seed, kind) pair, kinds cycling with the seed."""
    kinds = list(kinds)
    return [synth_motion(kinds[i % len(kinds)], skeleton, n_frames, int(s), frame_rate)
            for i, s in enumerate(seeds)]
