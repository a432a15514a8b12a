"""Parameter-free in-betweening baselines."""

from __future__ import annotations

import enum

import numpy as np

from . import geometry as geo
from .errors import ContractError
from .motion import InbetweenTask, Poses


class BaselineKind(str, enum.Enum):
    ZERO_VELOCITY = "zerovel"
    SLERP = "slerp"
    POS_LERP = "lerp"


def previous_keys(in_idx, out_idx) -> np.ndarray:
    """For each missing frame, the index of the latest key-frame before it."""
    pos = np.searchsorted(in_idx, out_idx, side="right") - 1
    if np.any(pos < 0):
        bad = int(out_idx[np.argmax(pos < 0)])
        raise ContractError(f"missing frame {bad} has no preceding key-frame")
    return in_idx[pos]


def bracketing_keys(in_idx, out_idx):
    """Surrounding key pair ``(a, b)`` and fraction ``(t - a) / (b - a)`` per missing frame."""
    hi = np.searchsorted(in_idx, out_idx, side="right")
    if np.any(hi == 0) or np.any(hi == len(in_idx)):
        side = "preceding" if np.any(hi == 0) else "following"
        bad = int(out_idx[np.argmax((hi == 0) | (hi == len(in_idx)))])
        raise ContractError(
            f"interpolation needs key-frames on both sides; missing frame {bad} has no {side} key")
    a, b = in_idx[hi - 1], in_idx[hi]
    return a, b, (out_idx - a) / (b - a)


def zero_velocity(task: InbetweenTask) -> Poses:
    """Hold the most recent key-frame over every missing frame."""
    src = previous_keys(task.in_idx, task.out_idx)
    if not task.has_rotations:
        return Poses(task.global_positions()[:, src])
    return task.poses(src)


def slerp_rotations(rot6_a, rot6_b, frac) -> np.ndarray:
    qa = geo.rot6_to_quaternion(rot6_a)
    qb = geo.rot6_to_quaternion(rot6_b)
    return geo.quaternion_to_rot6(geo.slerp(qa, qb, frac))


def slerp_local(task: InbetweenTask, idx=None):
    """Linear root / SLERP rotation interpolation evaluated at frames ``idx``.

    Key-frames in ``idx`` reproduce themselves exactly. Returns ``(root_pos, rot6)``.
    """
    if not task.has_rotations:
        raise ContractError("SLERP interpolation needs rotation data")
    idx = task.out_idx if idx is None else np.asarray(idx, dtype=np.int64)
    root = task.root_pos[:, idx].copy()
    rot6 = task.rot6[:, idx].copy()
    missing = ~np.isin(idx, task.in_idx)
    if missing.any():
        a, b, frac = bracketing_keys(task.in_idx, idx[missing])
        f = frac[None, :, None]
        root[:, missing] = (1 - f) * task.root_pos[:, a] + f * task.root_pos[:, b]
        rot6[:, missing] = slerp_rotations(task.rot6[:, a], task.rot6[:, b], frac[None, :, None])
    return root, rot6


def slerp_interpolate(task: InbetweenTask) -> Poses:
    """Root positions interpolated linearly, every joint rotation (root included) by SLERP."""
    root, rot6 = slerp_local(task)
    return Poses.from_local(task.skeleton, root, rot6)


def pos_lerp(task: InbetweenTask) -> Poses:
    """Independent linear interpolation of every joint's global position."""
    a, b, frac = bracketing_keys(task.in_idx, task.out_idx)
    pos = task.global_positions()
    f = frac[None, :, None, None]
    return Poses((1 - f) * pos[:, a] + f * pos[:, b])


_RUNNERS = {
    BaselineKind.ZERO_VELOCITY: zero_velocity,
    BaselineKind.SLERP: slerp_interpolate,
    BaselineKind.POS_LERP: pos_lerp,
}


def run_baseline(kind, task: InbetweenTask) -> Poses:
    kind = BaselineKind(kind)
    if kind is BaselineKind.POS_LERP and task.has_rotations:
        raise ContractError("positional LERP is reserved for position-only data; use slerp")
    return _RUNNERS[kind](task)


def baseline_predictor(kind):
    kind = BaselineKind(kind)
    return lambda task: run_baseline(kind, task)
