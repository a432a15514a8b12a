"""Rotation representations, SLERP, skeletons and forward kinematics.

Quaternions are stored ``(w, x, y, z)``. Rotation matrices act on column
vectors. The 6D rotation layout is two stacked 3-vectors ``[a, b]``: the first
becomes the x column after normalisation, the z column is ``x cross b``
normalised, and y closes the frame.

Functions marked *tensor-capable* accept either a numpy array (and return one)
or an autograd :class:`~deltainterp.autograd.Tensor` (and return a Tensor that
is part of the graph).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DataError, DegenerateRotationError, DimensionError

DEGENERACY_EPS = 1e-8
SLERP_LINEAR_THRESHOLD = 1.0 - 1e-7


def _lift(x):
    if isinstance(x, Tensor):
        return x, False
    return Tensor(x), True


def _lower(t: Tensor, was_array: bool):
    return t.data if was_array else t


def _cross(a: Tensor, b: Tensor) -> Tensor:
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return ag.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _normalize(v: Tensor) -> Tensor:
    return v / ag.sqrt((v * v).sum(axis=-1, keepdims=True))


# ----------------------------------------------------------------------------
# 6D <-> matrix


def check_rot6(r, eps: float = DEGENERACY_EPS):
    """Raise :class:`DegenerateRotationError` if any 6-vector has no frame."""
    r = np.asarray(getattr(r, "data", r), dtype=np.float64)
    if r.shape[-1] != 6:
        raise DimensionError(f"rot6 arrays need a trailing axis of 6, got {r.shape}")
    a, b = r[..., :3], r[..., 3:]
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    bad = ~np.isfinite(r).all(axis=-1) | (na <= eps) | (nb <= eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        sin = np.linalg.norm(np.cross(a, b), axis=-1) / (na * nb)
    bad |= ~(sin > eps)
    if bad.any():
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegenerateRotationError(
            f"degenerate 6D rotation at index {where}: {r[where].tolist()}")


def rot6_to_matrix(r, check: bool = True):
    """6D rotation ``[..., 6]`` to rotation matrix ``[..., 3, 3]`` (tensor-capable)."""
    t, was_array = _lift(r)
    if check:
        check_rot6(t.data)
    x = _normalize(t[..., 0:3])
    z = _normalize(_cross(x, t[..., 3:6]))
    y = _cross(z, x)
    return _lower(ag.stack([x, y, z], axis=-1), was_array)


def matrix_to_rot6(m):
    """First two columns of ``[..., 3, 3]`` as ``[..., 6]`` (tensor-capable)."""
    t, was_array = _lift(m)
    return _lower(ag.concat([t[..., :, 0], t[..., :, 1]], axis=-1), was_array)


# ----------------------------------------------------------------------------
# quaternions


def matrix_to_quaternion(m):
    """Rotation matrix to unit quaternion with ``w >= 0`` (tensor-capable).

    Picks the branch with the largest of ``4w^2, 4x^2, 4y^2, 4z^2`` so the
    divisor never gets small. Only the selected branch carries gradient.
    """
    t, was_array = _lift(m)
    r = [[t[..., i, j] for j in range(3)] for i in range(3)]
    d = t.data
    diag = np.stack([
        1 + d[..., 0, 0] + d[..., 1, 1] + d[..., 2, 2],
        1 + d[..., 0, 0] - d[..., 1, 1] - d[..., 2, 2],
        1 - d[..., 0, 0] + d[..., 1, 1] - d[..., 2, 2],
        1 - d[..., 0, 0] - d[..., 1, 1] + d[..., 2, 2],
    ], axis=-1)
    choice = np.argmax(diag, axis=-1)

    def half_root(expr):
        return ag.scalar_mul(ag.sqrt(ag.clamp_min(expr, 1e-6)), 0.5)

    one = np.ones((), dtype=t.dtype)
    tr = r[0][0] + r[1][1] + r[2][2]
    branches = []
    w = half_root(tr + one)
    k = ag.scalar_mul(w, 4.0)
    branches.append([w, (r[2][1] - r[1][2]) / k, (r[0][2] - r[2][0]) / k, (r[1][0] - r[0][1]) / k])
    x = half_root(one + r[0][0] - r[1][1] - r[2][2])
    k = ag.scalar_mul(x, 4.0)
    branches.append([(r[2][1] - r[1][2]) / k, x, (r[0][1] + r[1][0]) / k, (r[0][2] + r[2][0]) / k])
    y = half_root(one - r[0][0] + r[1][1] - r[2][2])
    k = ag.scalar_mul(y, 4.0)
    branches.append([(r[0][2] - r[2][0]) / k, (r[0][1] + r[1][0]) / k, y, (r[1][2] + r[2][1]) / k])
    z = half_root(one - r[0][0] - r[1][1] + r[2][2])
    k = ag.scalar_mul(z, 4.0)
    branches.append([(r[1][0] - r[0][1]) / k, (r[0][2] + r[2][0]) / k, (r[1][2] + r[2][1]) / k, z])

    q = None
    for b, comps in enumerate(branches):
        cand = ag.stack(comps, axis=-1)
        picked = ag.where((choice == b)[..., None], cand, 0.0)
        q = picked if q is None else q + picked
    sign = np.where(q.data[..., :1] < 0, -1.0, 1.0).astype(t.dtype)
    return _lower(q * sign, was_array)


def quaternion_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=np.float64)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_angle(q) -> np.ndarray:
    """Rotation angle in [0, pi] of each unit quaternion."""
    q = quat_normalize(q)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def hemisphere_align(q, reference) -> np.ndarray:
    """Flip each quaternion in ``q`` whose dot product with ``reference`` is negative."""
    q = np.asarray(q)
    dot = (q * np.asarray(reference)).sum(axis=-1, keepdims=True)
    return np.where(dot < 0, -q, q)


def quat_continuity(q, axis: int = 0) -> np.ndarray:
    """Remove sign flips along ``axis`` so consecutive quaternions share a hemisphere."""
    q = np.moveaxis(np.array(q, dtype=np.float64), axis, 0)
    for t in range(1, q.shape[0]):
        dot = (q[t] * q[t - 1]).sum(axis=-1, keepdims=True)
        q[t] = np.where(dot < 0, -q[t], q[t])
    return np.moveaxis(q, 0, axis)


def slerp(q0, q1, t) -> np.ndarray:
    """Spherical linear interpolation between unit quaternions.

    ``q1`` is first moved into ``q0``'s hemisphere. Nearly identical inputs
    fall back to normalised linear interpolation. Broadcasts over leading axes
    and over ``t``.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)[..., None]
    dot = (q0 * q1).sum(axis=-1, keepdims=True)
    q1 = np.where(dot < 0, -q1, q1)
    dot = np.abs(dot)
    near = dot > SLERP_LINEAR_THRESHOLD
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.where(near, 1.0, np.sin(theta))
    w0 = np.where(near, 1.0 - t, np.sin((1.0 - t) * theta) / sin_theta)
    w1 = np.where(near, t, np.sin(t * theta) / sin_theta)
    out = w0 * q0 + w1 * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def rot6_to_quaternion(r) -> np.ndarray:
    return matrix_to_quaternion(rot6_to_matrix(np.asarray(r, dtype=np.float64)))


def quaternion_to_rot6(q) -> np.ndarray:
    return matrix_to_rot6(quaternion_to_matrix(q))


def rot_y(angle) -> np.ndarray:
    """Rotation matrices about the vertical (+Y) axis."""
    c, s = np.cos(angle), np.sin(angle)
    zero, one = np.zeros_like(c), np.ones_like(c)
    return np.stack([
        np.stack([c, zero, s], -1),
        np.stack([zero, one, zero], -1),
        np.stack([-s, zero, c], -1),
    ], -2)


# ----------------------------------------------------------------------------
# skeleton and forward kinematics


@dataclass
class Skeleton:
    """Joint tree in topological order with constant parent-relative offsets."""

    names: list
    parents: np.ndarray
    offsets: np.ndarray
    _children: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.names = [str(n) for n in self.names]
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 3)
        n = len(self.names)
        if self.parents.shape != (n,) or self.offsets.shape != (n, 3):
            raise DataError(
                f"skeleton arrays disagree: {n} names, parents {self.parents.shape}, "
                f"offsets {self.offsets.shape}")
        if n == 0 or self.parents[0] != -1:
            raise DataError("skeleton root must come first with parent -1")
        for j in range(1, n):
            if not 0 <= self.parents[j] < j:
                raise DataError(
                    f"joint {j} ({self.names[j]}) has parent {self.parents[j]}; "
                    "parents must precede children and only the root may be -1")

    @property
    def n_joints(self) -> int:
        return len(self.names)

    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets, axis=-1)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def find(self, *keywords) -> int | None:
        """Index of the first joint whose lower-cased name contains all keywords."""
        for j, name in enumerate(self.names):
            low = name.lower()
            if all(k.lower() in low for k in keywords):
                return j
        return None

    def rest_positions(self) -> np.ndarray:
        pos = np.zeros((self.n_joints, 3))
        for j in range(1, self.n_joints):
            pos[j] = pos[self.parents[j]] + self.offsets[j]
        return pos

    def height(self) -> float:
        rest = self.rest_positions()
        return float(rest[:, 1].max() - rest[:, 1].min())

    def to_dict(self) -> dict:
        return {"names": list(self.names), "parents": self.parents.tolist(),
                "offsets": self.offsets.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Skeleton":
        try:
            return cls(doc["names"], doc["parents"], doc["offsets"])
        except KeyError as exc:
            raise DataError(f"skeleton document missing key {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Skeleton":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fk_matrices(skeleton: Skeleton, root_pos, rot6, check: bool = True):
    """Global joint positions ``[..., J, 3]`` and rotations ``[..., J, 3, 3]``.

    ``rot6[..., 0, :]`` is the root's global rotation, every other joint is
    relative to its parent. Tensor-capable in ``root_pos``/``rot6``.
    """
    rp, was_array = _lift(root_pos)
    r6, _ = _lift(rot6)
    if r6.shape[-2] != skeleton.n_joints:
        raise DimensionError(
            f"rotations carry {r6.shape[-2]} joints, skeleton has {skeleton.n_joints}")
    local = rot6_to_matrix(r6, check=check)
    offsets = skeleton.offsets.astype(r6.dtype)
    rots = [local[..., 0, :, :]]
    pos = [rp]
    for j in range(1, skeleton.n_joints):
        p = skeleton.parents[j]
        parent_rot = rots[p]
        rots.append(ag.matmul(parent_rot, local[..., j, :, :]))
        pos.append(pos[p] + ag.matmul(parent_rot, offsets[j][:, None])[..., 0])
    global_pos = ag.stack(pos, axis=-2)
    global_rot = ag.stack(rots, axis=-3)
    return _lower(global_pos, was_array), _lower(global_rot, was_array)


def fk(skeleton: Skeleton, root_pos, rot6, check: bool = True):
    """Forward kinematics returning global positions and global 6D rotations."""
    pos, rot = fk_matrices(skeleton, root_pos, rot6, check=check)
    return pos, matrix_to_rot6(rot)
