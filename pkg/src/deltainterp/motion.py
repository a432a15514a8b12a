"""Motion containers, CSV ingestion, windowing and pose normalisation.

Rotation data follows the usual game-engine convention: the root carries a
global position and global rotation, all other joints a parent-relative
rotation, and global joint positions come out of forward kinematics.

CSV schema (one row per frame, quaternions are local ``w, x, y, z``)::

    frame, root_px, root_py, root_pz, j0_qw, j0_qx, j0_qy, j0_qz, j1_qw, ...

Position-only data (no rotations) uses ``frame, j0_px, j0_py, j0_pz, ...``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import ContractError, DataError, IngestionError
from .geometry import Skeleton

UP = np.array([0.0, 1.0, 0.0])


@dataclass
class Pose:
    root_pos: np.ndarray
    rot6: np.ndarray


@dataclass
class MotionSequence:
    """Root trajectory plus per-joint 6D rotations at a fixed frame rate."""

    skeleton: Skeleton
    root_pos: np.ndarray
    rot6: np.ndarray
    frame_rate: float = 30.0
    name: str = ""

    def __post_init__(self):
        self.root_pos = np.asarray(self.root_pos, dtype=np.float64)
        self.rot6 = np.asarray(self.rot6, dtype=np.float64)
        T = self.root_pos.shape[0]
        if self.root_pos.shape != (T, 3) or self.rot6.shape != (T, self.skeleton.n_joints, 6):
            raise DataError(
                f"sequence shapes disagree: root {self.root_pos.shape}, rot6 {self.rot6.shape}, "
                f"{self.skeleton.n_joints} joints")
        if T < 1:
            raise DataError("a motion sequence needs at least one frame")

    def __len__(self):
        return self.root_pos.shape[0]

    @property
    def n_frames(self) -> int:
        return len(self)

    def pose(self, t: int) -> Pose:
        return Pose(self.root_pos[t], self.rot6[t])

    def frames(self):
        return [self.pose(t) for t in range(len(self))]

    def window(self, start: int, length: int) -> "MotionSequence":
        return replace(self, root_pos=self.root_pos[start:start + length].copy(),
                       rot6=self.rot6[start:start + length].copy(),
                       name=f"{self.name}@{start}")

    def translated(self, delta) -> "MotionSequence":
        return replace(self, root_pos=self.root_pos + np.asarray(delta, dtype=np.float64))

    def global_positions(self) -> np.ndarray:
        return geo.fk_matrices(self.skeleton, self.root_pos, self.rot6)[0]

    def global_rotations(self) -> np.ndarray:
        return geo.fk_matrices(self.skeleton, self.root_pos, self.rot6)[1]

    def local_quaternions(self) -> np.ndarray:
        """Local joint quaternions ``[T, J, 4]``, sign-continuous over time."""
        return geo.quat_continuity(geo.rot6_to_quaternion(self.rot6), axis=0)


@dataclass
class PositionSequence:
    """Global joint positions only (datasets without rotations)."""

    positions: np.ndarray
    frame_rate: float = 25.0
    names: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[-1] != 3:
            raise DataError(f"positions must be [T, J, 3], got {self.positions.shape}")

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n_frames(self) -> int:
        return len(self)

    def window(self, start: int, length: int) -> "PositionSequence":
        return replace(self, positions=self.positions[start:start + length].copy(),
                       name=f"{self.name}@{start}")

    def global_positions(self) -> np.ndarray:
        return self.positions


# ----------------------------------------------------------------------------
# tasks and pose batches


@dataclass
class Poses:
    """A batch of full poses ``[B, n, ...]`` as consumed by the metrics.

    ``root_pos``/``rot6`` hold the local parameterisation when known;
    ``positions`` and ``rotations`` are global (post forward kinematics).
    """

    positions: np.ndarray
    rotations: np.ndarray | None = None
    root_pos: np.ndarray | None = None
    rot6: np.ndarray | None = None

    @classmethod
    def from_local(cls, skeleton: Skeleton, root_pos, rot6) -> "Poses":
        pos, rot = geo.fk_matrices(skeleton, root_pos, rot6)
        return cls(pos, rot, np.asarray(root_pos), np.asarray(rot6))

    def quaternions(self) -> np.ndarray:
        if self.rotations is None:
            raise ContractError("these poses carry no rotations")
        return geo.matrix_to_quaternion(self.rotations)


def _as_index(idx) -> np.ndarray:
    return np.asarray(sorted({int(i) for i in idx}), dtype=np.int64)


@dataclass
class InbetweenTask:
    """Key-frames ``in_idx`` are given, every other frame of the window is predicted.

    Arrays carry a leading batch axis; all batch entries share the index sets.
    Rotation tasks set ``root_pos``/``rot6``, position-only tasks ``positions``.
    """

    in_idx: np.ndarray
    root_pos: np.ndarray | None = None
    rot6: np.ndarray | None = None
    skeleton: Skeleton | None = None
    positions: np.ndarray | None = None
    _rotations: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.in_idx = _as_index(self.in_idx)
        if self.root_pos is not None:
            self.root_pos = np.asarray(self.root_pos, dtype=np.float64)
            self.rot6 = np.asarray(self.rot6, dtype=np.float64)
            if self.skeleton is None:
                raise ContractError("rotation tasks need a skeleton")
        elif self.positions is None:
            raise ContractError("a task needs rotations or positions")
        T = self.n_frames
        if self.in_idx.size == 0:
            raise ContractError("a task needs at least one key-frame")
        if self.in_idx[0] < 0 or self.in_idx[-1] >= T:
            raise ContractError(f"key-frame indices {self.in_idx.tolist()} outside [0, {T})")

    @classmethod
    def from_sequences(cls, windows, in_idx) -> "InbetweenTask":
        windows = list(windows)
        first = windows[0]
        if isinstance(first, PositionSequence):
            return cls(in_idx, positions=np.stack([w.positions for w in windows]))
        return cls(in_idx, root_pos=np.stack([w.root_pos for w in windows]),
                   rot6=np.stack([w.rot6 for w in windows]), skeleton=first.skeleton)

    @property
    def has_rotations(self) -> bool:
        return self.rot6 is not None

    @property
    def batch_size(self) -> int:
        arr = self.root_pos if self.root_pos is not None else self.positions
        return arr.shape[0]

    @property
    def n_frames(self) -> int:
        arr = self.root_pos if self.root_pos is not None else self.positions
        return arr.shape[1]

    @property
    def out_idx(self) -> np.ndarray:
        mask = np.ones(self.n_frames, dtype=bool)
        mask[self.in_idx] = False
        return np.flatnonzero(mask)

    @property
    def ref_index(self) -> int:
        """Last key-frame before the first missing frame (the last context frame)."""
        out = self.out_idx
        if out.size == 0:
            return int(self.in_idx[-1])
        before = self.in_idx[self.in_idx < out[0]]
        if before.size == 0:
            raise ContractError("no key-frame precedes the first missing frame")
        return int(before[-1])

    def global_positions(self) -> np.ndarray:
        if self.positions is None:
            self.positions, self._rotations = geo.fk_matrices(self.skeleton, self.root_pos, self.rot6)
        return self.positions

    def global_rotations(self) -> np.ndarray:
        if not self.has_rotations:
            raise ContractError("position-only task has no rotations")
        if self._rotations is None:
            self.positions, self._rotations = geo.fk_matrices(self.skeleton, self.root_pos, self.rot6)
        return self._rotations

    def poses(self, idx) -> Poses:
        idx = np.asarray(idx, dtype=np.int64)
        pos = self.global_positions()[:, idx]
        if not self.has_rotations:
            return Poses(pos)
        return Poses(pos, self.global_rotations()[:, idx], self.root_pos[:, idx], self.rot6[:, idx])

    def target(self) -> Poses:
        return self.poses(self.out_idx)

    def keys(self) -> Poses:
        return self.poses(self.in_idx)

    def translated(self, delta) -> "InbetweenTask":
        delta = np.asarray(delta, dtype=np.float64)
        if self.has_rotations:
            return InbetweenTask(self.in_idx, self.root_pos + delta, self.rot6, self.skeleton)
        return InbetweenTask(self.in_idx, positions=self.positions + delta)

    def subset(self, rows) -> "InbetweenTask":
        rows = np.asarray(rows)
        if self.has_rotations:
            return InbetweenTask(self.in_idx, self.root_pos[rows], self.rot6[rows], self.skeleton)
        return InbetweenTask(self.in_idx, positions=self.positions[rows])


# ----------------------------------------------------------------------------
# CSV


def csv_header(n_joints: int) -> list:
    cols = ["frame", "root_px", "root_py", "root_pz"]
    for j in range(n_joints):
        cols += [f"j{j}_q{c}" for c in "wxyz"]
    return cols


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration as exc:
            raise IngestionError("empty file", row=0) from exc
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    return header, rows


def _column_index(header, wanted):
    missing = [c for c in wanted if c not in header]
    if missing:
        raise IngestionError(f"missing columns: {', '.join(missing[:8])}", row=0)
    return [header.index(c) for c in wanted]


def _parse_row(row, cols, rownum, allow_empty):
    cells = [row[c].strip() if c < len(row) else "" for c in cols]
    if allow_empty and all(c == "" for c in cells):
        return None
    try:
        values = np.array([float(c) for c in cells])
    except ValueError as exc:
        raise IngestionError(f"unparseable or empty value ({exc})", row=rownum) from exc
    if not np.isfinite(values).all():
        raise IngestionError("non-finite value", row=rownum)
    return values


def load_csv_with_gaps(path, skeleton: Skeleton, frame_rate: float = 30.0):
    """Read a motion CSV where rows with empty pose cells mark missing frames.

    Returns ``(sequence, key_mask)``; missing frames hold identity rotations
    and the root position of the nearest earlier key (placeholders only).
    Row numbers in errors count data rows from 1.
    """
    header, rows = _read_rows(path)
    J = skeleton.n_joints
    cols = _column_index(header, csv_header(J)[1:])
    values, mask = [], []
    for n, row in enumerate(rows, start=1):
        v = _parse_row(row, cols, n, allow_empty=True)
        mask.append(v is not None)
        values.append(v)
    if not rows:
        raise IngestionError("no data rows", row=1)
    T = len(rows)
    root = np.zeros((T, 3))
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (T, J, 1))
    prev = None
    for t, v in enumerate(values):
        if v is None:
            if prev is not None:
                root[t] = root[prev]
            continue
        q = v[3:].reshape(J, 4)
        norms = np.linalg.norm(q, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            j = int(np.argmax(np.abs(norms - 1.0)))
            raise IngestionError(f"joint {j} quaternion norm {norms[j]:.6f} is not unit", row=t + 1)
        q = q / norms[:, None]
        if prev is not None:
            # quaternion discontinuity fix against the previous key row
            flip = (q * quats[prev]).sum(-1) < 0
            q[flip] *= -1
        root[t] = v[:3]
        quats[t] = q
        prev = t
    rot6 = geo.quaternion_to_rot6(quats)
    seq = MotionSequence(skeleton, root, rot6, frame_rate, name=Path(path).stem)
    return seq, np.array(mask, dtype=bool)


def load_csv(path, skeleton: Skeleton, frame_rate: float = 30.0) -> MotionSequence:
    seq, mask = load_csv_with_gaps(path, skeleton, frame_rate)
    if not mask.all():
        raise IngestionError("empty pose cells in a complete-motion file",
                             row=int(np.flatnonzero(~mask)[0]) + 1)
    return seq


def save_csv(seq: MotionSequence, path, key_mask=None):
    """Write ``seq``; rows where ``key_mask`` is False get empty pose cells."""
    quats = seq.local_quaternions()
    J = seq.skeleton.n_joints
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(J))
        for t in range(len(seq)):
            if key_mask is not None and not key_mask[t]:
                writer.writerow([t] + [""] * (3 + 4 * J))
                continue
            vals = list(seq.root_pos[t]) + list(quats[t].reshape(-1))
            writer.writerow([t] + [repr(float(v)) for v in vals])


def load_position_csv(path, frame_rate: float = 25.0) -> PositionSequence:
    header, rows = _read_rows(path)
    joints = sorted({h.split("_")[0] for h in header if h.endswith("_px")},
                    key=lambda s: int(s[1:]) if s[1:].isdigit() else s)
    wanted = [f"{j}_p{c}" for j in joints for c in "xyz"]
    cols = _column_index(header, wanted)
    data = np.stack([_parse_row(r, cols, n, allow_empty=False) for n, r in enumerate(rows, 1)])
    return PositionSequence(data.reshape(len(rows), len(joints), 3), frame_rate,
                            names=joints, name=Path(path).stem)


def save_position_csv(seq: PositionSequence, path):
    J = seq.positions.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"j{j}_p{c}" for j in range(J) for c in "xyz"])
        for t in range(len(seq)):
            writer.writerow([t] + [repr(float(v)) for v in seq.positions[t].reshape(-1)])


def load_dataset(directory, frame_rate: float = 30.0):
    """Load every ``*.csv`` under ``directory`` with the ``skeleton.json`` next to them."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataError(f"no CSV files in {directory}")
    skel_path = directory / "skeleton.json"
    if not skel_path.exists():
        return None, [load_position_csv(f) for f in files]
    skeleton = Skeleton.load(skel_path)
    return skeleton, [load_csv(f, skeleton, frame_rate) for f in files]


# ----------------------------------------------------------------------------
# windows


def make_windows(seq, window_len: int, offset: int) -> list:
    """Sliding windows of ``window_len`` frames every ``offset`` frames; the tail is dropped."""
    if window_len < 1 or offset < 1:
        raise ContractError("window length and offset must be positive")
    return [seq.window(s, window_len) for s in range(0, len(seq) - window_len + 1, offset)]


def count_windows(n_frames: int, window_len: int, offset: int) -> int:
    if n_frames < window_len:
        return 0
    return (n_frames - window_len) // offset + 1


# ----------------------------------------------------------------------------
# normalisation


def hip_joints(skeleton: Skeleton):
    """Indices of the (left, right) hip joints, or None if the names give no hint."""
    for part in ("upleg", "hip", "thigh"):
        left = skeleton.find("left", part)
        right = skeleton.find("right", part)
        if left is not None and right is not None and left != right:
            return left, right
    return None


def facing_direction(positions, rotations=None, hips=None) -> np.ndarray:
    """Average horizontal facing over the given frames, as a unit XZ vector.

    With hips: ``cross(up, right_hip - left_hip)``. Without: the root's local +Z,
    and +Z itself when neither is available.
    """
    if hips is not None:
        left, right = hips
        across = (positions[:, right] - positions[:, left]).mean(axis=0)
        f = np.cross(UP, across)
    elif rotations is not None:
        f = rotations[:, 0, :, 2].mean(axis=0)
    else:
        return np.array([0.0, 0.0, 1.0])
    f = np.array([f[0], 0.0, f[2]])
    n = np.linalg.norm(f)
    return f / n if n > 1e-9 else np.array([0.0, 0.0, 1.0])


@dataclass
class NormStats:
    """Normalisation convention plus global-position statistics of the training set.

    ``mean``/``std`` are over flattened ``J * 3`` global positions after
    normalisation; the L2P metric divides by ``std``.
    """

    mean: np.ndarray
    std: np.ndarray
    context: int = 10
    center: bool = True
    rotate: bool = True

    def to_dict(self) -> dict:
        return {"mean": np.asarray(self.mean).tolist(), "std": np.asarray(self.std).tolist(),
                "context": self.context, "center": self.center, "rotate": self.rotate}

    @classmethod
    def from_dict(cls, doc) -> "NormStats":
        return cls(np.asarray(doc["mean"]), np.asarray(doc["std"]), doc.get("context", 10),
                   doc.get("center", True), doc.get("rotate", True))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "NormStats":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def standardize(self, positions) -> np.ndarray:
        positions = np.asarray(positions)
        flat = positions.reshape(*positions.shape[:-2], -1)
        return ((flat - self.mean) / self.std).reshape(positions.shape)


def normalization_frame(seq, context: int = 10, center: bool = True, rotate: bool = True):
    """``(offset, ry)`` such that normalized positions are ``(p - offset) @ ry.T``.

    The offset is the mean root XZ of the first ``context`` frames; ``ry``
    turns their mean facing direction about +Y onto +Z.
    """
    ctx = slice(0, max(1, min(context, len(seq))))
    offset = np.zeros(3)
    ry = np.eye(3)
    if isinstance(seq, PositionSequence):
        pos = seq.positions
        if center:
            offset[[0, 2]] = pos[ctx, 0][:, [0, 2]].mean(axis=0)
        if rotate:
            f = facing_direction(pos[ctx], hips=_position_hips(seq))
            ry = geo.rot_y(-math.atan2(f[0], f[2]))
        return offset, ry
    if center:
        offset[[0, 2]] = seq.root_pos[ctx][:, [0, 2]].mean(axis=0)
    if rotate:
        pos, grot = geo.fk_matrices(seq.skeleton, seq.root_pos[ctx] - offset, seq.rot6[ctx])
        f = facing_direction(pos, grot, hip_joints(seq.skeleton))
        ry = geo.rot_y(-math.atan2(f[0], f[2]))
    return offset, ry


def transform_sequence(seq, offset, ry):
    """Apply ``p -> (p - offset) @ ry.T`` to a sequence (root orientation included)."""
    offset = np.asarray(offset, dtype=np.float64)
    ry = np.asarray(ry, dtype=np.float64)
    if isinstance(seq, PositionSequence):
        return replace(seq, positions=(seq.positions - offset) @ ry.T)
    rot6 = seq.rot6.copy()
    rot6[:, 0] = geo.matrix_to_rot6(ry @ geo.rot6_to_matrix(seq.rot6[:, 0]))
    return replace(seq, root_pos=(seq.root_pos - offset) @ ry.T, rot6=rot6)


def untransform_sequence(seq, offset, ry):
    """Inverse of :func:`transform_sequence`."""
    ry = np.asarray(ry, dtype=np.float64)
    back = transform_sequence(seq, np.zeros(3), ry.T)
    if isinstance(back, PositionSequence):
        return replace(back, positions=back.positions + offset)
    return replace(back, root_pos=back.root_pos + offset)


def normalize_window(seq, context: int = 10, center: bool = True, rotate: bool = True):
    """XZ-centre and Y-rotate one window using its first ``context`` frames."""
    return transform_sequence(seq, *normalization_frame(seq, context, center, rotate))


def _position_hips(seq: PositionSequence):
    names = [n.lower() for n in seq.names]
    for part in ("upleg", "hip", "thigh"):
        left = [i for i, n in enumerate(names) if "left" in n and part in n]
        right = [i for i, n in enumerate(names) if "right" in n and part in n]
        if left and right:
            return left[0], right[0]
    return None


def normalize_stats(train_windows, context: int = 10, center: bool = True,
                    rotate: bool = True) -> NormStats:
    normed = [normalize_window(w, context, center, rotate) for w in train_windows]
    pos = np.concatenate([w.global_positions().reshape(len(w), -1) for w in normed])
    std = pos.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return NormStats(pos.mean(axis=0), std, context, center, rotate)


def apply_normalization(seq, stats: NormStats):
    return normalize_window(seq, stats.context, stats.center, stats.rotate)


def identity_stats(n_joints: int) -> NormStats:
    """Stats that leave positions unchanged (mean 0, std 1, no normalisation)."""
    return NormStats(np.zeros(3 * n_joints), np.ones(3 * n_joints), center=False, rotate=False)
