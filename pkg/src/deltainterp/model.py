"""The delta-interpolator network.

Key-frames, expressed relative to the root of the last context frame, are
encoded by self-attention blocks. Missing-frame templates (zero pose channels
plus a learned frame embedding) cross-attend to the key-frame encoding of the
same level. One MLP decodes both streams into residuals which are added to a
reference motion (SLERP interpolation, the last context frame, or nothing) and
passed through forward kinematics.

Shapes: ``B`` tasks, ``nK`` key-frames, ``nM`` missing frames, ``J`` joints,
``d`` model width.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import geometry as geo
from .autograd import Tensor
from .baselines import slerp_local
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigError
from .motion import InbetweenTask, Poses

POSE_CHANNELS = 9


class InputDelta(str, enum.Enum):
    LAST_FRAME = "last"
    NONE = "none"


class OutputDelta(str, enum.Enum):
    INTERP = "interp"
    LAST_FRAME = "last"
    NONE = "none"


_MODE_ALIASES = {"last": "last", "l": "last", "no": "none", "none": "none",
                 "i": "interp", "interp": "interp"}


def parse_mode_pair(text: str):
    """``"Last:I"`` -> ``(InputDelta.LAST_FRAME, OutputDelta.INTERP)``."""
    try:
        inp, out = (_MODE_ALIASES[p.strip().lower()] for p in text.split(":"))
        return InputDelta(inp), OutputDelta(out)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"cannot parse delta modes {text!r}; use e.g. 'Last:I' or 'No:No'") from exc


def mode_label(inp, out) -> str:
    names = {"last": "Last", "none": "No", "interp": "I"}
    return f"{names[InputDelta(inp).value]}:{names[OutputDelta(out).value]}"


@dataclass
class ModelConfig:
    n_joints: int
    width: int = 1024
    heads: int = 8
    blocks: int = 6
    encoder_mlp_layers: int = 3
    decoder_mlp_layers: int = 2
    embed_dim: int = 32
    dropout: float = 0.2
    input_delta: str = "last"
    output_delta: str = "interp"
    max_frame_index: int = 128
    share_blocks: bool = True
    attention: str = "split"
    dtype: str = "float32"

    def __post_init__(self):
        self.input_delta = InputDelta(self.input_delta).value
        self.output_delta = OutputDelta(self.output_delta).value

    def validate(self):
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} is not divisible by {self.heads} heads")
        if self.blocks < 1 or self.encoder_mlp_layers < 1 or self.decoder_mlp_layers < 1:
            raise ConfigError("block and layer counts must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.attention not in ("split", "joint"):
            raise ConfigError(f"attention must be 'split' or 'joint', not {self.attention!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        return self

    @property
    def out_dim(self) -> int:
        return 3 + 6 * self.n_joints

    @property
    def in_dim(self) -> int:
        return POSE_CHANNELS * self.n_joints

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "ModelConfig":
        return cls(**doc)


def attention_score_entries(n_keys: int, n_missing: int, attention: str = "split") -> int:
    """Entries of the attention score matrices per level, head and sequence."""
    if attention == "joint":
        return (n_keys + n_missing) ** 2
    return n_keys * n_keys + n_keys * n_missing


@dataclass
class ModelOutput:
    """Composed predictions. Global positions/rotations are post-FK Tensors."""

    y_pos: Tensor
    y_rot: Tensor
    x_pos: Tensor
    x_rot: Tensor
    y_local: tuple = field(default=())
    x_local: tuple = field(default=())


class DeltaInterpolator:
    """Parameters plus the forward pass. ``params`` maps names to leaf Tensors."""

    def __init__(self, config: ModelConfig, skeleton: geo.Skeleton, seed: int = 0, params=None):
        self.config = config.validate()
        if skeleton.n_joints != config.n_joints:
            raise ConfigError(
                f"model built for {config.n_joints} joints, skeleton has {skeleton.n_joints}")
        self.skeleton = skeleton
        self.dtype = np.dtype(config.dtype)
        self.score_entries = []
        self.params = params if params is not None else self._init_params(seed)

    # -- parameters --------------------------------------------------------
    def _init_params(self, seed: int) -> dict:
        cfg = self.config
        rng = np.random.default_rng(seed)
        d = cfg.width
        params = {}

        def linear(name, fan_in, fan_out, bias=True):
            bound = 1.0 / math.sqrt(fan_in)
            params[f"{name}.w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            if bias:
                params[f"{name}.b"] = rng.uniform(-bound, bound, (fan_out,))

        linear("input", cfg.in_dim + cfg.embed_dim, d)
        params["pos_embed"] = rng.normal(0.0, 0.02, (cfg.max_frame_index, cfg.embed_dim))
        paths = [""] if cfg.share_blocks or cfg.attention == "joint" else ["", "m."]
        for level in range(cfg.blocks):
            for path in paths:
                pre = f"block{level}.{path}"
                for proj in ("q", "k", "v", "o"):
                    bound = 1.0 / math.sqrt(d)
                    params[f"{pre}w{proj}"] = rng.uniform(-bound, bound, (d, d))
                params[f"{pre}ln.gain"] = np.ones(d)
                params[f"{pre}ln.bias"] = np.zeros(d)
                for k in range(cfg.encoder_mlp_layers):
                    linear(f"{pre}mlp{k}", d, d)
        for k in range(cfg.decoder_mlp_layers):
            last = k == cfg.decoder_mlp_layers - 1
            linear(f"decoder{k}", d, cfg.out_dim if last else d)
        return {name: Tensor(value.astype(self.dtype), requires_grad=True)
                for name, value in params.items()}

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict:
        return {name: p.data for name, p in self.params.items()}

    def save(self, directory):
        directory = Path(directory)
        save_tensors(directory, self.state_arrays())
        (directory / "model_config.json").write_text(json.dumps(self.config.to_dict(), indent=1))
        self.skeleton.save(directory / "skeleton.json")
        return directory

    @classmethod
    def load(cls, directory) -> "DeltaInterpolator":
        directory = Path(directory)
        config = ModelConfig.from_dict(json.loads((directory / "model_config.json").read_text()))
        skeleton = geo.Skeleton.load(directory / "skeleton.json")
        dtype = np.dtype(config.dtype)
        params = {name: Tensor(arr.astype(dtype), requires_grad=True)
                  for name, arr in load_tensors(directory).items()}
        return cls(config, skeleton, params=params)

    # -- inputs --------------------------------------------------------------
    def pose_channels(self, task: InbetweenTask, idx) -> np.ndarray:
        """``[B, n, J, 9]``: global joint positions followed by local 6D rotations."""
        pos = task.global_positions()[:, idx]
        return np.concatenate([pos, task.rot6[:, idx]], axis=-1)

    def reference_pose(self, task: InbetweenTask) -> np.ndarray:
        """Root position and root 6D rotation of the last context frame, ``[B, 9]``."""
        r = task.ref_index
        return np.concatenate([task.root_pos[:, r], task.rot6[:, r, 0]], axis=-1)

    def _check_indices(self, task: InbetweenTask):
        if task.n_frames > self.config.max_frame_index:
            raise ConfigError(
                f"task spans {task.n_frames} frames but max_frame_index is "
                f"{self.config.max_frame_index}")
        if not task.has_rotations:
            raise ConfigError("the interpolator needs rotation data")

    def key_features(self, task: InbetweenTask) -> np.ndarray:
        """Flattened key-frame pose channels, referenced if the input delta mode asks."""
        x = self.pose_channels(task, task.in_idx)
        if self.config.input_delta == InputDelta.LAST_FRAME.value:
            x = x - self.reference_pose(task)[:, None, None, :]
        return x.reshape(x.shape[0], x.shape[1], -1).astype(self.dtype)

    def build_inputs(self, task: InbetweenTask):
        self._check_indices(task)
        cfg, p = self.config, self.params
        w_pose = p["input.w"][: cfg.in_dim]
        w_embed = p["input.w"][cfg.in_dim:]
        embed = p["pos_embed"]
        e_key = (ag.matmul(Tensor(self.key_features(task)), w_pose)
                 + ag.matmul(embed[task.in_idx], w_embed) + p["input.b"])
        out_idx = task.out_idx
        batch_axis = np.zeros((task.batch_size, 1, 1), dtype=self.dtype)
        e_missing = ag.matmul(embed[out_idx], w_embed) + p["input.b"] + batch_axis
        return e_key, e_missing

    # -- encoder ---------------------------------------------------------------
    def _linear(self, x, name):
        out = ag.matmul(x, self.params[f"{name}.w"])
        b = self.params.get(f"{name}.b")
        return out + b if b is not None else out

    def mha(self, query, keyval, prefix, training=False, rng=None):
        cfg = self.config
        B, nq, d = query.shape
        nk = keyval.shape[1]
        h, dh = cfg.heads, d // cfg.heads
        p = self.params

        def heads(x, name, n):
            return ag.matmul(x, p[f"{prefix}{name}"]).reshape(B, n, h, dh).transpose(0, 2, 1, 3)

        q, k, v = heads(query, "wq", nq), heads(keyval, "wk", nk), heads(keyval, "wv", nk)
        scores = ag.scalar_mul(ag.matmul(q, ag.swapaxes(k, -1, -2)), 1.0 / math.sqrt(d))
        self.score_entries.append(nq * nk)
        attended = ag.matmul(ag.softmax(scores, axis=-1), v)
        merged = attended.transpose(0, 2, 1, 3).reshape(B, nq, d)
        out = ag.matmul(merged, p[f"{prefix}wo"])
        return ag.dropout(out, cfg.dropout, rng) if training else out

    def block(self, x, keyval, level, path="", training=False, rng=None):
        """One residual block: attention, add & layernorm & relu, then the MLP."""
        cfg, p = self.config, self.params
        pre = f"block{level}.{path}"
        e = self.mha(x, x if keyval is None else keyval, pre, training, rng)
        e = ag.relu(ag.layernorm(e + x, p[f"{pre}ln.gain"], p[f"{pre}ln.bias"]))
        for k in range(cfg.encoder_mlp_layers):
            e = self._linear(e, f"{pre}mlp{k}")
            if k < cfg.encoder_mlp_layers - 1:
                e = ag.relu(e)
                if training:
                    e = ag.dropout(e, cfg.dropout, rng)
        return e

    def keyframe_encoder(self, e_key, training=False, rng=None) -> list:
        levels = []
        for level in range(self.config.blocks):
            e_key = self.block(e_key, None, level, "", training, rng)
            levels.append(e_key)
        return levels

    def missing_frame_encoder(self, e_missing, key_levels, training=False, rng=None):
        path = "" if self.config.share_blocks else "m."
        for level, e_key in enumerate(key_levels):
            e_missing = self.block(e_missing, e_key, level, path, training, rng)
        return e_missing

    def encode(self, e_key, e_missing, training=False, rng=None):
        """Final key-frame and missing-frame encodings."""
        if self.config.attention == "joint":
            n_key = e_key.shape[1]
            e = ag.concat([e_key, e_missing], axis=1)
            for level in range(self.config.blocks):
                e = self.block(e, None, level, "", training, rng)
            return e[:, :n_key], e[:, n_key:]
        key_levels = self.keyframe_encoder(e_key, training, rng)
        return key_levels[-1], self.missing_frame_encoder(e_missing, key_levels, training, rng)

    def decode(self, e_missing, e_key, training=False, rng=None):
        """Apply the shared decoder MLP to both streams: ``(dY_raw, dX_raw)``."""
        n = self.config.decoder_mlp_layers

        def mlp(e):
            for k in range(n):
                e = self._linear(e, f"decoder{k}")
                if k < n - 1:
                    e = ag.relu(e)
                    if training:
                        e = ag.dropout(e, self.config.dropout, rng)
            return e

        return mlp(e_missing), mlp(e_key)

    # -- outputs ---------------------------------------------------------------
    def reference_motion(self, task: InbetweenTask, idx):
        """Reference ``(root_pos, rot6)`` at frames ``idx`` the residuals are added to."""
        mode = self.config.output_delta
        idx = np.asarray(idx, dtype=np.int64)
        B, J = task.batch_size, self.config.n_joints
        if mode == OutputDelta.INTERP.value:
            root, rot6 = slerp_local(task, idx)
        elif mode == OutputDelta.LAST_FRAME.value:
            r = task.ref_index
            root = np.repeat(task.root_pos[:, r:r + 1], len(idx), axis=1)
            rot6 = np.repeat(task.rot6[:, r:r + 1], len(idx), axis=1)
        else:
            root = np.zeros((B, len(idx), 3))
            rot6 = np.zeros((B, len(idx), J, 6))
        return root.astype(self.dtype), rot6.astype(self.dtype)

    def _compose(self, raw, base_root, base_rot6):
        B, n, _ = raw.shape
        root = Tensor(base_root) + raw[..., :3]
        rot6 = Tensor(base_rot6) + raw[..., 3:].reshape(B, n, self.config.n_joints, 6)
        pos, rot = geo.fk_matrices(self.skeleton, root, rot6)
        return pos, rot, (root, rot6)

    def compose_output(self, dy_raw, dx_raw, task: InbetweenTask) -> ModelOutput:
        y = self._compose(dy_raw, *self.reference_motion(task, task.out_idx))
        x = self._compose(dx_raw, *self.reference_motion(task, task.in_idx))
        return ModelOutput(y[0], y[1], x[0], x[1], y[2], x[2])

    def forward(self, task: InbetweenTask, training: bool = False, rng=None) -> ModelOutput:
        if training and self.config.dropout > 0 and rng is None:
            raise ConfigError("training with dropout needs an rng")
        self.score_entries = []
        e_key, e_missing = self.build_inputs(task)
        e_key, e_missing = self.encode(e_key, e_missing, training, rng)
        dy, dx = self.decode(e_missing, e_key, training, rng)
        return self.compose_output(dy, dx, task)

    __call__ = forward

    def predict(self, task: InbetweenTask) -> Poses:
        """Inference on the missing frames, returned as numpy poses (float64)."""
        with ag.no_grad():
            out = self.forward(task)
        root, rot6 = (t.data.astype(np.float64) for t in out.y_local)
        return Poses(out.y_pos.data.astype(np.float64), out.y_rot.data.astype(np.float64),
                     root, rot6)

    def scores_per_level(self) -> int:
        """Score entries of one level in the last forward pass (per head and sequence)."""
        return int(sum(self.score_entries) // self.config.blocks)
