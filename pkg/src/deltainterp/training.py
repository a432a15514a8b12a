"""Losses, learning-rate schedule, Adam and the training loop."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import geometry as geo
from .autograd import Tensor
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigError, DegenerateRotationError, NumericError
from .model import DeltaInterpolator, ModelOutput
from .motion import InbetweenTask, NormStats
from .sampling import NInSchedule, SamplerConfig, sample_task


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    lr_max: float = 2e-4
    warmup_epochs: int = 50
    lr_drop_epoch: int = 250
    lr_drop_factor: float = 0.1
    lr_step_size: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    reconstruction_loss: bool = True
    batches_per_epoch: int = 256
    checkpoint_every: int | None = None

    def validate(self):
        if not 0 <= self.warmup_epochs < self.lr_drop_epoch < self.epochs:
            raise ConfigError(
                "need 0 <= warmup_epochs < lr_drop_epoch < epochs, got "
                f"{self.warmup_epochs}, {self.lr_drop_epoch}, {self.epochs}")
        if self.batch_size < 1 or self.batches_per_epoch < 1:
            raise ConfigError("batch_size and batches_per_epoch must be positive")
        if self.lr_max <= 0:
            raise ConfigError("lr_max must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------------
# losses


@dataclass
class LossBreakdown:
    l_pos_pred: float
    l_pos_rec: float
    l_quat_pred: float
    l_quat_rec: float

    @property
    def l_tot(self) -> float:
        return self.l_pos_pred + self.l_pos_rec + self.l_quat_pred + self.l_quat_rec

    def to_dict(self) -> dict:
        return {"lPosPred": self.l_pos_pred, "lPosRec": self.l_pos_rec,
                "lQuatPred": self.l_quat_pred, "lQuatRec": self.l_quat_rec, "lTot": self.l_tot}


def l1_mean(pred: Tensor, target) -> Tensor:
    """L1 over the last axis, averaged over every leading axis."""
    return ag.l1_norm_lastaxis(pred - target).mean()


def position_loss(y_pos_hat, y_pos, x_pos_hat, x_pos):
    """``(predictive, reconstruction)`` L1 position losses on global joint positions."""
    return l1_mean(y_pos_hat, y_pos), l1_mean(x_pos_hat, x_pos)


def aligned_quaternion_l1(q_hat: Tensor, q) -> Tensor:
    """L1 quaternion loss after flipping each prediction into its target's hemisphere."""
    q = np.asarray(q, dtype=q_hat.dtype)
    sign = np.where((q_hat.data * q).sum(-1, keepdims=True) < 0, -1.0, 1.0).astype(q_hat.dtype)
    return l1_mean(q_hat * sign, q)


def quaternion_loss(y_quat_hat, y_quat, x_quat_hat, x_quat):
    return aligned_quaternion_l1(y_quat_hat, y_quat), aligned_quaternion_l1(x_quat_hat, x_quat)


def compute_losses(out: ModelOutput, task: InbetweenTask, reconstruction: bool = True):
    """Total loss Tensor and its float breakdown for one batch."""
    pos = task.global_positions()
    rot = task.global_rotations()
    dtype = out.y_pos.dtype
    yi, xi = task.out_idx, task.in_idx
    y_pos, x_pos = pos[:, yi].astype(dtype), pos[:, xi].astype(dtype)
    y_q = geo.matrix_to_quaternion(rot[:, yi])
    x_q = geo.matrix_to_quaternion(rot[:, xi])
    pos_pred, pos_rec = position_loss(out.y_pos, y_pos, out.x_pos, x_pos)
    quat_pred, quat_rec = quaternion_loss(geo.matrix_to_quaternion(out.y_rot), y_q,
                                          geo.matrix_to_quaternion(out.x_rot), x_q)
    if reconstruction:
        total = pos_pred + pos_rec + quat_pred + quat_rec
        breakdown = LossBreakdown(pos_pred.item(), pos_rec.item(), quat_pred.item(), quat_rec.item())
    else:
        total = pos_pred + quat_pred
        breakdown = LossBreakdown(pos_pred.item(), 0.0, quat_pred.item(), 0.0)
    return total, breakdown


# ----------------------------------------------------------------------------
# optimisation


def lr_schedule(epoch: float, cfg: TrainConfig) -> float:
    """Linear warm-up to ``lr_max``, then a single drop (or StepLR if ``lr_step_size``)."""
    if epoch < cfg.warmup_epochs:
        return cfg.lr_max * epoch / cfg.warmup_epochs
    if cfg.lr_step_size:
        return cfg.lr_max * cfg.lr_drop_factor ** math.floor(epoch / cfg.lr_step_size)
    if epoch < cfg.lr_drop_epoch:
        return cfg.lr_max
    return cfg.lr_max * cfg.lr_drop_factor


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def save(self, directory):
        arrays = {f"m.{k}": v for k, v in self.m.items()}
        arrays.update({f"v.{k}": v for k, v in self.v.items()})
        save_tensors(directory, arrays)
        (Path(directory) / "adam.json").write_text(json.dumps({"step": self.step}))

    @classmethod
    def load(cls, directory) -> "AdamState":
        arrays = load_tensors(directory)
        step = json.loads((Path(directory) / "adam.json").read_text())["step"]
        return cls(step,
                   {k[2:]: v for k, v in arrays.items() if k.startswith("m.")},
                   {k[2:]: v for k, v in arrays.items() if k.startswith("v.")})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8):
    """Bias-corrected Adam update. Parameter arrays are replaced, not mutated."""
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        dt = p.data.dtype.type
        m = state.m.get(name, np.zeros_like(p.data))
        v = state.v.get(name, np.zeros_like(p.data))
        m = dt(b1) * m + dt(1 - b1) * g
        v = dt(b2) * v + dt(1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = dt(lr) * (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(eps))
        p.data = (p.data - update).astype(p.data.dtype)


# ----------------------------------------------------------------------------
# loop


@dataclass
class TrainResult:
    model: DeltaInterpolator
    log: list
    optimizer: AdamState
    checkpoints: list


def save_checkpoint(directory, model: DeltaInterpolator, optimizer: AdamState,
                    epoch: int, stats: NormStats | None = None):
    directory = Path(directory)
    model.save(directory)
    optimizer.save(directory / "optimizer")
    (directory / "train_state.json").write_text(json.dumps({"epoch": epoch}))
    if stats is not None:
        stats.save(directory / "norm_stats.json")
    return directory


def train(model: DeltaInterpolator, windows, cfg: TrainConfig, sampler: SamplerConfig,
          out_dir=None, stats: NormStats | None = None, tasks=None, max_steps=None,
          log_fn=None) -> TrainResult:
    """Optimise ``model`` on tasks sampled from ``windows``.

    ``tasks`` replaces sampling by a fixed cycle of pre-built batches (used for
    overfitting checks). ``max_steps`` stops early. With ``out_dir`` the JSON
    lines log and periodic checkpoints are written there.
    """
    cfg.validate()
    sampler.validate()
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng([cfg.seed, 1])
    schedule = NInSchedule(sampler)
    optimizer = AdamState()
    log, checkpoints = [], []
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train_log.jsonl", "w")
    step_total = 0
    try:
        for epoch in range(cfg.epochs):
            n_ins = schedule.epoch(rng, cfg.batches_per_epoch)
            for step in range(cfg.batches_per_epoch):
                if max_steps is not None and step_total >= max_steps:
                    return TrainResult(model, log, optimizer, checkpoints)
                lr = lr_schedule(epoch + step / cfg.batches_per_epoch, cfg)
                if tasks is not None:
                    task = tasks[step_total % len(tasks)]
                else:
                    task = sample_task(sampler, windows, rng, n_in=int(n_ins[step]),
                                       batch_size=cfg.batch_size)
                model.zero_grad()
                try:
                    out = model.forward(task, training=True, rng=drop_rng)
                    total, parts = compute_losses(out, task, cfg.reconstruction_loss)
                    problem = None if np.isfinite(total.item()) else "non-finite loss"
                except DegenerateRotationError as exc:
                    problem = f"non-finite or degenerate network output ({exc})"
                if problem is not None:
                    snap = None
                    if out_dir is not None:
                        snap = save_checkpoint(out_dir / "nan_snapshot", model, optimizer, epoch, stats)
                    raise NumericError(
                        f"{problem} at epoch {epoch} step {step} "
                        f"(n_in={len(task.out_idx)}); snapshot: {snap}")
                total.backward()
                grads = {k: p.grad for k, p in model.params.items()}
                adam_step(model.params, grads, optimizer, lr, (cfg.beta1, cfg.beta2), cfg.adam_eps)
                record = {"epoch": epoch, "step": step_total, "lr": lr, **parts.to_dict()}
                log.append(record)
                if log_fh is not None:
                    log_fh.write(json.dumps(record) + "\n")
                if log_fn is not None:
                    log_fn(record)
                step_total += 1
            if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                checkpoints.append(save_checkpoint(
                    out_dir / f"epoch_{epoch + 1:04d}", model, optimizer, epoch + 1, stats))
    finally:
        if log_fh is not None:
            log_fh.close()
    return TrainResult(model, log, optimizer, checkpoints)


def batch_loss(model: DeltaInterpolator, task: InbetweenTask, reconstruction: bool = True):
    """Loss breakdown of a batch without dropout and without recording a graph."""
    with ag.no_grad():
        return compute_losses(model.forward(task), task, reconstruction)[1]


def model_gradient_errors(model: DeltaInterpolator, task: InbetweenTask, eps: float = 1e-6,
                          coords: int = 2, seed: int = 0, reconstruction: bool = True):
    """Analytic vs central-difference derivatives of the training loss.

    Every parameter tensor is probed along one random direction and along
    ``coords`` random coordinate axes, which keeps the check cheap enough for
    whole models. Returns ``(overall, per_tensor)``: relative errors
    ``|numeric - analytic| / max(|numeric|, |analytic|)`` over all probes
    together and over each tensor's probes. Use a float64 model.
    """
    rng = np.random.default_rng(seed)
    model.zero_grad()
    total, _ = compute_losses(model.forward(task), task, reconstruction)
    total.backward()
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
             for k, p in model.params.items()}
    model.zero_grad()

    def loss() -> float:
        with ag.no_grad():
            return compute_losses(model.forward(task), task, reconstruction)[0].item()

    def rel(n, a):
        return float(np.linalg.norm(n - a) / max(np.linalg.norm(n), np.linalg.norm(a), 1e-300))

    all_n, all_a, per_tensor = [], [], {}
    for name, p in model.params.items():
        directions = [rng.standard_normal(p.shape)]
        for _ in range(coords):
            v = np.zeros(p.shape)
            v.flat[rng.integers(p.size)] = 1.0
            directions.append(v)
        numeric, analytic = [], []
        for v in directions:
            orig = p.data
            p.data = orig + eps * v
            hi = loss()
            p.data = orig - eps * v
            lo = loss()
            p.data = orig
            numeric.append((hi - lo) / (2 * eps))
            analytic.append(float((grads[name] * v).sum()))
        per_tensor[name] = rel(np.array(numeric), np.array(analytic))
        all_n += numeric
        all_a += analytic
    return rel(np.array(all_n), np.array(all_a)), per_tensor


def model_gradient_check(model: DeltaInterpolator, task: InbetweenTask, **kw) -> float:
    """Overall relative error of :func:`model_gradient_errors`."""
    return model_gradient_errors(model, task, **kw)[0]
