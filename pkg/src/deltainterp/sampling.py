"""Weighted task sampling for training batches.

A task takes ``past_keys`` leading context frames and ``future_keys`` trailing
target frames around a gap of ``n_in`` missing frames. ``n_in`` is drawn with
probability proportional to ``1 / n_in``, once per batch, so every task in a
batch has the same shape.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, SamplingError
from .motion import InbetweenTask


@dataclass
class SamplerConfig:
    past_keys: int = 10
    future_keys: int = 1
    n_in_range: tuple = (5, 39)
    n_in_choices: tuple | None = None
    keyframe_stride: int | None = None
    window_len: int = 50
    batch_size: int = 64

    def __post_init__(self):
        self.n_in_range = tuple(int(v) for v in self.n_in_range)
        if self.n_in_choices is not None:
            self.n_in_choices = tuple(int(v) for v in self.n_in_choices)

    def validate(self):
        values = self.n_in_values()
        if self.past_keys < 1 or self.future_keys < 1:
            raise ConfigError("past_keys and future_keys must be at least 1")
        if min(values) < 1:
            raise ConfigError("in-between counts must be positive")
        if self.past_keys + self.future_keys + max(values) > self.window_len:
            raise ConfigError(
                f"past_keys + future_keys + max n_in = "
                f"{self.past_keys + self.future_keys + max(values)} exceeds window_len "
                f"{self.window_len}")
        if self.keyframe_stride is not None and self.keyframe_stride < 2:
            raise ConfigError("keyframe_stride must be at least 2")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        return self

    def n_in_values(self) -> np.ndarray:
        if self.n_in_choices:
            return np.asarray(self.n_in_choices, dtype=np.int64)
        lo, hi = self.n_in_range
        return np.arange(lo, hi + 1, dtype=np.int64)

    def to_dict(self) -> dict:
        return asdict(self)


def n_in_probabilities(cfg: SamplerConfig) -> np.ndarray:
    """Selection probability of each value in ``cfg.n_in_values()`` (weights ``1/n``)."""
    w = 1.0 / cfg.n_in_values().astype(np.float64)
    return w / w.sum()


def key_indices(past_keys: int, n_in: int, future_keys: int = 1,
                stride: int | None = None) -> np.ndarray:
    """Key-frame indices of a task window of ``past_keys + n_in + future_keys`` frames.

    With ``stride`` every ``stride``-th frame counted from the last context
    frame is also a key, which gives the periodic layout of dance data.
    """
    total = past_keys + n_in + future_keys
    keys = set(range(past_keys)) | set(range(past_keys + n_in, total))
    if stride:
        last = past_keys - 1
        keys |= {t for t in range(past_keys, past_keys + n_in) if (t - last) % stride == 0}
    return np.asarray(sorted(keys), dtype=np.int64)


class NInSchedule:
    """Per-epoch schedule of in-between counts, re-drawn at every epoch."""

    def __init__(self, cfg: SamplerConfig):
        self.values = cfg.n_in_values()
        self.p = n_in_probabilities(cfg)

    def epoch(self, rng: np.random.Generator, n_batches: int) -> np.ndarray:
        return rng.choice(self.values, size=n_batches, p=self.p)


def sample_n_in(cfg: SamplerConfig, rng: np.random.Generator) -> int:
    return int(rng.choice(cfg.n_in_values(), p=n_in_probabilities(cfg)))


def sample_task(cfg: SamplerConfig, windows, rng: np.random.Generator,
                n_in: int | None = None, batch_size: int = 1) -> InbetweenTask:
    """Draw ``batch_size`` tasks sharing one ``n_in`` (drawn if not given).

    Each task picks a window uniformly and a start index uniformly in
    ``[0, len(window) - (past + future + n_in)]``.
    """
    if not windows:
        raise SamplingError("no windows to sample from")
    if n_in is None:
        n_in = sample_n_in(cfg, rng)
    total = cfg.past_keys + n_in + cfg.future_keys
    lengths = np.array([len(w) for w in windows])
    if lengths.max() < total:
        raise SamplingError(f"tasks need {total} frames but the longest window has {lengths.max()}")
    eligible = np.flatnonzero(lengths >= total)
    picks = rng.choice(eligible, size=batch_size)
    chosen = []
    for i in picks:
        start = int(rng.integers(0, lengths[i] - total + 1))
        chosen.append(windows[i].window(start, total))
    return InbetweenTask.from_sequences(
        chosen, key_indices(cfg.past_keys, n_in, cfg.future_keys, cfg.keyframe_stride))


def sample_batch(cfg: SamplerConfig, windows, rng: np.random.Generator,
                 n_in: int | None = None) -> InbetweenTask:
    return sample_task(cfg, windows, rng, n_in=n_in, batch_size=cfg.batch_size)
