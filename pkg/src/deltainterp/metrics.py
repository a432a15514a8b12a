"""Benchmark metrics (L2Q, L2P, NPSS) and report assembly.

All metric functions take arrays shaped ``[S, T, J, C]`` (sequences, missing
frames, joints, channels). Each frame contributes one L2 distance over its
flattened ``J * C`` vector; distances are averaged over sequences and frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ContractError, DimensionError
from .motion import InbetweenTask, NormStats
from .sampling import key_indices

LENGTHS = (5, 15, 30)
LAFAN_CONTEXT = 10

# windowing per benchmark style: evaluation windows and the windows that
# normalization statistics are computed from
PROTOCOLS = {
    "lafan": {"window_len": 65, "offset": 40, "train_window_len": 50, "train_offset": 20,
              "context": LAFAN_CONTEXT},
    "anidance": {"window_len": 128, "offset": 64, "train_window_len": 128, "train_offset": 64,
                 "context": 1},
}


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.ndim != 4:
        raise DimensionError(f"expected [sequences, frames, joints, channels], got {pred.shape}")
    return pred, target


def _frame_l2(diff) -> float:
    return float(np.linalg.norm(diff.reshape(*diff.shape[:2], -1), axis=-1).mean())


def l2q(pred, target) -> float:
    """Mean per-frame L2 distance between global quaternions ``[S, T, J, 4]``.

    Each predicted quaternion is first flipped into its target's hemisphere.
    """
    pred, target = _check_pair(pred, target)
    return _frame_l2(geo.hemisphere_align(pred, target) - target)


def l2p(pred, target, stats: NormStats | None = None) -> float:
    """Mean per-frame L2 distance between standardized global positions ``[S, T, J, 3]``."""
    pred, target = _check_pair(pred, target)
    if stats is not None:
        pred, target = stats.standardize(pred), stats.standardize(target)
    return _frame_l2(pred - target)


def npss(pred, target) -> float:
    """Normalized power spectrum similarity of ``[S, T, ...]`` sequences.

    Trailing axes are flattened into channels. Per channel the squared FFT
    magnitudes over time are normalized to unit sum; the L1 distance between
    cumulative spectra is averaged with the target channel power as weight.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.ndim < 2 or pred.shape[1] < 2:
        raise ContractError("NPSS needs sequences of at least 2 frames")
    S, T = pred.shape[:2]
    pred = pred.reshape(S, T, -1)
    target = target.reshape(S, T, -1)

    def spectra(x):
        power = np.abs(np.fft.fft(x, axis=1)) ** 2
        total = power.sum(axis=1)
        safe = np.where(total > 0, total, 1.0)
        return np.cumsum(power / safe[:, None], axis=1), total

    cdf_p, _ = spectra(pred)
    cdf_t, weight = spectra(target)
    emd = np.abs(cdf_p - cdf_t).sum(axis=1)
    if weight.sum() <= 0:
        return float(emd.mean())
    return float((emd * weight).sum() / weight.sum())


# ----------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    """Metric values per transition length; ``l2q`` is None for position-only data."""

    rows: dict = field(default_factory=dict)
    dataset_id: str = ""
    model_id: str = ""
    seed_count: int = 1

    def add(self, length: int, l2q_value, l2p_value, npss_value):
        self.rows[int(length)] = {"l2q": l2q_value, "l2p": l2p_value, "npss": npss_value}

    def get(self, length: int, metric: str):
        return self.rows[int(length)][metric]

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "model_id": self.model_id,
                "seed_count": self.seed_count,
                "rows": {str(k): v for k, v in sorted(self.rows.items())}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc) -> "MetricsReport":
        rows = {int(k): dict(v) for k, v in doc["rows"].items()}
        return cls(rows, doc.get("dataset_id", ""), doc.get("model_id", ""), doc.get("seed_count", 1))

    @staticmethod
    def table(reports) -> str:
        """Aligned text table: one row per report, L2Q/L2P/NPSS blocks per length."""
        if isinstance(reports, MetricsReport):
            reports = [reports]
        lengths = sorted({k for r in reports for k in r.rows})
        name_w = max([len("Model")] + [len(r.model_id) for r in reports])
        col = 8
        groups = [("L2Q", "l2q", 2), ("L2P", "l2p", 2), ("NPSS", "npss", 4)]
        head1 = " " * name_w
        head2 = "Model".ljust(name_w)
        for title, _, _ in groups:
            head1 += " | " + title.center(col * len(lengths))
            head2 += " | " + "".join(str(L).rjust(col) for L in lengths)
        lines = [head1, head2, "-" * len(head2)]
        for r in reports:
            line = r.model_id.ljust(name_w)
            for _, key, digits in groups:
                cells = ""
                for L in lengths:
                    v = r.rows.get(L, {}).get(key)
                    cells += ("-" if v is None else f"{v:.{digits}f}").rjust(col)
                line += " | " + cells
            lines.append(line)
        return "\n".join(lines)


def _metric_arrays(poses):
    pos = poses.positions
    quats = None if poses.rotations is None else geo.matrix_to_quaternion(poses.rotations)
    return pos, quats


def evaluation_task(windows, length: int, style: str = "lafan",
                    context: int = LAFAN_CONTEXT) -> InbetweenTask:
    """Fixed evaluation batch for one transition length.

    ``lafan``: ``context`` leading keys, ``length`` missing frames and one
    target key (the first ``context + length + 1`` frames of every window).
    ``anidance``: keys every ``length + 1`` frames over the longest prefix
    that ends on a key.
    """
    if style == "lafan":
        total = context + length + 1
        idx = key_indices(context, length, 1)
    elif style == "anidance":
        n_min = min(len(w) for w in windows)
        spans = (n_min - 1) // (length + 1)
        if spans < 1:
            raise ContractError(f"windows of {n_min} frames are too short for gap {length}")
        total = spans * (length + 1) + 1
        idx = key_indices(1, total - 2, 1, stride=length + 1)
    else:
        raise ContractError(f"unknown evaluation style {style!r}")
    short = [len(w) for w in windows if len(w) < total]
    if short:
        raise ContractError(f"gap {length} needs {total} frames; got a window of {short[0]}")
    return InbetweenTask.from_sequences([w.window(0, total) for w in windows], idx)


def evaluate(predictors, windows, lengths=LENGTHS, stats: NormStats | None = None,
             style: str = "lafan", context: int = LAFAN_CONTEXT, dataset_id: str = "",
             model_id: str = "") -> MetricsReport:
    """Score one predictor, or the mean over several (e.g. checkpoints), per length.

    A predictor maps an :class:`InbetweenTask` to predicted ``Poses`` for the
    missing frames. ``windows`` are assumed to be normalized already.
    """
    if callable(predictors):
        predictors = [predictors]
    predictors = list(predictors)
    if not predictors:
        raise ContractError("evaluate needs at least one predictor")
    report = MetricsReport(dataset_id=dataset_id, model_id=model_id, seed_count=len(predictors))
    for L in lengths:
        task = evaluation_task(windows, L, style, context)
        target = task.target()
        t_pos, t_q = _metric_arrays(target)
        if t_q is not None:
            t_q = geo.quat_continuity(t_q, axis=1)
        values = []
        for predict in predictors:
            pred = predict(task)
            p_pos, p_q = _metric_arrays(pred)
            if p_q is not None and t_q is not None:
                p_q = geo.hemisphere_align(p_q, t_q)
            q_val = l2q(p_q, t_q) if (p_q is not None and t_q is not None) else None
            n_val = npss(p_q, t_q) if (p_q is not None and t_q is not None) else npss(p_pos, t_pos)
            values.append((q_val, l2p(p_pos, t_pos, stats), n_val))
        q_vals = [v[0] for v in values]
        report.add(L,
                   None if any(q is None for q in q_vals) else float(np.mean(q_vals)),
                   float(np.mean([v[1] for v in values])),
                   float(np.mean([v[2] for v in values])))
    return report
