"""Command-line entry point: ``deltainterp <command> ...``.

Errors end the process with one line on stderr,
``error: code=<name> exit=<n> message=<text>``, and exit codes
0 ok, 2 configuration, 3 data, 4 numeric failure, 5 unsupported task.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import shutil
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import metrics as met
from .baselines import BaselineKind, baseline_predictor
from .errors import ConfigError, DataError, DeltaInterpError, UnsupportedTaskError
from .geometry import Skeleton
from .model import DeltaInterpolator, ModelConfig, OutputDelta, mode_label, parse_mode_pair
from .motion import (InbetweenTask, MotionSequence, NormStats, identity_stats, load_csv_with_gaps,
                     load_dataset, make_windows, normalization_frame, normalize_stats,
                     normalize_window, save_csv, transform_sequence, untransform_sequence)
from .sampling import SamplerConfig
from .synth import KINDS, humanoid_skeleton, synth_motion, tiny_skeleton
from .training import TrainConfig, save_checkpoint, train

DATA_ENV = "DELTAINTERP_DATA"
DEFAULT_MODES = "Last:I,Last:Last,No:No,No:I,No:Last"


# ----------------------------------------------------------------------------
# run configuration


@dataclass
class DataConfig:
    window_offset: int = 20
    normalize: bool = True
    context: int = 10


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return {"model": dict(self.model), "train": self.train.to_dict(),
                "sampler": {k: list(v) if isinstance(v, tuple) else v
                            for k, v in self.sampler.to_dict().items()},
                "data": dict(vars(self.data))}

    def model_config(self, n_joints: int) -> ModelConfig:
        return ModelConfig(n_joints=n_joints, **self.model).validate()


PRESETS = {
    "default": {},
    "tiny": {
        "model": {"width": 64, "heads": 4, "blocks": 2, "dropout": 0.0},
        "train": {"epochs": 10, "batch_size": 8, "batches_per_epoch": 8, "warmup_epochs": 2,
                  "lr_drop_epoch": 8, "lr_max": 1e-3},
        "sampler": {"window_len": 50},
        "data": {"window_offset": 20},
    },
}

_SECTIONS = {"train": TrainConfig, "sampler": SamplerConfig, "data": DataConfig}
_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"n_joints"}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def parse_override(text: str) -> dict:
    """``section.key=value`` into a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    path, raw = text.split("=", 1)
    keys = path.strip().split(".")
    if len(keys) != 2 or not all(keys):
        raise ConfigError(f"override key {path!r} must be section.key")
    return {keys[0]: {keys[1]: yaml.safe_load(raw)}}


def load_run_config(source=None, overrides=()) -> RunConfig:
    """Build a validated :class:`RunConfig` from a preset name or YAML file plus overrides."""
    if source is None:
        doc = {}
    elif str(source) in PRESETS:
        doc = PRESETS[str(source)]
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file {path} not found (presets: {', '.join(PRESETS)})")
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}".replace("\n", " ")) from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path} must hold a mapping of sections")
        if "preset" in doc:
            doc = _merge(PRESETS.get(doc.pop("preset"), {}), doc)
    for text in overrides:
        doc = _merge(doc, parse_override(text))
    unknown = set(doc) - set(_SECTIONS) - {"model"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    sections = {}
    for name, cls in _SECTIONS.items():
        values = doc.get(name) or {}
        allowed = {f.name for f in fields(cls)}
        bad = set(values) - allowed
        if bad:
            raise ConfigError(f"unknown {name} option(s): {', '.join(sorted(bad))}")
        try:
            sections[name] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad {name} options: {exc}") from None
    model = dict(doc.get("model") or {})
    bad = set(model) - _MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown model option(s): {', '.join(sorted(bad))}")
    cfg = RunConfig(model, sections["train"], sections["sampler"], sections["data"])
    cfg.sampler.batch_size = cfg.train.batch_size
    cfg.train.validate()
    cfg.sampler.validate()
    cfg.model_config(1)
    return cfg


# ----------------------------------------------------------------------------
# helpers


def prepare_out_dir(path, force: bool = False) -> Path:
    """Create ``path``; refuse an existing non-empty directory unless ``force``."""
    path = Path(path)
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        if not force:
            raise ConfigError(f"output {path} already exists; pass --force to replace it")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_data(arg) -> Path:
    value = arg or os.environ.get(DATA_ENV)
    if not value:
        raise ConfigError(f"no data directory: pass --data or set {DATA_ENV}")
    path = Path(value)
    if not path.is_dir():
        raise DataError(f"data directory {path} does not exist")
    return path


def parse_lengths(text: str) -> list:
    try:
        lengths = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --lengths {text!r}; expected e.g. 5,15,30") from None
    if not lengths or min(lengths) < 1:
        raise ConfigError("transition lengths must be positive")
    return lengths


def load_windows(data_dir, window_len: int, offset: int):
    skeleton, seqs = load_dataset(data_dir)
    windows = [w for s in seqs for w in make_windows(s, window_len, offset)]
    if not windows:
        raise DataError(f"no {window_len}-frame windows in {data_dir}")
    return skeleton, windows


def prepare_windows(windows, stats: NormStats | None):
    if stats is None or not (stats.center or stats.rotate):
        return windows
    return [normalize_window(w, stats.context, stats.center, stats.rotate) for w in windows]


def write_reports(out_dir: Path, reports, stem: str = "report"):
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(reports, met.MetricsReport):
        reports = [reports]
    doc = [r.to_dict() for r in reports]
    (out_dir / f"{stem}.json").write_text(json.dumps(doc if len(doc) > 1 else doc[0], indent=1))
    table = met.MetricsReport.table(reports)
    (out_dir / f"{stem}.txt").write_text(table + "\n")
    print(table)


def _write_config(out_dir: Path, cfg: RunConfig, extra=None):
    doc = cfg.to_dict()
    if extra:
        doc["run"] = extra
    (out_dir / "config.yaml").write_text(yaml.safe_dump(doc, sort_keys=False))


def _train_model(cfg: RunConfig, skeleton, windows, out_dir: Path, seed_offset: int = 0):
    if skeleton is None:
        raise UnsupportedTaskError("training needs rotation data (a skeleton.json in the data directory)")
    stats = (normalize_stats(windows, cfg.data.context) if cfg.data.normalize
             else identity_stats(skeleton.n_joints))
    train_windows = prepare_windows(windows, stats)
    model = DeltaInterpolator(cfg.model_config(skeleton.n_joints), skeleton,
                              seed=cfg.train.seed + seed_offset)
    result = train(model, train_windows, cfg.train, cfg.sampler, out_dir=out_dir, stats=stats)
    save_checkpoint(out_dir / "final", model, result.optimizer, cfg.train.epochs, stats)
    return model, stats, result


def model_predictor(model: DeltaInterpolator):
    def predict(task: InbetweenTask):
        if task.n_frames > model.config.max_frame_index:
            raise UnsupportedTaskError(
                f"task spans {task.n_frames} frames, model supports {model.config.max_frame_index}")
        return model.predict(task)
    return predict


def load_checkpoint(path):
    path = Path(path)
    if not (path / "manifest.json").exists():
        if (path / "final" / "manifest.json").exists():
            path = path / "final"
        else:
            raise DataError(f"{path} is not a checkpoint directory")
    model = DeltaInterpolator.load(path)
    stats_path = path / "norm_stats.json"
    stats = NormStats.load(stats_path) if stats_path.exists() else identity_stats(model.config.n_joints)
    return model, stats


# ----------------------------------------------------------------------------
# commands


def cmd_synth(args):
    out = prepare_out_dir(args.out, args.force)
    skeleton = {"tiny": tiny_skeleton, "humanoid": humanoid_skeleton}[args.skeleton]()
    skeleton.save(out / "skeleton.json")
    kinds = KINDS if args.kind == "all" else (args.kind,)
    written = []
    for i in range(args.count):
        for kind in kinds:
            seed = args.seed + i
            seq = synth_motion(kind, skeleton, args.frames, seed)
            path = out / f"{kind}-{seed}.csv"
            save_csv(seq, path)
            written.append(path.name)
    print(f"wrote {len(written)} sequence(s) to {out}")
    return 0


def cmd_train(args):
    cfg = load_run_config(args.config, args.set)
    data = resolve_data(args.data)
    out = prepare_out_dir(args.out, args.force)
    _write_config(out, cfg, {"data": str(data)})
    skeleton, windows = load_windows(data, cfg.sampler.window_len, cfg.data.window_offset)
    _, _, result = _train_model(cfg, skeleton, windows, out)
    last = result.log[-1] if result.log else {}
    print(f"trained {len(result.log)} steps; final lTot={last.get('lTot', float('nan')):.6f}; "
          f"checkpoint {out / 'final'}")
    return 0


def _protocol(args) -> dict:
    proto = dict(met.PROTOCOLS[args.style])
    for key in ("window_len", "offset"):
        if getattr(args, key, None) is not None:
            proto[key] = getattr(args, key)
    if getattr(args, "train_offset", None) is not None:
        proto["train_offset"] = args.train_offset
    return proto


def cmd_eval(args):
    data = resolve_data(args.data)
    lengths = parse_lengths(args.lengths)
    out = prepare_out_dir(args.out, args.force)
    loaded = [load_checkpoint(p) for p in args.checkpoint.split(",")]
    stats = loaded[0][1]
    proto = _protocol(args)
    _, windows = load_windows(data, proto["window_len"], proto["offset"])
    windows = prepare_windows(windows, stats)
    model = loaded[0][0]
    report = met.evaluate([model_predictor(m) for m, _ in loaded], windows, lengths, stats,
                          args.style, context=stats.context, dataset_id=str(data),
                          model_id=args.name or mode_label(model.config.input_delta,
                                                           model.config.output_delta))
    write_reports(out, report)
    return 0


def cmd_baseline(args):
    data = resolve_data(args.data)
    lengths = parse_lengths(args.lengths)
    out = prepare_out_dir(args.out, args.force)
    proto = _protocol(args)
    _, windows = load_windows(data, proto["window_len"], proto["offset"])
    if args.stats:
        stats = NormStats.load(args.stats)
    else:
        source = windows
        if args.train_data:
            _, source = load_windows(Path(args.train_data), proto["train_window_len"],
                                     proto["train_offset"])
        stats = normalize_stats(source, context=proto["context"], center=not args.raw,
                                rotate=not args.raw)
    windows = prepare_windows(windows, stats)
    kinds = [BaselineKind(k) for k in args.kind.split(",")]
    reports = [met.evaluate(baseline_predictor(k), windows, lengths, stats, args.style,
                            context=proto["context"], dataset_id=str(data), model_id=k.value)
               for k in kinds]
    write_reports(out, reports)
    return 0


def check_gap_pattern(key_mask, model: DeltaInterpolator):
    """Refuse key layouts the model cannot serve, naming the violated constraint."""
    T = len(key_mask)
    if not key_mask.any():
        raise UnsupportedTaskError("the input has no key-frames")
    if key_mask.all():
        raise UnsupportedTaskError("the input has no gaps to fill")
    if not key_mask[0]:
        raise UnsupportedTaskError("the first frame must be a key-frame (no key before the first gap)")
    if model.config.output_delta == OutputDelta.INTERP.value and not key_mask[-1]:
        raise UnsupportedTaskError(
            "interpolation output mode needs a trailing key-frame after the last gap")
    if T > model.config.max_frame_index:
        raise UnsupportedTaskError(
            f"the input has {T} frames; the model's frame embedding covers {model.config.max_frame_index}")


def cmd_inbetween(args):
    model, stats = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"output {out} already exists; pass --force to replace it")
    seq, key_mask = load_csv_with_gaps(args.input, model.skeleton)
    check_gap_pattern(key_mask, model)
    first_gap = int(np.argmin(key_mask))
    offset, ry = normalization_frame(seq.window(0, first_gap), stats.context, stats.center, stats.rotate)
    normed = transform_sequence(seq, offset, ry)
    task = InbetweenTask.from_sequences([normed], np.flatnonzero(key_mask))
    pred = model.predict(task)
    root, rot6 = normed.root_pos.copy(), normed.rot6.copy()
    root[task.out_idx] = pred.root_pos[0]
    rot6[task.out_idx] = pred.rot6[0]
    filled = MotionSequence(model.skeleton, root, rot6, seq.frame_rate, name=seq.name)
    result = untransform_sequence(filled, offset, ry)
    # key-frames are written back exactly as given
    result.root_pos[key_mask] = seq.root_pos[key_mask]
    result.rot6[key_mask] = seq.rot6[key_mask]
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(result, out)
    print(f"filled {int((~key_mask).sum())} frame(s); wrote {out}")
    return 0


def cmd_ablate(args):
    cfg = load_run_config(args.config, args.set)
    if args.recon is not None:
        cfg.train.reconstruction_loss = args.recon == "on"
    modes = [parse_mode_pair(m) for m in args.modes.split(",") if m.strip()]
    lengths = parse_lengths(args.lengths)
    data = resolve_data(args.data)
    out = prepare_out_dir(args.out, args.force)
    _write_config(out, cfg, {"data": str(data), "modes": args.modes, "recon": args.recon})
    skeleton, windows = load_windows(data, cfg.sampler.window_len, cfg.data.window_offset)
    if args.eval_data:
        _, eval_windows = load_windows(Path(args.eval_data), cfg.sampler.window_len,
                                       cfg.data.window_offset)
    else:
        eval_windows = windows
    reports = []
    for inp, outp in modes:
        label = mode_label(inp, outp)
        cell = copy.deepcopy(cfg)
        cell.model.update(input_delta=inp.value, output_delta=outp.value)
        cell_dir = out / label.replace(":", "-")
        model, stats, _ = _train_model(cell, skeleton, windows, cell_dir)
        report = met.evaluate(model_predictor(model), prepare_windows(eval_windows, stats), lengths,
                              stats, dataset_id=str(args.eval_data or data), model_id=label)
        write_reports(cell_dir, report)
        reports.append(report)
    write_reports(out, reports, stem="summary")
    return 0


# ----------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """Usage errors become :class:`ConfigError` so they share the one-line error format."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deltainterp", description="Key-frame motion in-betweening.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        if out:
            sp.add_argument("--out", required=True, help="output directory")
            sp.add_argument("--force", action="store_true", help="replace an existing output")

    s = sub.add_parser("synth", help="write synthetic motion CSVs and a skeleton")
    s.add_argument("--kind", default="all", choices=list(KINDS) + ["all"])
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1, help="sequences per kind (seeds seed, seed+1, ...)")
    s.add_argument("--skeleton", default="tiny", choices=["tiny", "humanoid"])
    common(s)
    s.set_defaults(func=cmd_synth)

    for name, func, help_ in (("train", cmd_train, "train an interpolator"),
                              ("ablate", cmd_ablate, "train and score a grid of delta modes")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", default=None, help=f"YAML file or preset ({', '.join(PRESETS)})")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        s.add_argument("--data", default=None, help=f"dataset directory (default ${DATA_ENV})")
        common(s)
        s.set_defaults(func=func)
        if name == "ablate":
            s.add_argument("--modes", default=DEFAULT_MODES)
            s.add_argument("--recon", choices=["on", "off"], default=None)
            s.add_argument("--lengths", default="5,15,30")
            s.add_argument("--eval-data", default=None, help="held-out dataset directory")

    for name, func in (("eval", cmd_eval), ("baseline", cmd_baseline)):
        s = sub.add_parser(name, help=f"score {'checkpoints' if name == 'eval' else 'baselines'}")
        if name == "eval":
            s.add_argument("--checkpoint", required=True, help="checkpoint dir(s), comma separated")
            s.add_argument("--name", default=None, help="model label in the report")
        else:
            s.add_argument("--kind", default="zerovel,slerp",
                           help="comma separated: " + ",".join(k.value for k in BaselineKind))
            s.add_argument("--stats", default=None, help="norm_stats.json to standardize with")
            s.add_argument("--train-data", default=None, help="compute stats from this dataset")
            s.add_argument("--train-offset", type=int, default=None,
                           help="window offset for --train-data (default per style)")
            s.add_argument("--raw", action="store_true", help="skip centering and rotation")
        s.add_argument("--data", default=None, help=f"dataset directory (default ${DATA_ENV})")
        s.add_argument("--lengths", default="5,15,30")
        s.add_argument("--style", default="lafan", choices=["lafan", "anidance"])
        s.add_argument("--window-len", type=int, default=None,
                       help="evaluation window length (default 65 lafan, 128 anidance)")
        s.add_argument("--offset", type=int, default=None,
                       help="evaluation window offset (default 40 lafan, 64 anidance)")
        common(s)
        s.set_defaults(func=func)

    s = sub.add_parser("inbetween", help="fill the gaps of a motion CSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True, help="CSV whose empty rows mark missing frames")
    s.add_argument("--out", required=True, help="output CSV")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_inbetween)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except DeltaInterpError as exc:
        err = exc
    except FileNotFoundError as exc:
        err = DataError(f"file not found: {exc.filename}")
    except FloatingPointError as exc:
        err = exc
    code = getattr(err, "code", "numeric")
    exit_code = getattr(err, "exit_code", 4)
    message = " ".join(str(err).split())
    print(f"error: code={code} exit={exit_code} message={message}", file=sys.stderr)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
