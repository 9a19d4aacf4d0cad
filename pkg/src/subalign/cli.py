"""Experiment driver: generate data, train, and measure discrepancies.

Subcommands
    generate     write paired source/target CSVs (two_moons or blobs)
    train        run a full training experiment from a JSON config
    discrepancy  MMD and LMMD between two CSV datasets
    adistance    global and per-class domain-distance report

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import Dataset, gen_blobs, gen_two_moons, load_csv, save_csv
from .discrepancy import EmptyOverlapError, class_weights, lmmd, mmd
from .errors import ConfigurationError, ParseError, SubalignError, ValidationError
from .kernels import MEDIAN, KernelSpec
from .metrics import accuracy, local_a_distance, measure_discrepancies
from .network import forward, load_model, mlp_init, save_model
from .trainer import TrainConfig, train

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    source_csv: str
    target_csv: str
    output_dir: str
    schema_version: int = SCHEMA_VERSION
    train: TrainConfig = field(default_factory=TrainConfig)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    use_target_labels: bool = True

    def to_dict(self) -> dict:
        cfg = asdict(self.train)
        cfg["hidden_dims"] = list(self.train.hidden_dims)
        return {
            "schema_version": self.schema_version,
            "source_csv": self.source_csv,
            "target_csv": self.target_csv,
            "output_dir": self.output_dir,
            "train": cfg,
            "kernel": {
                "base_bandwidth": self.kernel.base_bandwidth,
                "multipliers": list(self.kernel.multipliers),
            },
            "use_target_labels": self.use_target_labels,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {
            "schema_version", "source_csv", "target_csv", "output_dir",
            "train", "kernel", "use_target_labels",
        }
        _reject_unknown(raw, known, "config")
        if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigurationError(
                f"unsupported schema_version {raw.get('schema_version')!r}"
            )
        for key in ("source_csv", "target_csv", "output_dir"):
            if key not in raw or not isinstance(raw[key], str):
                raise ConfigurationError(f"config requires string field {key!r}")
        train_raw = dict(raw.get("train", {}))
        _reject_unknown(train_raw, {f.name for f in fields(TrainConfig)}, "train")
        if "hidden_dims" in train_raw:
            train_raw["hidden_dims"] = tuple(train_raw["hidden_dims"])
        kernel_raw = dict(raw.get("kernel", {}))
        _reject_unknown(kernel_raw, {"base_bandwidth", "multipliers"}, "kernel")
        if "multipliers" in kernel_raw:
            kernel_raw["multipliers"] = tuple(kernel_raw["multipliers"])
        return cls(
            source_csv=raw["source_csv"],
            target_csv=raw["target_csv"],
            output_dir=raw["output_dir"],
            schema_version=SCHEMA_VERSION,
            train=TrainConfig(**train_raw),
            kernel=KernelSpec(**kernel_raw),
            use_target_labels=bool(raw.get("use_target_labels", True)),
        )


def _reject_unknown(raw: dict, known: set, where: str) -> None:
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(
            f"unknown {where} keys: {', '.join(sorted(unknown))}"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subalign",
        description="Kernel-discrepancy and subdomain-adaptation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write paired source/target CSVs")
    gen.add_argument("kind", choices=["two_moons", "blobs"])
    gen.add_argument("--n", type=int, default=400, help="samples per domain")
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--rotation", type=float, default=30.0,
                     help="target rotation in degrees (two_moons)")
    gen.add_argument("--classes", type=int, default=3, help="blob class count")
    gen.add_argument("--dim", type=int, default=2, help="blob feature dimension")
    gen.add_argument("--shift", type=str, default="2.0",
                     help="blob center shift: scalar or comma-separated vector")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-source", required=True)
    gen.add_argument("--out-target", required=True)

    tr = sub.add_parser("train", help="run a training experiment")
    tr.add_argument("--config", required=True, help="JSON experiment config")

    disc = sub.add_parser("discrepancy", help="MMD/LMMD between two datasets")
    disc.add_argument("--source", required=True)
    disc.add_argument("--target", required=True)
    disc.add_argument("--model", default=None,
                      help="model file; switches to bottleneck features")
    disc.add_argument("--bandwidth", default=MEDIAN,
                      help="'median' or a positive number")
    disc.add_argument("--multipliers", default=None,
                      help="comma-separated bandwidth multipliers")
    disc.add_argument("--out", default=None, help="write the report here")

    ad = sub.add_parser("adistance", help="domain-distance report")
    ad.add_argument("--source", required=True)
    ad.add_argument("--target", required=True)
    ad.add_argument("--model", default=None,
                    help="model file; switches to bottleneck features")
    ad.add_argument("--seed", type=int, default=0)
    ad.add_argument("--out", default=None, help="write the report here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    handler = {
        "generate": cmd_generate,
        "train": cmd_train,
        "discrepancy": cmd_discrepancy,
        "adistance": cmd_adistance,
    }[args.command]
    try:
        return handler(args)
    except (ConfigurationError, ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SubalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cmd_generate(args) -> int:
    for out in (args.out_source, args.out_target):
        parent = os.path.dirname(os.path.abspath(out))
        if not os.path.isdir(parent):
            print(f"error: cannot write {out}: no such directory", file=sys.stderr)
            return 2
    if args.kind == "two_moons":
        source = gen_two_moons(args.n, args.noise, 0.0, args.seed)
        target = gen_two_moons(args.n, args.noise, args.rotation, args.seed + 1)
    else:
        shift = np.array([float(v) for v in args.shift.split(",")])
        if shift.size == 1:
            shift = np.full(args.dim, float(shift[0]))
        source = gen_blobs(args.n, args.classes, args.dim,
                           np.zeros(args.dim), args.noise, args.seed)
        target = gen_blobs(args.n, args.classes, args.dim,
                           shift, args.noise, args.seed + 1)
    save_csv(source, args.out_source)
    save_csv(target, args.out_target)
    print(f"wrote {args.out_source} and {args.out_target} "
          f"({source.n} rows per domain)")
    return 0


def cmd_train(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        print(f"error: config {args.config} not found", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    cfg = ExperimentConfig.from_dict(raw)
    source = _load_existing(cfg.source_csv)
    target = _load_existing(cfg.target_csv)
    if not source.is_labeled:
        raise ConfigurationError("source dataset must be fully labeled")
    if source.dim != target.dim:
        raise ConfigurationError("source/target feature dimensions disagree")

    os.makedirs(cfg.output_dir, exist_ok=True)
    trace_path = os.path.join(cfg.output_dir, "trace.jsonl")
    model_path = os.path.join(cfg.output_dir, "model.npz")
    summary_path = os.path.join(cfg.output_dir, "summary.json")
    train_cfg = TrainConfig(**{**asdict(cfg.train), "trace_path": trace_path})

    eval_labels = None
    if cfg.use_target_labels and target.is_labeled:
        eval_labels = target.labels
    C = source.class_count
    initial = mlp_init((source.dim, *train_cfg.hidden_dims, C), train_cfg.seed)
    model, trace = train(
        train_cfg,
        source.features,
        source.labels,
        target.features,
        eval_labels=eval_labels,
        kernel=cfg.kernel,
        class_count=C,
    )
    save_model(model, model_path)

    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "iterations": len(trace),
        "lmmd_skipped_steps": trace.lmmd_skipped_steps(),
        "final_source_accuracy": accuracy(
            forward(model, source.features).probs, source.labels
        ),
        "final_target_accuracy": None,
        "discrepancy_initial": None,
        "discrepancy_final": None,
        "a_distance_initial": None,
        "a_distance_final": None,
    }
    if eval_labels is not None:
        summary["final_target_accuracy"] = accuracy(
            forward(model, target.features).probs, eval_labels
        )
        summary["discrepancy_initial"] = measure_discrepancies(
            initial, source.features, source.labels,
            target.features, eval_labels, cfg.kernel,
        )
        summary["discrepancy_final"] = measure_discrepancies(
            model, source.features, source.labels,
            target.features, eval_labels, cfg.kernel,
        )
        summary["a_distance_initial"] = local_a_distance(
            forward(initial, source.features).bottleneck, source.labels,
            forward(initial, target.features).bottleneck, eval_labels,
            train_cfg.seed,
        ).to_dict()
        summary["a_distance_final"] = local_a_distance(
            forward(model, source.features).bottleneck, source.labels,
            forward(model, target.features).bottleneck, eval_labels,
            train_cfg.seed,
        ).to_dict()
    _write_json(summary_path, summary)
    print(json.dumps(summary, sort_keys=True, indent=2, allow_nan=False))
    return 0


def cmd_discrepancy(args) -> int:
    source = _load_existing(args.source)
    target = _load_existing(args.target)
    if source.dim != target.dim:
        raise ConfigurationError("source/target feature dimensions disagree")
    if not source.is_labeled:
        raise ConfigurationError("source dataset must be labeled for LMMD")
    spec = _kernel_from_args(args)

    model = load_model(args.model) if args.model else None
    if model is not None:
        fs = forward(model, source.features).bottleneck
        trace_t = forward(model, target.features)
        ft = trace_t.bottleneck
        C = model.class_count
        target_rows = (
            _onehot(target.labels, C) if target.is_labeled else trace_t.probs
        )
        feature_space = "bottleneck"
    else:
        if not target.is_labeled:
            raise ConfigurationError(
                "target dataset is unlabeled; provide --model to derive "
                "soft labels, or label the target"
            )
        fs, ft = source.features, target.features
        C = max(source.class_count, target.class_count)
        target_rows = _onehot(target.labels, C)
        feature_space = "raw"
    if np.any(source.labels >= C):
        raise ConfigurationError("source labels exceed the model class count")
    ws = class_weights(_onehot(source.labels, C))
    wt = class_weights(target_rows)

    report = {
        "features": feature_space,
        "kernel": {"base_bandwidth": spec.base_bandwidth,
                   "multipliers": list(spec.multipliers)},
        "mmd": mmd(fs, ft, spec).value,
        "lmmd": None,
        "contributing_classes": 0,
    }
    try:
        res = lmmd(fs, ft, ws, wt, spec)
        report["lmmd"] = res.value
        report["contributing_classes"] = res.contributing_classes
    except EmptyOverlapError:
        report["note"] = "no class present in both domains; lmmd undefined"
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, sort_keys=True, indent=2, allow_nan=False))
    return 0


def cmd_adistance(args) -> int:
    source = _load_existing(args.source)
    target = _load_existing(args.target)
    if source.dim != target.dim:
        raise ConfigurationError("source/target feature dimensions disagree")
    if not (source.is_labeled and target.is_labeled):
        raise ConfigurationError(
            "both datasets need labels for the per-class distance report"
        )
    if args.model:
        model = load_model(args.model)
        fs = forward(model, source.features).bottleneck
        ft = forward(model, target.features).bottleneck
    else:
        fs, ft = source.features, target.features
    report = local_a_distance(
        fs, source.labels, ft, target.labels, args.seed
    ).to_dict()
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, sort_keys=True, indent=2, allow_nan=False))
    return 0


def _kernel_from_args(args) -> KernelSpec:
    bandwidth = args.bandwidth
    if bandwidth != MEDIAN:
        try:
            bandwidth = float(bandwidth)
        except ValueError:
            raise ConfigurationError(
                f"--bandwidth must be 'median' or a number, got {bandwidth!r}"
            ) from None
    if args.multipliers is not None:
        mults = tuple(float(v) for v in args.multipliers.split(","))
        return KernelSpec(bandwidth, mults)
    return KernelSpec(bandwidth)


def _load_existing(path: str) -> Dataset:
    if not os.path.isfile(path):
        raise ConfigurationError(f"dataset file {path} does not exist")
    return load_csv(path)


def _onehot(labels, C: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], C))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


if __name__ == "__main__":
    sys.exit(main())
