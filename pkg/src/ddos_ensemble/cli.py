"""Command-line entry point: preprocess | train | evaluate | predict | synth.

Exit codes: 0 success, 1 data or runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .artifact import load_artifact, save_artifact
from .config import RunConfig, load_config
from .data.dataset import Dataset, read_dataset, write_dataset
from .data.pipeline import StageError, run_preprocess
from .data.synth import SynthSpec, synth_generate, write_flow_csv
from .data.table import load_flow_csv
from .ensemble import MODEL_ORDER
from .errors import ConfigError, DDoSEnsembleError
from .metrics import (compare_table, confusion_csv, correlation_csv, metrics_json, pareto_csv)
from .workflow import evaluate_artifact, train_ensemble

log = logging.getLogger("ddos_ensemble")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _clean_nan(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _clean_nan(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_nan(v) for v in obj]
    return obj


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _config(args, extra: dict | None = None) -> RunConfig:
    overrides = {"seed": args.seed, "threads": args.threads, **(extra or {})}
    return load_config(args.config, overrides)


# ------------------------------------------------------------------ commands


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    inputs = args.inputs or cfg.paths.inputs
    out = args.out or cfg.paths.dataset
    if not inputs or not out:
        raise UsageError("preprocess needs --in and --out (or paths.inputs / paths.dataset in the config)")
    p = cfg.preprocess
    result = run_preprocess(inputs, cfg.features, p.label_column, p.prune_threshold, p.train_fraction,
                            cfg.seed, p.pareto_top_k)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, {"train": result.train, "test": result.test}, result.scaler, result.report)
    report_dir = Path(args.report_dir) if args.report_dir else out.parent
    _write(report_dir / "preprocess_report.json", _dump(result.report.to_dict()))
    _write(report_dir / "pareto.csv", pareto_csv(result.pareto))
    _write(report_dir / "correlation.csv", correlation_csv(*result.correlation))
    log.info("wrote %s (%d train / %d test rows)", out, len(result.train), len(result.test))
    return EXIT_OK


def _load_partitions(path) -> dict[str, Dataset]:
    parts = read_dataset(path)
    if not parts:
        raise DDoSEnsembleError(f"{path}: dataset has no rows")
    return parts


def cmd_train(args) -> int:
    extra = {"train.epochs": args.epochs, "meta.epochs": args.meta_epochs, "grid.step": args.grid_step,
             "grid.max": args.grid_max, "ensemble.combine": args.combine}
    cfg = _config(args, extra)
    data = args.data or cfg.paths.dataset
    out = args.out or cfg.paths.model
    if not data or not out:
        raise UsageError("train needs --data and --out (or paths.dataset / paths.model in the config)")
    parts = _load_partitions(data)
    if "train" not in parts:
        raise DDoSEnsembleError(f"{data}: no 'train' partition")
    train = parts["train"]
    val = parts.get("test")
    start = time.perf_counter()
    outputs = train_ensemble(train, cfg, val.aligned(train.feature_names) if val is not None else None)
    log.info("training finished in %.1f s", time.perf_counter() - start)

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_artifact(outputs.artifact, out)
    report_dir = Path(args.report_dir) if args.report_dir else out.parent
    for kind in MODEL_ORDER:
        curve = outputs.artifact.model.base_models[kind].curve
        _write(report_dir / f"curves_{kind}.csv", curve.to_csv())
    _write(report_dir / "gridsearch_trace.csv", outputs.trace.to_csv())
    _write(report_dir / "base_models.txt", compare_table(outputs.base_reports))
    _write(report_dir / "train_report.json", _dump(_clean_nan({
        **outputs.summary,
        "base_metrics_tuning": [r.to_dict() for r in outputs.base_reports],
        "config": cfg.to_dict(),
    })))
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    artifact = load_artifact(args.model)
    parts = _load_partitions(args.data)
    split = args.split or ("test" if "test" in parts else next(iter(parts)))
    if split not in parts:
        raise DDoSEnsembleError(f"{args.data}: no {split!r} partition (have {sorted(parts)})")
    data = parts[split]
    if data.y is None:
        raise DDoSEnsembleError("labels required for evaluation")
    reports = evaluate_artifact(artifact, data, split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "metrics.json", metrics_json(reports))
    _write(out / "confusion.csv", confusion_csv(reports))
    _write(out / "comparison.txt", compare_table(reports))
    if not args.quiet:
        sys.stdout.write(compare_table(reports))
    return EXIT_OK


def cmd_predict(args) -> int:
    artifact = load_artifact(args.model)
    table = load_flow_csv(args.inputs, label_column=args.label_column)
    missing = [n for n in artifact.feature_names if n not in table.frame.columns]
    if missing:
        raise DDoSEnsembleError(f"input is missing feature columns {missing}")
    non_numeric = [n for n in artifact.feature_names if n not in table.numeric_columns]
    if non_numeric:
        raise DDoSEnsembleError(f"feature columns are not numeric: {non_numeric}")
    X = table.frame[artifact.feature_names].to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
    if len(bad):
        raise DDoSEnsembleError(f"row {int(bad[0])} has a missing or non-finite feature value")
    if artifact.scaler is not None:
        X = artifact.scaler.transform(X)
    labels, p = artifact.model.predict(X) if len(X) else (np.empty(0, np.int64), np.empty(0))
    lines = ["row_index,p_ddos,label"] + [f"{i},{p[i]:.6f},{int(labels[i])}" for i in range(len(X))]
    _write(Path(args.out), "\n".join(lines) + "\n")
    return EXIT_OK


def _parse_spec(text: str) -> dict:
    path = Path(text)
    try:
        raw = path.read_text(encoding="utf-8") if path.exists() else text
        spec = json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--spec must be a JSON object or a path to one: {exc}") from exc
    if not isinstance(spec, dict):
        raise UsageError("--spec must be a JSON object")
    return spec


def cmd_synth(args) -> int:
    spec_d = _parse_spec(args.spec) if args.spec else {}
    if args.seed is not None:
        spec_d["seed"] = args.seed
    try:
        spec = SynthSpec.from_dict(spec_d)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid synth spec: {exc}") from exc
    ds = synth_generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_flow_csv(ds, out)
    _write(out.with_name(out.stem + ".report.json"), _dump(ds.report.to_dict()))
    for w in ds.report.warnings:
        log.warning("%s", w)
    return EXIT_OK


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the sub-command copies use SUPPRESS so they do not clobber values given before the command
    d = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration", **d)
    common.add_argument("--seed", type=int, help="root seed (overrides the config)", **d)
    common.add_argument("--threads", type=int, help="worker threads", **d)
    common.add_argument("--quiet", action="store_true", help="only print warnings and errors", **d)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = _Parser(prog="ddos-ensemble", description=__doc__.splitlines()[0],
                     parents=[_global_flags(suppress=False)])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="raw flow CSVs -> dataset file")
    p.add_argument("--in", dest="inputs", nargs="+", help="CSV files or directories of CSVs")
    p.add_argument("--out", help="dataset file to write")
    p.add_argument("--report-dir", help="directory for report files (default: beside --out)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="train base models, weights and meta-classifier")
    p.add_argument("--data", help="dataset file from preprocess")
    p.add_argument("--out", help="model artifact to write")
    p.add_argument("--report-dir", help="directory for curves and reports (default: beside --out)")
    p.add_argument("--epochs", type=int, help="training epochs for the base networks")
    p.add_argument("--meta-epochs", type=int, help="training epochs for the meta-classifier")
    p.add_argument("--grid-step", type=float, help="weight grid step (default 0.1)")
    p.add_argument("--grid-max", type=float, help="largest grid weight (default 0.4)")
    p.add_argument("--combine", choices=("stack", "sum", "soft_vote"), help="how base outputs are combined")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="metrics for base models and ensemble")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", help="partition to evaluate (default: test)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="score raw flow rows")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inputs", required=True, help="CSV with the model's feature columns")
    p.add_argument("--out", required=True)
    p.add_argument("--label-column", default="Label")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic flow CSV")
    p.add_argument("--spec", help="JSON object or path: n_rows, n_features, class_balance, separation, noise, seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"ddos-ensemble: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"ddos-ensemble: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (DDoSEnsembleError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ddos-ensemble: error: {msg}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
