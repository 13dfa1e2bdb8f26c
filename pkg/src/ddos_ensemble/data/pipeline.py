"""The full preprocessing run from raw CSV files to scaled train/test partitions."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InputError
from .dataset import Dataset
from .preprocess import (DEFAULT_PRUNE_THRESHOLD, DEFAULT_FEATURES, MinMaxScaler, correlation_matrix,
                         drop_duplicates, label_binarize, minmax_scale, pareto_summary,
                         prune_correlated, sanitize_nulls, select_features, stratified_split)
from .table import PreprocessReport, RawTable, load_flow_csv, merge_tables

log = logging.getLogger(__name__)


@dataclass
class PreprocessResult:
    train: Dataset
    test: Dataset
    scaler: MinMaxScaler
    report: PreprocessReport
    correlation: tuple[list[str], np.ndarray]
    pareto: dict[str, list[tuple]]


class StageError(Exception):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError(name, exc) from exc


def expand_inputs(inputs) -> list[Path]:
    paths = []
    for p in inputs:
        p = Path(p)
        paths.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    return paths


def clean_table(table: RawTable, features=DEFAULT_FEATURES,
                prune_threshold: float = DEFAULT_PRUNE_THRESHOLD) -> RawTable:
    """dedup -> sanitize -> prune -> select, the table-level part of the run."""
    table = _stage("dedup", drop_duplicates, table)
    table = _stage("sanitize", sanitize_nulls, table)
    table = _stage("prune", prune_correlated, table, prune_threshold)
    return _stage("select", select_features, table, features)


def run_preprocess(inputs, features=DEFAULT_FEATURES, label_column: str = "Label",
                   prune_threshold: float = DEFAULT_PRUNE_THRESHOLD, train_fraction: float = 0.8,
                   seed: int = 0, pareto_top_k: int = 20) -> PreprocessResult:
    """load -> merge -> dedup -> sanitize -> prune -> select -> binarize -> split -> scale."""
    paths = expand_inputs(inputs)
    if not paths:
        raise StageError("load", InputError("no input CSV files"))
    tables = [_stage("load", load_flow_csv, p, label_column) for p in paths]
    for p, t in zip(paths, tables):
        if t.label_column is None:
            raise StageError("load", InputError(f"{p}: label column {label_column!r} not found"))
    table = _stage("merge", merge_tables, tables)
    deduped = _stage("dedup", drop_duplicates, table)
    sanitized = _stage("sanitize", sanitize_nulls, deduped)
    correlation = _stage("correlation", correlation_matrix, sanitized)
    pruned = _stage("prune", prune_correlated, sanitized, prune_threshold)
    selected = _stage("select", select_features, pruned, features)
    y = _stage("binarize", label_binarize, selected)
    if len(np.unique(y)) < 2:
        log.warning("only one class present after preprocessing")
    pareto = {f: pareto_summary(selected, f, pareto_top_k) for f in selected.report.features_selected}
    names = list(selected.report.features_selected)
    X = selected.frame[names].to_numpy(dtype=np.float64)
    tr_idx, te_idx = _stage("split", stratified_split, y, train_fraction, seed)
    X_tr, X_te, scaler, n_out = minmax_scale(X[tr_idx], X[te_idx])
    report = selected.report
    report.extra.update({
        "rows_after_preprocessing": int(len(y)),
        "train_rows": int(len(tr_idx)),
        "test_rows": int(len(te_idx)),
        "test_out_of_range": n_out,
        "degenerate_features": [names[i] for i in scaler.degenerate],
        "positives": int(y.sum()),
        "seed": seed,
        "train_fraction": train_fraction,
        "prune_threshold": prune_threshold,
    })
    train = Dataset(X_tr, y[tr_idx], names, scaler, report)
    test = Dataset(X_te, y[te_idx], names, scaler, report)
    return PreprocessResult(train, test, scaler, report, correlation, pareto)
