"""Cleaning, pruning, selection, labelling, splitting and scaling stages.

Every stage is a pure function: it returns a new table/array and records
what it did in the table's :class:`PreprocessReport`.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import ConfigError, EmptyInputError, InputError, SelectionError
from .table import RawTable

log = logging.getLogger(__name__)

DEFAULT_FEATURES = (
    "Source Port",
    "Destination Port",
    "Protocol",
    "Total Length of Fwd Packets",
    "Flow IAT Mean",
    "Fwd Packets/s",
    "Packet Length Mean",
)
# row count the reference study reports after preprocessing the full capture
REFERENCE_ROW_COUNT = 1_341_858
DEFAULT_PRUNE_THRESHOLD = 0.95


def drop_duplicates(table: RawTable) -> RawTable:
    """Remove exact full-row duplicates, keeping the first occurrence."""
    dup = table.frame.duplicated(keep="first").to_numpy()
    keep = ~dup
    out = table.replace(table.frame[keep], keep=keep)
    out.report.duplicates_removed += int(dup.sum())
    return out


def sanitize_nulls(table: RawTable) -> RawTable:
    """±Inf -> null, then impute each numeric column's nulls with its median.

    Columns with no non-null value are dropped (with a warning).
    """
    frame = table.frame.copy()
    out_numeric = []
    report_changes = []
    dropped = []
    for col in table.feature_columns():
        values = frame[col].to_numpy(dtype=np.float64, copy=True)
        inf = np.isinf(values)
        values[inf] = np.nan
        null = np.isnan(values)
        if null.all():
            dropped.append(col)
            continue
        if null.any():
            values[null] = np.median(values[~null])
        frame[col] = values
        out_numeric.append(col)
        report_changes.append((col, int(inf.sum()), int(null.sum())))
    frame = frame.drop(columns=dropped)
    numeric = out_numeric + ([table.label_column] if table.label_column in table.numeric_columns else [])
    out = table.replace(frame, numeric_columns=numeric)
    for col, n_inf, n_null in report_changes:
        if n_inf:
            out.report.infinities_replaced[col] = out.report.infinities_replaced.get(col, 0) + n_inf
        if n_null:
            out.report.nulls_imputed[col] = out.report.nulls_imputed.get(col, 0) + n_null
    for col in dropped:
        msg = f"column {col!r} has no non-null values; dropped"
        warnings.warn(msg, stacklevel=2)
        out.report.warnings.append(msg)
        out.report.columns_dropped.append({"column": col, "stage": "sanitize_nulls", "reason": "all null"})
    return out


def pearson_matrix(X: np.ndarray) -> np.ndarray:
    """Pearson r between the columns of X; zero-variance columns get r = 0 off the diagonal."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise EmptyInputError("correlation needs at least two rows")
    centred = X - X.mean(axis=0)
    norms = np.sqrt((centred ** 2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    z = centred / safe
    r = z.T @ z
    zero = norms == 0
    r[zero, :] = 0.0
    r[:, zero] = 0.0
    np.fill_diagonal(r, 1.0)
    return np.clip(r, -1.0, 1.0)


def correlation_matrix(table: RawTable) -> tuple[list[str], np.ndarray]:
    """Names and F x F Pearson matrix of the table's numeric feature columns."""
    names = table.feature_columns()
    X = table.frame[names].to_numpy(dtype=np.float64)
    if len(X) < 2:
        raise EmptyInputError("correlation needs at least two rows")
    return names, pearson_matrix(X)


def prune_correlated(table: RawTable, threshold: float = DEFAULT_PRUNE_THRESHOLD) -> RawTable:
    """Greedy scan in column order: of any kept pair with |r| >= threshold, drop the later column.

    A threshold above 1 disables pruning.
    """
    if threshold <= 0:
        raise ConfigError("prune threshold must be positive")
    names, r = correlation_matrix(table)
    dropped: list[dict] = []
    gone = set()
    for i, a in enumerate(names):
        if a in gone:
            continue
        for j in range(i + 1, len(names)):
            b = names[j]
            if b in gone:
                continue
            if abs(r[i, j]) >= threshold:
                gone.add(b)
                dropped.append({"column": b, "stage": "prune_correlated", "reason": "correlated",
                                "partner": a, "r": float(r[i, j])})
    frame = table.frame.drop(columns=[d["column"] for d in dropped])
    out = table.replace(frame)
    out.report.columns_dropped.extend(dropped)
    return out


def select_features(table: RawTable, names) -> RawTable:
    """Project onto ``names`` (in that order) plus the label column."""
    names = list(names)
    if not names:
        raise ConfigError("feature list is empty")
    for n in names:
        if n not in table.frame.columns:
            why = table.report.dropped(n)
            where = f" (dropped by {why['stage']}: {why['reason']})" if why else " (not in input)"
            raise SelectionError(f"feature {n!r} is unavailable{where}")
        if n not in table.numeric_columns:
            raise SelectionError(f"feature {n!r} is not numeric")
    keep = names + ([table.label_column] if table.label_column and table.label_column not in names else [])
    out = table.replace(table.frame[keep].copy())
    out.report.features_selected = names
    return out


def label_binarize(table: RawTable) -> np.ndarray:
    """BENIGN (case-insensitive, trimmed) -> 0, any other non-empty label -> 1."""
    if table.label_column is None or table.label_column not in table.frame.columns:
        raise InputError("label column missing")
    labels = table.frame[table.label_column]
    out = np.empty(len(labels), dtype=np.int64)
    for i, v in enumerate(labels.tolist()):
        s = "" if v is None or (isinstance(v, float) and np.isnan(v)) else str(v).strip()
        if not s:
            raise InputError(f"empty label in row {i} (source row {int(table.row[i])})")
        out[i] = 0 if s.upper() == "BENIGN" else 1
    return out


@dataclass
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray
    degenerate: list[int] = field(default_factory=list)

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        X = np.asarray(X, dtype=np.float64)
        mins, maxs = X.min(axis=0), X.max(axis=0)
        return cls(mins, maxs, [int(i) for i in np.flatnonzero(maxs == mins)])

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        span = self.maxs - self.mins
        scaled = (X - self.mins) / np.where(span > 0, span, 1.0)
        scaled[:, span == 0] = 0.0
        return scaled

    def to_dict(self) -> dict:
        return {"min": self.mins.tolist(), "max": self.maxs.tolist(), "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64),
                   list(d.get("degenerate", [])))


def out_of_range_count(X: np.ndarray) -> int:
    return int(((X < 0.0) | (X > 1.0)).sum())


def minmax_scale(train, apply_to=None):
    """Fit (x - min)/(max - min) on ``train`` and apply it to both matrices.

    Returns ``(train_scaled, applied_scaled, scaler, out_of_range)``; values
    of ``apply_to`` outside the training range are left unclamped and counted.
    """
    scaler = MinMaxScaler.fit(train)
    tr = scaler.transform(train)
    if apply_to is None:
        return tr, None, scaler, 0
    ap = scaler.transform(apply_to)
    return tr, ap, scaler, out_of_range_count(ap)


def stratified_split(y: np.ndarray, train_fraction: float = 0.8, seed: int = 0):
    """Per-class seeded shuffle; the first round(fraction * n_class) rows go to train.

    Returns sorted (train_idx, test_idx).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train fraction must lie strictly between 0 and 1")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            msg = f"class {cls} has {len(idx)} row(s); cannot stratify, assigned to train"
            warnings.warn(msg, stacklevel=2)
            train.append(idx)
            continue
        perm = rng.permutation(idx)
        k = int(round(train_fraction * len(idx)))
        train.append(perm[:k])
        test.append(perm[k:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    return cat(train), cat(test)


def pareto_summary(table: RawTable, feature: str, top_k: int | None = None) -> list[tuple]:
    """(value, count, percent, cumulative percent) rows by descending count.

    Equal counts are ordered by value so the output is deterministic.
    """
    if feature not in table.frame.columns:
        raise SelectionError(f"feature {feature!r} not in table")
    counts = table.frame[feature].value_counts(dropna=False)
    total = int(counts.sum())
    items = sorted(counts.items(), key=lambda kv: (-kv[1], _sort_key(kv[0])))
    if top_k is not None:
        items = items[:top_k]
    rows = []
    cum = 0
    for value, count in items:
        cum += int(count)
        rows.append((value, int(count), 100.0 * count / total, 100.0 * cum / total))
    return rows


def _sort_key(v):
    if isinstance(v, (int, float, np.floating, np.integer)) and not pd.isna(v):
        return (0, float(v), "")
    return (1, 0.0, str(v))
