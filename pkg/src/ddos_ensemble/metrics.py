"""Confusion counts, accuracy/precision/recall/F1, training curves and report files.

Class 1 (DDoS) is the positive class. All emitted numbers use fixed
six-decimal formatting so reruns produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, InputError

CURVE_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def fmt(v: float) -> str:
    return f"{v:.6f}"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_array(self) -> np.ndarray:
        """Rows = actual (safe, ddos), columns = predicted (safe, ddos)."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]], dtype=np.int64)

    def normalized(self) -> np.ndarray:
        """Row-normalised form; a row with no true samples stays all zero."""
        m = self.as_array().astype(np.float64)
        sums = m.sum(axis=1, keepdims=True)
        return np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion(ytrue, ypred) -> ConfusionMatrix:
    yt = np.asarray(ytrue).ravel()
    yp = np.asarray(ypred).ravel()
    if len(yt) != len(yp):
        raise InputError(f"length mismatch: {len(yt)} labels vs {len(yp)} predictions")
    if len(yt) == 0:
        raise EmptyInputError("no samples to evaluate")
    for name, arr in (("labels", yt), ("predictions", yp)):
        if not np.isin(arr, (0, 1)).all():
            raise InputError(f"{name} must be 0/1")
    yt, yp = yt.astype(bool), yp.astype(bool)
    return ConfusionMatrix(int((yt & yp).sum()), int((~yt & ~yp).sum()),
                           int((~yt & yp).sum()), int((yt & ~yp).sum()))


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    model: str = ""
    split: str = ""
    degenerate: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "split": self.split,
            "accuracy": fmt(self.accuracy),
            "precision": fmt(self.precision),
            "recall": fmt(self.recall),
            "f1": fmt(self.f1),
            "confusion": self.confusion.to_dict(),
            "degenerate": self.degenerate,
        }


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def compute_metrics(cm: ConfusionMatrix, model: str = "", split: str = "") -> MetricsReport:
    """Accuracy, precision, recall and the harmonic-mean F1 = 2TP / (2TP + FP + FN).

    A zero denominator gives 0 and adds the metric name to ``degenerate``.
    """
    if cm.total == 0:
        raise EmptyInputError("confusion matrix is empty")
    flags: list[str] = []
    acc = (cm.tp + cm.tn) / cm.total
    prec = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    rec = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    f1 = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1", flags)
    return MetricsReport(acc, prec, rec, f1, cm, model, split, flags)


def evaluate(ytrue, ypred, model: str = "", split: str = "") -> MetricsReport:
    return compute_metrics(confusion(ytrue, ypred), model, split)


@dataclass
class CurveSeries:
    rows: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float]:
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in self.rows:
            w.writerow([r["epoch"]] + [fmt(r[c]) for c in CURVE_COLUMNS[1:]])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "CurveSeries":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
                raise InputError(f"{path}: unexpected curve columns {reader.fieldnames}")
            series = cls()
            for r in reader:
                record_epoch(series, {"epoch": int(r["epoch"]),
                                      **{c: float(r[c]) for c in CURVE_COLUMNS[1:]}})
        return series

    def to_dict(self) -> list[dict]:
        return [dict(r) for r in self.rows]


def record_epoch(curve: CurveSeries, metrics: dict) -> CurveSeries:
    expected = len(curve.rows) + 1
    if int(metrics["epoch"]) != expected:
        raise InputError(f"epoch {metrics['epoch']} out of sequence; expected {expected}")
    curve.rows.append({c: (int(metrics[c]) if c == "epoch" else float(metrics[c])) for c in CURVE_COLUMNS})
    return curve


# published full-scale CIC-DDoS2019 figures (acc, prec, rec, f1), shown for comparison only
REFERENCE_ROWS = {
    "cnn_xgb": (0.958, 0.955, 0.953, 0.954),
    "cnn_lstm": (0.971, 0.973, 0.971, 0.972),
    "cnn_rf": (0.940, 0.942, 0.939, 0.940),
    "ensemble": (0.9869, 0.9871, 0.9863, 0.9866),
}
MODEL_LABELS = {
    "cnn_xgb": "SA-Enabled CNN with XGBoost",
    "cnn_lstm": "SA-Enabled CNN with LSTM",
    "cnn_rf": "SA-Enabled CNN with Random Forest",
    "ensemble": "SA-Enabled Ensemble Classifier",
}


def compare_table(reports: list[MetricsReport]) -> str:
    """Fixed-width table, one row per report in the given order, metrics at 4 decimals."""
    width = max([len("MODEL")] + [len(MODEL_LABELS.get(r.model, r.model)) for r in reports])
    head = f"{'MODEL':<{width}}  ACCURACY  PRECISION  RECALL  F1-SCORE"
    lines = [head]
    for r in reports:
        name = MODEL_LABELS.get(r.model, r.model)
        lines.append(f"{name:<{width}}  {r.accuracy:8.4f}  {r.precision:9.4f}  {r.recall:6.4f}  {r.f1:8.4f}")
    return "\n".join(lines) + "\n"


def confusion_csv(reports: list[MetricsReport]) -> str:
    """Raw and row-normalised counts per model; rows are actual classes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "form", "actual", "pred_safe", "pred_ddos"])
    for r in reports:
        raw = r.confusion.as_array()
        norm = r.confusion.normalized()
        for i, actual in enumerate(("safe", "ddos")):
            w.writerow([r.model, "raw", actual, int(raw[i, 0]), int(raw[i, 1])])
        for i, actual in enumerate(("safe", "ddos")):
            w.writerow([r.model, "normalized", actual, fmt(norm[i, 0]), fmt(norm[i, 1])])
    return buf.getvalue()


def metrics_json(reports: list[MetricsReport]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=2, sort_keys=True) + "\n"


def correlation_csv(names: list[str], r: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", *names])
    for name, row in zip(names, r):
        w.writerow([name, *(fmt(v) for v in row)])
    return buf.getvalue()


def pareto_csv(pareto: dict[str, list[tuple]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "rank", "value", "count", "percent", "cumulative_percent"])
    for feature, rows in pareto.items():
        for rank, (value, count, pct, cum) in enumerate(rows, start=1):
            v = repr(float(value)) if isinstance(value, (float, int, np.floating, np.integer)) else str(value)
            w.writerow([feature, rank, v, count, fmt(pct), fmt(cum)])
    return buf.getvalue()
