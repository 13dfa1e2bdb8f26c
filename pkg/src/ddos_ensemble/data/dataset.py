"""The model-ready Dataset and its on-disk format.

File layout (UTF-8 text)::

    #ddos-dataset {"format_version": 1, "feature_names": [...], "scaler": {...}, "report": {...}}
    split,<feature 1>,...,<feature F>,label
    train,0.25,...,1
    test,0.75,...,0

The first line is ``#ddos-dataset`` followed by a single-line JSON header.
Numbers use Python's shortest round-trip repr, so reading and rewriting a
file reproduces it byte for byte. ``label`` is empty for unlabeled rows.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .preprocess import MinMaxScaler
from .table import PreprocessReport

MAGIC = "#ddos-dataset "
FORMAT_VERSION = 1


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray | None
    feature_names: list[str]
    scaler: MinMaxScaler | None = None
    report: PreprocessReport = field(default_factory=PreprocessReport)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise FormatError(f"X shape {self.X.shape} does not match {len(self.feature_names)} feature names")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if len(self.y) != len(self.X):
                raise FormatError("X and y lengths differ")

    def __len__(self) -> int:
        return len(self.X)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], None if self.y is None else self.y[idx], list(self.feature_names),
                       self.scaler, self.report)

    def aligned(self, names: list[str]) -> "Dataset":
        """Reorder columns to ``names``; raises FormatError listing any difference."""
        if list(names) == self.feature_names:
            return self
        missing = [n for n in names if n not in self.feature_names]
        extra = [n for n in self.feature_names if n not in names]
        if missing or extra:
            raise FormatError(f"feature names differ: missing {missing}, unexpected {extra}")
        order = [self.feature_names.index(n) for n in names]
        return Dataset(self.X[:, order], self.y, list(names), self.scaler, self.report)


def _num(v: float) -> str:
    return repr(float(v))


def write_dataset(path, partitions: dict[str, Dataset], scaler: MinMaxScaler | None = None,
                  report: PreprocessReport | None = None) -> None:
    first = next(iter(partitions.values()))
    names = first.feature_names
    header = {
        "format_version": FORMAT_VERSION,
        "feature_names": names,
        "scaler": scaler.to_dict() if scaler is not None else None,
        "report": (report or first.report).to_dict(),
        "partitions": {k: len(v) for k, v in partitions.items()},
    }
    buf = io.StringIO()
    buf.write(MAGIC + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split", *names, "label"])
    for split, ds in partitions.items():
        ds = ds.aligned(names)
        for i in range(len(ds)):
            label = "" if ds.y is None else str(int(ds.y[i]))
            w.writerow([split, *(_num(v) for v in ds.X[i]), label])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_dataset(path) -> dict[str, Dataset]:
    """Partitions keyed by split name, in file order."""
    text = Path(path).read_text(encoding="utf-8")
    first, _, body = text.partition("\n")
    if not first.startswith(MAGIC):
        raise FormatError(f"{path}: not a dataset file (missing {MAGIC.strip()} header)")
    try:
        header = json.loads(first[len(MAGIC):])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad JSON header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version')}")
    reader = csv.reader(io.StringIO(body))
    cols = next(reader)
    if cols[0] != "split" or cols[-1] != "label":
        raise FormatError(f"{path}: columns must start with 'split' and end with 'label'")
    names = cols[1:-1]
    scaler = MinMaxScaler.from_dict(header["scaler"]) if header.get("scaler") else None
    if scaler is not None and names != header["feature_names"]:
        known = header["feature_names"]
        if sorted(names) != sorted(known):
            raise FormatError(f"column header disagrees with metadata: missing "
                              f"{[n for n in known if n not in names]}, unexpected {[n for n in names if n not in known]}")
        # permuted columns: carry the scaler along with its features
        order = [header["feature_names"].index(n) for n in names]
        scaler = MinMaxScaler(scaler.mins[order], scaler.maxs[order],
                              [order.index(i) for i in scaler.degenerate if i in order])
    report = PreprocessReport.from_dict(header.get("report") or {})
    rows: dict[str, tuple[list, list]] = {}
    for lineno, r in enumerate(reader, start=3):
        if not r:
            continue
        if len(r) != len(cols):
            raise FormatError(f"{path}: line {lineno} has {len(r)} fields, expected {len(cols)}")
        xs, ys = rows.setdefault(r[0], ([], []))
        try:
            xs.append([float(v) for v in r[1:-1]])
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from exc
        ys.append(r[-1].strip())
    out = {}
    for split, (xs, ys) in rows.items():
        labelled = all(v != "" for v in ys)
        y = np.asarray([int(v) for v in ys], dtype=np.int64) if labelled and ys else None
        X = np.asarray(xs, dtype=np.float64).reshape(len(xs), len(names))
        out[split] = Dataset(X, y, list(names), scaler, report)
    return out
