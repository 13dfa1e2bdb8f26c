"""Raw flow tables: CSV ingestion and merging."""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..errors import FormatError, SchemaError

NULL_TOKENS = {"", "nan", "NaN", "NAN", "null", "NULL", "None"}
# a column is numeric when more than this share of its non-empty cells parse
NUMERIC_SHARE = 0.5


@dataclass
class PreprocessReport:
    rows_in: int = 0
    duplicates_removed: int = 0
    unparseable_cells: dict[str, int] = field(default_factory=dict)
    infinities_replaced: dict[str, int] = field(default_factory=dict)
    nulls_imputed: dict[str, int] = field(default_factory=dict)
    columns_dropped: list[dict] = field(default_factory=list)
    features_selected: list[str] = field(default_factory=list)
    source_files: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def rows_out(self) -> int:
        return self.rows_in - self.duplicates_removed

    def dropped(self, column: str) -> dict | None:
        for entry in self.columns_dropped:
            if entry["column"] == column:
                return entry
        return None

    def to_dict(self) -> dict:
        return {
            "rows_in": self.rows_in,
            "duplicates_removed": self.duplicates_removed,
            "rows_out": self.rows_out,
            "unparseable_cells": self.unparseable_cells,
            "infinities_replaced": self.infinities_replaced,
            "nulls_imputed": self.nulls_imputed,
            "columns_dropped": self.columns_dropped,
            "features_selected": self.features_selected,
            "source_files": self.source_files,
            "warnings": self.warnings,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessReport":
        d = {k: v for k, v in d.items() if k != "rows_out"}
        return cls(**d)


@dataclass
class FlowRecord:
    values: dict
    source: str
    row: int


@dataclass
class RawTable:
    """Column-aligned flow rows plus per-row provenance.

    ``frame`` holds the cell values (numeric columns as float64 with NaN for
    null); ``source``/``row`` give the originating file index and data-row
    number for each record.
    """

    frame: pd.DataFrame
    label_column: str | None
    numeric_columns: list[str]
    source: np.ndarray
    row: np.ndarray
    report: PreprocessReport = field(default_factory=PreprocessReport)

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def __len__(self) -> int:
        return len(self.frame)

    def record(self, i: int) -> FlowRecord:
        values = self.frame.iloc[i].to_dict()
        src = self.report.source_files[self.source[i]] if self.report.source_files else str(self.source[i])
        return FlowRecord(values, src, int(self.row[i]))

    def feature_columns(self) -> list[str]:
        return [c for c in self.numeric_columns if c != self.label_column]

    def replace(self, frame: pd.DataFrame, keep: np.ndarray | None = None, **changes) -> "RawTable":
        """New table sharing nothing mutable with this one."""
        report = changes.pop("report", copy.deepcopy(self.report))
        numeric = [c for c in changes.pop("numeric_columns", self.numeric_columns) if c in frame.columns]
        source = self.source if keep is None else self.source[keep]
        row = self.row if keep is None else self.row[keep]
        label = changes.pop("label_column", self.label_column)
        return RawTable(frame.reset_index(drop=True), label, numeric, source.copy(), row.copy(), report)


def _is_null_token(s: pd.Series) -> pd.Series:
    return s.str.strip().isin(NULL_TOKENS)


def _to_float(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return np.nan


def _parse_numeric(s: pd.Series) -> pd.Series:
    """Correctly rounded str -> float64 (pd.to_numeric can be off by an ulp); junk becomes NaN."""
    values = s.to_numpy(dtype=object)
    try:
        out = values.astype(np.float64)
    except (TypeError, ValueError):
        out = np.fromiter((_to_float(v) for v in values), dtype=np.float64, count=len(values))
    return pd.Series(out, index=s.index)


def load_flow_csv(path, label_column: str = "Label") -> RawTable:
    """Read a flow CSV with a header row.

    Header names are whitespace-trimmed. Columns whose non-empty cells mostly
    parse as numbers become float64; the remaining unparseable cells turn
    into nulls and are counted per column. ``Infinity`` tokens stay as
    +/-inf until :func:`sanitize_nulls`.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if any(h == "" for h in header):
            raise FormatError(f"{path}: header has an empty column name")
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise FormatError(f"{path}: duplicate header names {dupes}")
        rows = []
        for i, r in enumerate(reader):
            if not r:
                continue
            if len(r) != len(header):
                raise FormatError(
                    f"{path}: data row {i} (line {reader.line_num}) has {len(r)} fields, expected {len(header)}"
                )
            rows.append(r)
    raw = pd.DataFrame(rows, columns=header, dtype=object) if rows else pd.DataFrame(columns=header, dtype=object)
    report = PreprocessReport(rows_in=len(raw), source_files=[str(path)])
    numeric = []
    frame = {}
    for col in header:
        s = raw[col].astype(str)
        if col == label_column:
            frame[col] = s.str.strip()
            continue
        nulls = _is_null_token(s)
        parsed = _parse_numeric(s.str.strip().where(~nulls))
        bad = parsed.isna() & ~nulls
        non_empty = int((~nulls).sum())
        if non_empty and (non_empty - int(bad.sum())) / non_empty > NUMERIC_SHARE:
            frame[col] = parsed.astype(np.float64)
            numeric.append(col)
            if bad.any():
                report.unparseable_cells[col] = int(bad.sum())
        elif non_empty == 0 and len(s):
            frame[col] = parsed.astype(np.float64)
            numeric.append(col)
        else:
            frame[col] = s
    df = pd.DataFrame(frame, columns=header)
    n = len(df)
    return RawTable(df, label_column if label_column in header else None, numeric,
                    np.zeros(n, dtype=np.int64), np.arange(n, dtype=np.int64), report)


def merge_tables(tables: list[RawTable]) -> RawTable:
    """Concatenate rows in input order, aligning columns by name to the first table."""
    if not tables:
        raise SchemaError("nothing to merge")
    first = tables[0]
    cols = first.columns
    for t in tables[1:]:
        a, b = set(cols), set(t.columns)
        if a != b:
            raise SchemaError(
                f"column sets differ: missing {sorted(a - b)}, unexpected {sorted(b - a)}"
            )
    numeric = [c for c in cols if all(c in t.numeric_columns for t in tables)]
    frames = []
    for t in tables:
        f = t.frame[cols].copy()
        for c in cols:
            if c in numeric:
                f[c] = f[c].astype(np.float64)
            elif c in t.numeric_columns:
                # numeric here, text elsewhere: keep the text reading
                f[c] = f[c].map(lambda v: "" if pd.isna(v) else repr(float(v)))
        frames.append(f)
    report = PreprocessReport()
    offsets = []
    for t in tables:
        offsets.append(len(report.source_files))
        r = t.report
        report.rows_in += r.rows_in
        report.source_files.extend(r.source_files or [f"table{len(report.source_files)}"])
        for name in ("unparseable_cells", "infinities_replaced", "nulls_imputed"):
            target = getattr(report, name)
            for k, v in getattr(r, name).items():
                target[k] = target.get(k, 0) + v
        report.warnings.extend(r.warnings)
    source = np.concatenate([t.source + off for t, off in zip(tables, offsets)])
    row = np.concatenate([t.row for t in tables])
    frame = pd.concat(frames, ignore_index=True)
    label = first.label_column
    return RawTable(frame, label, numeric, source, row, report)
