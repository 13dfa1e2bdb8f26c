"""Desk-scale synthetic flow data: two Gaussian classes along a random direction."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset
from .preprocess import DEFAULT_FEATURES
from .table import PreprocessReport

BENIGN, ATTACK = "BENIGN", "DrDoS_SYNTH"


@dataclass
class SynthSpec:
    n_rows: int = 10_000
    n_features: int = 7
    class_balance: float = 0.5
    separation: float = 4.0
    noise: float = 1.0
    seed: int = 42

    def validate(self):
        if self.n_rows < 2:
            raise ConfigError("n_rows must be >= 2")
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if not 0.0 < self.class_balance < 1.0:
            raise ConfigError("class_balance must lie strictly between 0 and 1")
        if self.separation < 0:
            raise ConfigError("separation must be >= 0")
        if self.noise <= 0:
            raise ConfigError("noise must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        aliases = {"delta": "separation", "sigma": "noise", "rows": "n_rows"}
        d = {aliases.get(k, k): v for k, v in d.items()}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth spec keys: {sorted(unknown)}")
        spec = cls(**d)
        spec.validate()
        return spec


def feature_names_for(n_features: int) -> list[str]:
    if n_features == len(DEFAULT_FEATURES):
        return list(DEFAULT_FEATURES)
    return [f"feature_{i}" for i in range(n_features)]


def bayes_error(separation: float, noise: float) -> float:
    """Misclassification rate of the optimal rule for equal-prior isotropic classes."""
    return 0.5 * math.erfc(separation / (2.0 * noise) / math.sqrt(2.0))


def synth_generate(spec: SynthSpec) -> Dataset:
    """Class means sit at ±separation/2 along a random unit vector; each feature adds N(0, noise²)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    u = rng.normal(size=spec.n_features)
    u /= np.linalg.norm(u)
    n_pos = int(round(spec.class_balance * spec.n_rows))
    y = np.zeros(spec.n_rows, dtype=np.int64)
    y[:n_pos] = 1
    y = rng.permutation(y)
    centre = (y[:, None] - 0.5) * spec.separation * u
    X = centre + spec.noise * rng.normal(size=(spec.n_rows, spec.n_features))
    report = PreprocessReport(rows_in=spec.n_rows)
    report.extra = {"synth_spec": asdict(spec), "bayes_error": bayes_error(spec.separation, spec.noise),
                    "positives": int(n_pos)}
    if spec.separation == 0:
        report.warnings.append("separation is 0: classes are indistinguishable (non-separable data)")
    return Dataset(X, y, feature_names_for(spec.n_features), None, report)


def write_flow_csv(ds: Dataset, path) -> None:
    """Write rows as a flow CSV (features + ``Label``) suitable for preprocessing."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, "Label"])
        for x, label in zip(ds.X, ds.y):
            w.writerow([*(repr(float(v)) for v in x), ATTACK if label else BENIGN])
