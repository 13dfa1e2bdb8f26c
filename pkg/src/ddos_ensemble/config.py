"""Run configuration: built-in defaults < JSON config file < command-line flags.

Every section is a dataclass; unknown keys anywhere raise ConfigError.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data.preprocess import DEFAULT_PRUNE_THRESHOLD, DEFAULT_FEATURES
from .errors import ConfigError
from .trees import GBT_DEFAULTS, RF_DEFAULTS


@dataclass
class PathsSection:
    inputs: list[str] = field(default_factory=list)
    dataset: str | None = None
    model: str | None = None
    out_dir: str | None = None


@dataclass
class PreprocessSection:
    label_column: str = "Label"
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    train_fraction: float = 0.8
    pareto_top_k: int = 20


@dataclass
class ExtractorSection:
    conv1_filters: int = 128
    conv2_filters: int = 64
    kernel_size: int = 3
    padding: str = "same"
    attention_width: int | None = None
    d_k: float | None = None


@dataclass
class TrainSection:
    epochs: int = 64
    batch_size: int = 256
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    tuning_fraction: float = 0.25
    # the tree-headed models have identical stage-1 networks; train it once
    share_extractor: bool = True


@dataclass
class LSTMSection:
    hidden_size: int = 64
    peephole: bool = True


@dataclass
class GBTSection:
    n_trees: int = GBT_DEFAULTS["n_trees"]
    max_depth: int = GBT_DEFAULTS["max_depth"]
    learning_rate: float = GBT_DEFAULTS["learning_rate"]
    reg_lambda: float = GBT_DEFAULTS["lambda"]
    min_child_weight: float = GBT_DEFAULTS["min_child_weight"]

    def hyper(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate, "lambda": self.reg_lambda,
                "min_child_weight": self.min_child_weight}


@dataclass
class RFSection:
    n_trees: int = RF_DEFAULTS["n_trees"]
    max_depth: int | None = RF_DEFAULTS["max_depth"]
    min_leaf: int = RF_DEFAULTS["min_leaf"]
    feature_subsample: str | float | int = RF_DEFAULTS["feature_subsample"]
    bootstrap: bool = RF_DEFAULTS["bootstrap"]


@dataclass
class GridSection:
    step: float = 0.1
    max: float = 0.4


@dataclass
class MetaSection:
    hidden: int = 64
    epochs: int | None = None  # None: same as train.epochs
    batch_size: int | None = None


@dataclass
class EnsembleSection:
    threshold: float = 0.5
    combine: str = "stack"


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    features: list[str] = field(default_factory=lambda: list(DEFAULT_FEATURES))
    paths: PathsSection = field(default_factory=PathsSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    extractor: ExtractorSection = field(default_factory=ExtractorSection)
    train: TrainSection = field(default_factory=TrainSection)
    lstm: LSTMSection = field(default_factory=LSTMSection)
    gbt: GBTSection = field(default_factory=GBTSection)
    rf: RFSection = field(default_factory=RFSection)
    grid: GridSection = field(default_factory=GridSection)
    meta: MetaSection = field(default_factory=MetaSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def model_dict(self) -> dict:
        """Everything that influences the trained model (paths and thread count excluded)."""
        d = self.to_dict()
        d.pop("paths")
        d.pop("threads")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.model_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def validate(self) -> "RunConfig":
        t = self.train
        if t.epochs < 1 or t.batch_size < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if not 0.0 < t.tuning_fraction < 1.0:
            raise ConfigError("train.tuning_fraction must lie strictly between 0 and 1")
        if not 0.0 < self.preprocess.train_fraction < 1.0:
            raise ConfigError("preprocess.train_fraction must lie strictly between 0 and 1")
        if self.preprocess.prune_threshold <= 0:
            raise ConfigError("preprocess.prune_threshold must be positive")
        if self.grid.step <= 0 or self.grid.max < self.grid.step:
            raise ConfigError("grid.step must be positive and grid.max >= grid.step")
        if self.ensemble.combine not in ("stack", "sum", "soft_vote"):
            raise ConfigError(f"ensemble.combine must be stack, sum or soft_vote, got {self.ensemble.combine!r}")
        if not 0.0 <= self.ensemble.threshold <= 1.0:
            raise ConfigError("ensemble.threshold must lie in [0, 1]")
        if not self.features:
            raise ConfigError("features must not be empty")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        e = self.extractor
        if min(e.conv1_filters, e.conv2_filters, e.kernel_size) < 1:
            raise ConfigError("extractor filters and kernel size must be positive")
        return self


def _apply(obj, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"unknown config key {where!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _apply(current, value, where)
        else:
            setattr(obj, key, value)


def from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    _apply(cfg, data, "")
    return cfg.validate()


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then dotted-key ``overrides``."""
    cfg = RunConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        _apply(cfg, data, "")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        nested: dict = {leaf: value}
        for p in reversed(parents):
            nested = {p: nested}
        _apply(cfg, nested, "")
    return cfg.validate()
