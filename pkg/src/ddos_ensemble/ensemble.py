"""Weight grid search, weighted stacking and the FC(64)+sigmoid meta-classifier."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .base_models import TrainConfig, fit_network
from .errors import EmptyInputError, InputError
from .metrics import CurveSeries, fmt
from .nn.layers import Dense, Sequential

MODEL_ORDER = ("cnn_xgb", "cnn_lstm", "cnn_rf")
COMBINE_MODES = ("stack", "sum", "soft_vote")
ROW_SUM_TOL = 1e-6


@dataclass
class GridSpec:
    step: float = 0.1
    max_index: int = 4

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if self.max_index < 1:
            raise ValueError("grid max_index must be >= 1")

    @classmethod
    def from_max(cls, step: float, grid_max: float) -> "GridSpec":
        """Grid whose largest weight is ``grid_max`` (rounded to a whole number of steps)."""
        return cls(step, int(round(grid_max / step)))

    def weight(self, index: int) -> float:
        # rounding makes 3 * 0.1 the same double as 3 / 10
        return round(index * self.step, 12)

    def tuples(self):
        """Index triples in nested w1, w2, w3 order, skipping (0, 0, 0)."""
        r = range(self.max_index + 1)
        for a in r:
            for b in r:
                for c in r:
                    if a or b or c:
                        yield a, b, c

    @property
    def size(self) -> int:
        return (self.max_index + 1) ** 3 - 1


@dataclass
class EnsembleWeights:
    alpha: float
    beta: float
    gamma: float
    step: float = 0.1
    max_index: int = 4
    accuracy: float = float("nan")

    def __post_init__(self):
        w = self.as_array()
        if (w < 0).any():
            raise ValueError("ensemble weights must be non-negative")
        if not w.any():
            raise ValueError("ensemble weights cannot all be zero")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma], dtype=np.float64)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleWeights":
        return cls(**d)


@dataclass
class GridTrace:
    rows: list[tuple[float, float, float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "beta", "gamma", "accuracy"])
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()


def _check_preds(preds) -> list[np.ndarray]:
    if len(preds) != 3:
        raise InputError(f"expected three prediction matrices, got {len(preds)}")
    mats = [np.asarray(p, dtype=np.float64) for p in preds]
    n = len(mats[0])
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape[1] != 2:
            raise InputError(f"prediction matrix {i} must be N x 2, got {m.shape}")
        if len(m) != n:
            raise InputError("prediction matrices differ in length")
        bad = np.flatnonzero(np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOL)
        if len(bad):
            raise InputError(f"prediction matrix {i} row {bad[0]} does not sum to 1")
    if n == 0:
        raise EmptyInputError("no tuning rows")
    return mats


def weighted_labels(preds, weights) -> np.ndarray:
    """Arg-max of sum_i w_i * preds_i; a tie goes to class 0."""
    score = sum(w * p for w, p in zip(weights, preds))
    return (score[:, 1] > score[:, 0]).astype(np.int64)


def grid_search_weights(preds, ytrue, grid: GridSpec | None = None,
                        trace: GridTrace | None = None) -> EnsembleWeights:
    """Exhaustive search over the weight grid; the first maximal triple wins."""
    grid = grid or GridSpec()
    mats = _check_preds(preds)
    y = np.asarray(ytrue).astype(np.int64).ravel()
    if len(y) != len(mats[0]):
        raise InputError("label count does not match predictions")
    best, best_acc = None, -1.0
    for idx in grid.tuples():
        w = tuple(grid.weight(i) for i in idx)
        acc = float((weighted_labels(mats, w) == y).mean())
        if trace is not None:
            trace.rows.append((*w, acc))
        if acc > best_acc:
            best, best_acc = w, acc
    return EnsembleWeights(*best, step=grid.step, max_index=grid.max_index, accuracy=best_acc)


def weighted_stack(p1, p2, p3, w: EnsembleWeights) -> np.ndarray:
    """[alpha * p1, beta * p2, gamma * p3]; works row-wise on N x 2 inputs too."""
    parts = [np.asarray(p, dtype=np.float64) for p in (p1, p2, p3)]
    return np.concatenate([c * p for c, p in zip(w.as_array(), parts)], axis=-1)


def weighted_sum(p1, p2, p3, w: EnsembleWeights) -> np.ndarray:
    return sum(c * np.asarray(p, dtype=np.float64) for c, p in zip(w.as_array(), (p1, p2, p3)))


def combine(preds, w: EnsembleWeights, mode: str = "stack") -> np.ndarray:
    if mode == "stack":
        return weighted_stack(*preds, w)
    if mode in ("sum", "soft_vote"):
        return weighted_sum(*preds, w)
    raise ValueError(f"unknown combine mode {mode!r}; choose from {COMBINE_MODES}")


def build_meta(n_inputs: int, hidden: int = 64, seed: int = 0) -> Sequential:
    rng = np.random.default_rng(seed)
    return Sequential([Dense(n_inputs, hidden, "relu", rng, name="fc1"),
                       Dense(hidden, 1, "sigmoid", rng, name="out")])


@dataclass
class MetaClassifier:
    network: Sequential
    train_config: TrainConfig
    curve: CurveSeries = field(default_factory=CurveSeries)
    initial_loss: float = float("nan")

    @property
    def n_inputs(self) -> int:
        return int(self.network.layers[0].params.weights["weight"].shape[1])

    def predict(self, stacked) -> np.ndarray:
        z = np.atleast_2d(np.asarray(stacked, dtype=np.float64))
        return self.network.forward(z)[:, 0]


def train_meta(stacked, ytrue, cfg: TrainConfig | None = None, hidden: int = 64) -> MetaClassifier:
    """BCE + Adam on the stacked tuning features."""
    cfg = cfg or TrainConfig()
    Z = np.asarray(stacked, dtype=np.float64)
    y = np.asarray(ytrue)
    if len(Z) == 0:
        raise EmptyInputError("no tuning rows for the meta-classifier")
    if len(np.unique(y)) < 2:
        raise InputError("tuning labels contain a single class; meta-classifier cannot be trained")
    net = build_meta(Z.shape[1], hidden, cfg.seed)
    curve, initial = fit_network(_Flat(net), Z, y, cfg, cfg.seed)
    return MetaClassifier(net, cfg, curve, initial)


class _Flat:
    """Adapts a dense network to fit_network, which feeds (N, 1, F) sequences."""

    def __init__(self, net: Sequential):
        self.net = net

    def forward(self, x, train=False, update_stats=True):
        return self.net.forward(x[:, 0, :], train=train, update_stats=update_stats)

    def backward(self, grad, input_grad=True):
        return self.net.backward(grad, input_grad=input_grad)

    def parameters(self):
        return self.net.parameters()


@dataclass
class EnsembleModel:
    base_models: dict  # kind -> BaseModel, in MODEL_ORDER
    weights: EnsembleWeights
    meta: MetaClassifier | None
    threshold: float = 0.5
    combine_mode: str = "stack"

    def base_probabilities(self, X) -> list[np.ndarray]:
        return [np.atleast_2d(self.base_models[k].predict_proba(X)) for k in MODEL_ORDER]

    def probability(self, X) -> np.ndarray:
        preds = self.base_probabilities(X)
        if self.combine_mode == "soft_vote":
            s = weighted_sum(*preds, self.weights)
            return s[:, 1] / s.sum(axis=1)
        return self.meta.predict(combine(preds, self.weights, self.combine_mode))

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        p = self.probability(X)
        return (p >= self.threshold).astype(np.int64), p


def ensemble_predict(model: EnsembleModel, x) -> dict | tuple[np.ndarray, np.ndarray]:
    """{label, probability} for one flow vector; (labels, probabilities) arrays for a matrix."""
    labels, p = model.predict(x)
    if np.ndim(x) == 1:
        return {"label": int(labels[0]), "probability": float(p[0])}
    return labels, p
