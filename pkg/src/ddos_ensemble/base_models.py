"""The three SA-CNN base classifiers.

* ``cnn_xgb`` / ``cnn_rf``: conv(128,k3) -> BN -> ReLU -> conv(64,k3) -> BN ->
  ReLU -> self-attention. The extractor is first trained end-to-end through a
  temporary dense+sigmoid head; the head is then discarded and the flattened
  attention output feeds a boosted-tree or random-forest classifier.
* ``cnn_lstm``: conv(128,k3) -> LSTM -> ReLU -> conv(64,k3) -> LSTM -> ReLU ->
  self-attention -> global average pool -> dense(1) -> sigmoid, trained
  end-to-end.

A flow vector of F features enters as a single-channel length-F sequence.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GeometryError, InputError
from .metrics import CurveSeries, record_epoch
from .nn import functional as F
from .nn.layers import (LSTM, BatchNorm, Conv1d, Dense, Flatten, GlobalAvgPool, ReLU,
                        SelfAttention, Sequential, SwapAxes)
from .nn.optim import AdamState, adam_step
from .trees import GBTModel, RFModel, predict_gbt, predict_rf, train_gbt, train_rf

log = logging.getLogger(__name__)

KINDS = ("cnn_xgb", "cnn_lstm", "cnn_rf")
PREDICT_CHUNK = 4096


@dataclass
class ExtractorConfig:
    conv1_filters: int = 128
    conv2_filters: int = 64
    kernel_size: int = 3
    padding: str = "same"
    attention_width: int | None = None  # defaults to conv2_filters
    d_k: float | None = None  # defaults to attention_width
    seed: int = 0

    def validate(self):
        if min(self.conv1_filters, self.conv2_filters, self.kernel_size) < 1:
            raise ValueError("filters and kernel size must be positive")


@dataclass
class TrainConfig:
    epochs: int = 64
    batch_size: int = 256
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    tuning_fraction: float = 0.25
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.tuning_fraction < 1.0:
            raise ValueError("tuning_fraction must lie strictly between 0 and 1")


@dataclass
class LSTMConfig:
    hidden_size: int = 64
    peephole: bool = True


def _attention_width(cfg: ExtractorConfig) -> int:
    return cfg.attention_width or cfg.conv2_filters


def build_sa_cnn_extractor(cfg: ExtractorConfig, n_features: int) -> Sequential:
    """conv -> BN -> ReLU -> conv -> BN -> ReLU -> swap to (N, T, C) -> self-attention."""
    cfg.validate()
    if n_features < cfg.kernel_size:
        raise GeometryError(f"{n_features} input features is fewer than kernel size {cfg.kernel_size}")
    rng = np.random.default_rng(cfg.seed)
    width = _attention_width(cfg)
    return Sequential([
        Conv1d(1, cfg.conv1_filters, cfg.kernel_size, rng, padding=cfg.padding, name="conv1"),
        BatchNorm(cfg.conv1_filters, name="bn1"),
        ReLU(name="relu1"),
        Conv1d(cfg.conv1_filters, cfg.conv2_filters, cfg.kernel_size, rng, padding=cfg.padding, name="conv2"),
        BatchNorm(cfg.conv2_filters, name="bn2"),
        ReLU(name="relu2"),
        SwapAxes(name="to_seq"),
        SelfAttention(cfg.conv2_filters, width, rng, d_k=cfg.d_k, name="attn"),
    ])


def extractor_output_length(cfg: ExtractorConfig, n_features: int) -> int:
    pad = F.resolve_padding(cfg.padding, cfg.kernel_size)
    length = F.conv1d_output_length(n_features, cfg.kernel_size, 1, pad)
    return F.conv1d_output_length(length, cfg.kernel_size, 1, pad)


def build_temp_head(cfg: ExtractorConfig, n_features: int, seed: int) -> Sequential:
    rng = np.random.default_rng(seed)
    width = extractor_output_length(cfg, n_features) * _attention_width(cfg)
    return Sequential([Flatten(name="flatten"), Dense(width, 1, "sigmoid", rng, name="head")])


def build_lstm_network(cfg: ExtractorConfig, lstm: LSTMConfig, n_features: int) -> Sequential:
    cfg.validate()
    if n_features < cfg.kernel_size:
        raise GeometryError(f"{n_features} input features is fewer than kernel size {cfg.kernel_size}")
    rng = np.random.default_rng(cfg.seed)
    hidden = lstm.hidden_size
    width = _attention_width(cfg) if cfg.attention_width else hidden
    return Sequential([
        Conv1d(1, cfg.conv1_filters, cfg.kernel_size, rng, padding=cfg.padding, name="conv1"),
        SwapAxes(name="to_seq1"),
        LSTM(cfg.conv1_filters, hidden, rng, lstm.peephole, name="lstm1"),
        ReLU(name="relu1"),
        SwapAxes(name="to_chan"),
        Conv1d(hidden, cfg.conv2_filters, cfg.kernel_size, rng, padding=cfg.padding, name="conv2"),
        SwapAxes(name="to_seq2"),
        LSTM(cfg.conv2_filters, hidden, rng, lstm.peephole, name="lstm2"),
        ReLU(name="relu2"),
        SelfAttention(hidden, width, rng, d_k=cfg.d_k, name="attn"),
        SwapAxes(name="to_pool"),
        GlobalAvgPool(name="pool"),
        Dense(width, 1, "sigmoid", rng, name="head"),
    ])


class Chain:
    """Two graphs run back to back; used for extractor + temporary head."""

    def __init__(self, *graphs: Sequential):
        self.graphs = graphs

    def forward(self, x, train=False, update_stats=True):
        for g in self.graphs:
            x = g.forward(x, train=train, update_stats=update_stats)
        return x

    def backward(self, grad, input_grad=True):
        out = {}
        for pos, g in enumerate(reversed(self.graphs)):
            grads = g.backward(grad, input_grad=input_grad or pos < len(self.graphs) - 1)
            grad = g.input_grad
            out.update({f"{id(g)}:{k}": v for k, v in grads.items()})
        return out

    def parameters(self):
        return {f"{id(g)}:{k}": v for g in self.graphs for k, v in g.parameters().items()}


def as_sequence(X) -> np.ndarray:
    """(N, F) flows -> (N, 1, F) single-channel sequences."""
    X = np.asarray(X, dtype=np.float64)
    return X[:, None, :]


def _forward_chunked(net, X3: np.ndarray) -> np.ndarray:
    parts = [net.forward(X3[i: i + PREDICT_CHUNK], train=False) for i in range(0, len(X3), PREDICT_CHUNK)]
    return np.concatenate(parts, axis=0)


def fit_network(net, X: np.ndarray, y: np.ndarray, cfg: TrainConfig, seed: int,
                val: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[CurveSeries, float]:
    """Minibatch Adam on mean BCE. Returns the per-epoch curve and the pre-training loss.

    The curve's train columns average the minibatch values seen during the
    epoch (training-mode batch norm); val columns are a full inference pass.
    """
    cfg.validate()
    X3, yf = as_sequence(X), np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    state = AdamState(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    params = net.parameters()
    p0 = net.forward(X3, train=True, update_stats=False)[:, 0]
    initial = F.bce_loss(yf, p0)
    curve = CurveSeries()
    n = len(X3)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        loss_sum = correct = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start: start + cfg.batch_size]
            p = net.forward(X3[idx], train=True)
            yb = yf[idx].reshape(p.shape)
            loss_sum += F.bce_loss(yb, p) * len(idx)
            correct += float(((p >= 0.5) == (yb == 1)).sum())
            grads = net.backward(F.bce_grad(yb, p), input_grad=False)
            adam_step(params, grads, state)
        row = {"epoch": epoch, "train_loss": loss_sum / n, "train_acc": correct / n,
               "val_loss": float("nan"), "val_acc": float("nan")}
        if val is not None and len(val[0]):
            pv = _forward_chunked(net, as_sequence(val[0]))[:, 0]
            yv = np.asarray(val[1], dtype=np.float64)
            row["val_loss"] = F.bce_loss(yv, pv)
            row["val_acc"] = float(((pv >= 0.5) == (yv == 1)).mean())
        record_epoch(curve, row)
        log.debug("epoch %d loss %.5f acc %.4f", epoch, row["train_loss"], row["train_acc"])
    first, last = curve.rows[0]["train_loss"], curve.rows[-1]["train_loss"]
    if last > first + 1e-9:
        log.warning("final training loss %.6f exceeds epoch-1 loss %.6f", last, first)
    return curve, initial


@dataclass
class BaseModel:
    kind: str
    network: Sequential
    head: GBTModel | RFModel | None
    n_features: int
    extractor_config: ExtractorConfig
    train_config: TrainConfig
    head_config: dict = field(default_factory=dict)
    curve: CurveSeries = field(default_factory=CurveSeries)
    initial_loss: float = float("nan")

    def features(self, X) -> np.ndarray:
        """Flattened attention output, the tree heads' input."""
        X2 = self._check(X)
        return _forward_chunked(self.network, as_sequence(X2)).reshape(len(X2), -1)

    def _check(self, X) -> np.ndarray:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X2.shape[1] != self.n_features:
            raise GeometryError(f"{self.kind} expects {self.n_features} features, got {X2.shape[1]}")
        return X2

    def predict_proba(self, X) -> np.ndarray:
        X2 = self._check(X)
        if self.kind == "cnn_lstm":
            p = _forward_chunked(self.network, as_sequence(X2))[:, 0]
            out = np.stack([1.0 - p, p], axis=1)
        elif self.kind == "cnn_xgb":
            out = predict_gbt(self.head, self.features(X2))
        else:
            out = predict_rf(self.head, self.features(X2))
        return out[0] if np.ndim(X) == 1 else out

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "extractor": asdict(self.extractor_config),
            "train": asdict(self.train_config),
            "head": self.head_config,
            "initial_train_loss": self.initial_loss,
            "final_train_loss": self.curve.rows[-1]["train_loss"] if self.curve.rows else None,
        }


def predict_proba(model: BaseModel, x) -> np.ndarray:
    """[p_safe, p_ddos] for one flow vector, or (N, 2) for a matrix."""
    return model.predict_proba(x)


def _labels(y) -> np.ndarray:
    if y is None:
        raise InputError("labels required for training")
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise InputError("training labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise InputError("training labels contain a single class; heads cannot be trained")
    return y


@dataclass
class TrainedExtractor:
    """Stage-1 output shared by the tree-headed models."""

    network: Sequential
    config: ExtractorConfig
    train_config: TrainConfig
    curve: CurveSeries
    initial_loss: float


def train_sa_cnn_extractor(X, y, cfg: TrainConfig | None = None, ext: ExtractorConfig | None = None,
                           val=None) -> TrainedExtractor:
    """Stage 1: extractor plus a temporary dense-sigmoid head, trained end-to-end on BCE."""
    X = np.asarray(X, dtype=np.float64)
    y = _labels(y)
    cfg, ext = cfg or TrainConfig(), ext or ExtractorConfig()
    extractor = build_sa_cnn_extractor(ext, X.shape[1])
    head = build_temp_head(ext, X.shape[1], ext.seed + 1)
    curve, initial = fit_network(Chain(extractor, head), X, y, cfg, cfg.seed, val)
    return TrainedExtractor(extractor, ext, cfg, curve, initial)


def _attach_tree_head(kind: str, stage1: TrainedExtractor, X, y, head_hyper: dict) -> BaseModel:
    y = _labels(y)
    X = np.asarray(X, dtype=np.float64)
    model = BaseModel(kind, stage1.network, None, X.shape[1], stage1.config, stage1.train_config,
                      dict(head_hyper), stage1.curve, stage1.initial_loss)
    feats = model.features(X)
    if not np.isfinite(feats).all():
        raise ValueError("extractor produced non-finite features")
    model.head = train_gbt(feats, y, **head_hyper) if kind == "cnn_xgb" else train_rf(feats, y, **head_hyper)
    return model


def train_cnn_xgb(X, y, cfg: TrainConfig | None = None, ext: ExtractorConfig | None = None,
                  gbt: dict | None = None, val=None, extractor: TrainedExtractor | None = None) -> BaseModel:
    """Train the extractor with a temporary sigmoid head, then boost trees on its features.

    Pass ``extractor`` to reuse an already trained stage 1.
    """
    stage1 = extractor or train_sa_cnn_extractor(X, y, cfg, ext, val)
    return _attach_tree_head("cnn_xgb", stage1, X, y, gbt or {})


def train_cnn_rf(X, y, cfg: TrainConfig | None = None, ext: ExtractorConfig | None = None,
                 rf: dict | None = None, val=None, extractor: TrainedExtractor | None = None) -> BaseModel:
    """Same two-stage scheme as :func:`train_cnn_xgb` with a random-forest head."""
    stage1 = extractor or train_sa_cnn_extractor(X, y, cfg, ext, val)
    return _attach_tree_head("cnn_rf", stage1, X, y, rf or {})


def train_cnn_lstm(X, y, cfg: TrainConfig | None = None, ext: ExtractorConfig | None = None,
                   lstm: LSTMConfig | None = None, val=None) -> BaseModel:
    X = np.asarray(X, dtype=np.float64)
    y = _labels(y)
    cfg, ext, lstm = cfg or TrainConfig(), ext or ExtractorConfig(), lstm or LSTMConfig()
    net = build_lstm_network(ext, lstm, X.shape[1])
    curve, initial = fit_network(net, X, y, cfg, cfg.seed, val)
    return BaseModel("cnn_lstm", net, None, X.shape[1], ext, cfg, asdict(lstm), curve, initial)
