from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError

LAYER_KINDS = ("conv1d", "batchnorm", "dense", "lstm", "attention")


@dataclass
class LayerParams:
    """Weights, non-trainable buffers and scalar hyperparameters of one layer."""

    kind: str
    weights: dict[str, np.ndarray]
    hyper: dict = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        self.weights = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in self.weights.items()}
        self.buffers = {k: np.asarray(v, dtype=np.float64) for k, v in self.buffers.items()}
        self.validate()

    def validate(self):
        w, h = self.weights, self.hyper
        if self.kind == "conv1d":
            if w["weight"].ndim != 3 or w["bias"].shape != (w["weight"].shape[0],):
                raise GeometryError("conv1d weight must be (C_out, C_in, k) with bias (C_out,)")
            if int(h.get("stride", 1)) < 1:
                raise GeometryError("stride must be >= 1")
        elif self.kind == "batchnorm":
            n = w["gamma"].shape
            if w["beta"].shape != n:
                raise GeometryError("gamma and beta must have equal shapes")
            for name in ("running_mean", "running_var"):
                if name in self.buffers and self.buffers[name].shape != n:
                    raise GeometryError(f"{name} must match gamma")
            # zero epsilon is tolerated for analytic checks; the layer default is positive
            if float(h.get("epsilon", 1e-5)) < 0:
                raise ValueError("batchnorm epsilon must be non-negative")
        elif self.kind == "dense":
            if w["weight"].ndim != 2 or w["bias"].shape != (w["weight"].shape[0],):
                raise GeometryError("dense weight must be (m, n) with bias (m,)")
        elif self.kind == "attention":
            f = w["w_q"].shape[0]
            if any(w[k].ndim != 2 or w[k].shape[0] != f for k in ("w_q", "w_k", "w_v")):
                raise GeometryError("attention projections must all be (F, width)")
            if w["w_q"].shape[1] != w["w_k"].shape[1]:
                raise GeometryError("query and key widths differ")
        elif self.kind == "lstm":
            hidden = int(h.get("hidden_size", w["b_i"].shape[0]))
            d = w["w_xi"].shape[1]
            for g in "ifco":
                if w[f"w_x{g}"].shape != (hidden, d) or w[f"w_h{g}"].shape != (hidden, hidden):
                    raise GeometryError(f"lstm gate {g} weights do not match hidden size {hidden}")
                if w[f"b_{g}"].shape != (hidden,):
                    raise GeometryError(f"lstm bias b_{g} must be ({hidden},)")
            for g in "ifo":
                if w[f"w_c{g}"].shape != (hidden, hidden):
                    raise GeometryError(f"peephole w_c{g} must be ({hidden}, {hidden})")

    def copy(self) -> "LayerParams":
        return LayerParams(self.kind, {k: v.copy() for k, v in self.weights.items()},
                           dict(self.hyper), {k: v.copy() for k, v in self.buffers.items()})


def conv1d_params(weight, bias, stride: int = 1, padding="valid") -> LayerParams:
    return LayerParams("conv1d", {"weight": weight, "bias": bias},
                       {"stride": stride, "padding": padding})


def batchnorm_params(gamma, beta, epsilon: float = 1e-5, momentum: float = 0.9,
                     running_mean=None, running_var=None) -> LayerParams:
    gamma = np.asarray(gamma, dtype=np.float64)
    return LayerParams(
        "batchnorm", {"gamma": gamma, "beta": beta},
        {"epsilon": epsilon, "momentum": momentum},
        {"running_mean": np.zeros_like(gamma) if running_mean is None else running_mean,
         "running_var": np.ones_like(gamma) if running_var is None else running_var},
    )


def dense_params(weight, bias, activation: str = "none") -> LayerParams:
    return LayerParams("dense", {"weight": weight, "bias": bias}, {"activation": activation})


def attention_params(w_q, w_k, w_v, d_k: float | None = None) -> LayerParams:
    w_q = np.asarray(w_q, dtype=np.float64)
    return LayerParams("attention", {"w_q": w_q, "w_k": w_k, "w_v": w_v},
                       {"d_k": float(w_q.shape[1] if d_k is None else d_k)})


def lstm_params(input_size: int, hidden_size: int, rng: np.random.Generator | None = None,
                peephole: bool = True, scale: float | None = None) -> LayerParams:
    """Gate weights for a peephole LSTM; random uniform when ``rng`` is given, zero otherwise."""
    weights = {}
    for g in "ifco":
        for src, width in (("x", input_size), ("h", hidden_size)):
            weights[f"w_{src}{g}"] = _init((hidden_size, width), rng, scale)
        weights[f"b_{g}"] = np.zeros(hidden_size)
    for g in "ifo":
        weights[f"w_c{g}"] = _init((hidden_size, hidden_size), rng, scale) if peephole \
            else np.zeros((hidden_size, hidden_size))
    return LayerParams("lstm", weights, {"hidden_size": hidden_size, "peephole": peephole})


def _init(shape, rng, scale):
    if rng is None:
        return np.zeros(shape)
    limit = scale if scale is not None else np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)
