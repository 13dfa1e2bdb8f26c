"""Layers with cached forward activations and hand-written backward passes.

A :class:`Sequential` is the computation graph: it remembers the order in
which layers ran so that ``backward`` walks them in exact reverse.
"""
from __future__ import annotations

import numpy as np

from ..errors import GeometryError, StateError
from . import functional as F
from .params import (LayerParams, attention_params, batchnorm_params, conv1d_params,
                     dense_params, lstm_params)


class Layer:
    name = "layer"
    params: LayerParams | None = None
    # weights that receive gradients; everything else in params.weights is frozen
    trainable: tuple[str, ...] = ()

    def __init__(self):
        self._cache = None
        self.grads: dict[str, np.ndarray] = {}
        # cleared by Sequential for a leading layer whose input gradient nobody reads
        self.input_grad_needed = True

    def forward(self, x: np.ndarray, train: bool = False, update_stats: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _require_cache(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        return self._cache

    def zero_grads(self):
        if self.params is not None:
            self.grads = {k: np.zeros_like(self.params.weights[k]) for k in self.trainable}

    def clear(self):
        self._cache = None


class Conv1d(Layer):
    """1-D convolution over (N, C_in, L) with weight (C_out, C_in, k)."""

    trainable = ("weight", "bias")

    def __init__(self, in_channels: int = 0, out_channels: int = 0, kernel_size: int = 1,
                 rng: np.random.Generator | None = None, stride: int = 1, padding="same",
                 name: str = "conv", params: LayerParams | None = None):
        super().__init__()
        self.name = name
        if params is None:
            fan_in = in_channels * kernel_size
            w = (rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, kernel_size))
                 if rng is not None else np.zeros((out_channels, in_channels, kernel_size)))
            params = conv1d_params(w, np.zeros(out_channels), stride, padding)
        self.params = params

    def forward(self, x, train=False, update_stats=True):
        w = self.params.weights["weight"]
        stride = int(self.params.hyper.get("stride", 1))
        pad = F.resolve_padding(self.params.hyper.get("padding", "valid"), w.shape[2])
        out, cols = F.conv1d(x, w, self.params.weights["bias"], stride, pad)
        self._cache = (x.shape, cols, stride, pad)
        return out

    def backward(self, grad):
        x_shape, cols, stride, pad = self._require_cache()
        w = self.params.weights["weight"]
        c_out, c_in, k = w.shape
        g = np.ascontiguousarray(grad.transpose(0, 2, 1))  # (N, L_out, C_out)
        g2 = g.reshape(-1, c_out)
        self.grads = {
            "weight": (g2.T @ cols.reshape(-1, c_in * k)).reshape(w.shape),
            "bias": g2.sum(axis=0),
        }
        if not self.input_grad_needed:
            return None
        dcols = (g2 @ w.reshape(c_out, c_in * k)).reshape(g.shape[0], g.shape[1], c_in, k)
        n, _, length = x_shape
        dxp = np.zeros((n, c_in, length + pad[0] + pad[1]))
        l_out = g.shape[1]
        for j in range(k):
            dxp[:, :, j: j + stride * (l_out - 1) + 1: stride] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dxp[:, :, pad[0]: pad[0] + length]


class BatchNorm(Layer):
    """Per-channel normalisation; channels live on axis 1."""

    trainable = ("gamma", "beta")

    def __init__(self, num_features: int = 0, epsilon: float = 1e-5, momentum: float = 0.9,
                 name: str = "bn", params: LayerParams | None = None):
        super().__init__()
        self.name = name
        if params is None:
            if epsilon <= 0:
                raise ValueError("batchnorm epsilon must be positive")
            params = batchnorm_params(np.ones(num_features), np.zeros(num_features), epsilon, momentum)
        self.params = params

    def forward(self, x, train=False, update_stats=True):
        p = self.params
        eps = float(p.hyper.get("epsilon", 1e-5))
        if x.shape[0] == 0:
            raise F.EmptyInputError("batchnorm received an empty batch")
        if x.shape[1] != p.weights["gamma"].shape[0]:
            raise GeometryError(f"{self.name}: expected {p.weights['gamma'].shape[0]} channels")
        if train:
            mean, var = F.batchnorm_stats(x)
            if update_stats:
                m = float(p.hyper.get("momentum", 0.9))
                p.buffers["running_mean"] = m * p.buffers["running_mean"] + (1 - m) * mean
                p.buffers["running_var"] = m * p.buffers["running_var"] + (1 - m) * var
        else:
            mean, var = p.buffers["running_mean"], p.buffers["running_var"]
        x_hat, inv = F.normalize(x, mean, var, eps)
        shape = F._bn_shape(x)
        self._cache = (x_hat, inv, train)
        return p.weights["gamma"].reshape(shape) * x_hat + p.weights["beta"].reshape(shape)

    def backward(self, grad):
        x_hat, inv, train = self._require_cache()
        shape = F._bn_shape(grad)
        gamma = self.params.weights["gamma"]
        as3 = lambda a: a.reshape(a.shape[0], a.shape[1], -1)
        g_gamma = np.einsum("ncl,ncl->c", as3(grad), as3(x_hat))
        g_beta = F.channel_sum(grad)
        self.grads = {"gamma": g_gamma, "beta": g_beta}
        if not self.input_grad_needed:
            return None
        if not train:
            return grad * (gamma * inv).reshape(shape)
        # dx_hat = gamma * grad, so its channel sums follow from the parameter grads
        m = grad.size / grad.shape[1]
        scale = (gamma * inv / m).reshape(shape)
        return scale * (m * grad - g_beta.reshape(shape) - x_hat * g_gamma.reshape(shape))


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        super().__init__()
        self.name = name

    def forward(self, x, train=False, update_stats=True):
        out = np.maximum(x, 0.0)
        self._cache = out
        return out

    def backward(self, grad):
        return np.where(self._require_cache() > 0, grad, 0.0)


class SwapAxes(Layer):
    """(N, A, B) <-> (N, B, A); moves between channel-first and sequence-first layouts."""

    def __init__(self, name: str = "swap"):
        super().__init__()
        self.name = name

    def forward(self, x, train=False, update_stats=True):
        self._cache = True
        return np.ascontiguousarray(np.swapaxes(x, 1, 2))

    def backward(self, grad):
        self._require_cache()
        return np.ascontiguousarray(np.swapaxes(grad, 1, 2))


class SelfAttention(Layer):
    """Scaled dot-product self-attention over (N, T, F) sequences."""

    trainable = ("w_q", "w_k", "w_v")

    def __init__(self, in_features: int = 0, width: int | None = None,
                 rng: np.random.Generator | None = None, d_k: float | None = None,
                 name: str = "attn", params: LayerParams | None = None):
        super().__init__()
        self.name = name
        if params is None:
            width = in_features if width is None else width
            limit = np.sqrt(6.0 / (in_features + width))
            mats = [rng.uniform(-limit, limit, (in_features, width)) if rng is not None
                    else np.zeros((in_features, width)) for _ in range(3)]
            params = attention_params(*mats, d_k=d_k)
        self.params = params

    def forward(self, x, train=False, update_stats=True):
        w = self.params.weights
        d_k = float(self.params.hyper.get("d_k", w["w_q"].shape[1]))
        out, a, q, k, v = F.attention(x, w["w_q"], w["w_k"], w["w_v"], d_k)
        self._cache = (x, a, q, k, v, d_k)
        return out

    def backward(self, grad):
        x, a, q, k, v, d_k = self._require_cache()
        w = self.params.weights
        dv = np.swapaxes(a, -1, -2) @ grad
        da = grad @ np.swapaxes(v, -1, -2)
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) / np.sqrt(d_k)
        dq = ds @ k
        dk = np.swapaxes(ds, -1, -2) @ q
        x2 = x.reshape(-1, x.shape[-1])
        flat = lambda a: a.reshape(-1, a.shape[-1])
        self.grads = {"w_q": x2.T @ flat(dq), "w_k": x2.T @ flat(dk), "w_v": x2.T @ flat(dv)}
        return (F.matmul_last(dq, w["w_q"].T) + F.matmul_last(dk, w["w_k"].T)
                + F.matmul_last(dv, w["w_v"].T))


FUSED_ORDER = "ifoc"


class LSTM(Layer):
    """Unidirectional peephole LSTM over (N, T, D) -> (N, T, H), zero initial state."""

    def __init__(self, input_size: int = 0, hidden_size: int = 0,
                 rng: np.random.Generator | None = None, peephole: bool = True,
                 name: str = "lstm", params: LayerParams | None = None):
        super().__init__()
        self.name = name
        self.params = params if params is not None else lstm_params(input_size, hidden_size, rng, peephole)
        self.peephole = bool(self.params.hyper.get("peephole", True))

    @property
    def trainable(self):
        names = [f"w_{s}{g}" for g in "ifco" for s in "xh"] + [f"b_{g}" for g in "ifco"]
        return tuple(names + [f"w_c{g}" for g in "ifo"])

    def _fused(self):
        # gates stacked i, f, o, c so the three sigmoid gates are contiguous
        w = self.params.weights
        wx = np.concatenate([w[f"w_x{g}"] for g in FUSED_ORDER], axis=0)
        wh = np.concatenate([w[f"w_h{g}"] for g in FUSED_ORDER], axis=0)
        b = np.concatenate([w[f"b_{g}"] for g in FUSED_ORDER])
        wc = np.concatenate([w["w_ci"], w["w_cf"], w["w_co"]], axis=0) if self.peephole else None
        return wx, wh, wc, b

    def forward(self, x, train=False, update_stats=True):
        n, t, d = x.shape
        wx, wh, wc, b = self._fused()
        if d != wx.shape[1]:
            raise GeometryError(f"{self.name}: input width {d} != {wx.shape[1]}")
        hidden = wh.shape[1]
        pre_x = F.matmul_last(x, wx.T) + b  # (N, T, 4H)
        h = np.zeros((n, hidden))
        c = np.zeros((n, hidden))
        out = np.empty((n, t, hidden))
        steps = []
        for s in range(t):
            a = pre_x[:, s] + h @ wh.T
            if self.peephole:
                a[:, : 3 * hidden] += c @ wc.T
            # sigma(z) = (1 + tanh(z/2)) / 2 is overflow-free and needs one transcendental
            gates = 0.5 + 0.5 * np.tanh(0.5 * a[:, : 3 * hidden])
            i, f, o = gates[:, :hidden], gates[:, hidden: 2 * hidden], gates[:, 2 * hidden:]
            g = np.tanh(a[:, 3 * hidden:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            out[:, s] = h
            steps.append((h_prev, c_prev, i, f, g, o, tc))
        self._cache = (x, steps, wx, wh, wc)
        return out

    def backward(self, grad):
        x, steps, wx, wh, wc = self._require_cache()
        n, t, hidden = grad.shape
        da_all = np.empty((n, t, 4 * hidden))
        h_prevs = np.empty((n, t, hidden))
        c_prevs = np.empty((n, t, hidden))
        dh_next = np.zeros((n, hidden))
        dc_next = np.zeros((n, hidden))
        for s in reversed(range(t)):
            h_prev, c_prev, i, f, g, o, tc = steps[s]
            dh = grad[:, s] + dh_next
            dc = dc_next + dh * o * (1.0 - tc ** 2)
            da = da_all[:, s]
            da[:, :hidden] = dc * g * i * (1.0 - i)
            da[:, hidden: 2 * hidden] = dc * c_prev * f * (1.0 - f)
            da[:, 2 * hidden: 3 * hidden] = dh * tc * o * (1.0 - o)
            da[:, 3 * hidden:] = dc * i * (1.0 - g ** 2)
            dh_next = da @ wh
            dc_next = dc * f
            if self.peephole:
                dc_next = dc_next + da[:, : 3 * hidden] @ wc
            h_prevs[:, s], c_prevs[:, s] = h_prev, c_prev
        d2 = da_all.reshape(-1, 4 * hidden)
        gx = d2.T @ x.reshape(n * t, -1)
        gh = d2.T @ h_prevs.reshape(n * t, hidden)
        gb = d2.sum(axis=0)
        gc = d2[:, : 3 * hidden].T @ c_prevs.reshape(n * t, hidden) if self.peephole else None
        grads = {}
        for j, gate in enumerate(FUSED_ORDER):
            rows = slice(j * hidden, (j + 1) * hidden)
            grads[f"w_x{gate}"] = np.ascontiguousarray(gx[rows])
            grads[f"w_h{gate}"] = np.ascontiguousarray(gh[rows])
            grads[f"b_{gate}"] = gb[rows].copy()
            if gate != "c":
                grads[f"w_c{gate}"] = (np.ascontiguousarray(gc[rows]) if self.peephole
                                       else np.zeros((hidden, hidden)))
        self.grads = grads
        return F.matmul_last(da_all, wx)


class GlobalAvgPool(Layer):
    """(N, C, L) -> (N, C) by averaging the length axis."""

    def __init__(self, name: str = "pool"):
        super().__init__()
        self.name = name

    def forward(self, x, train=False, update_stats=True):
        self._cache = x.shape
        return F.global_avg_pool(x)

    def backward(self, grad):
        shape = self._require_cache()
        return np.repeat(grad[..., None] / shape[-1], shape[-1], axis=-1)


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        super().__init__()
        self.name = name

    def forward(self, x, train=False, update_stats=True):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._require_cache())


class Dense(Layer):
    """Affine map (N, n) -> (N, m) with an optional relu/sigmoid."""

    trainable = ("weight", "bias")

    def __init__(self, in_features: int = 0, out_features: int = 0, activation: str = "none",
                 rng: np.random.Generator | None = None, name: str = "dense",
                 params: LayerParams | None = None):
        super().__init__()
        self.name = name
        if params is None:
            limit = np.sqrt(6.0 / (in_features + out_features))
            w = (rng.uniform(-limit, limit, (out_features, in_features)) if rng is not None
                 else np.zeros((out_features, in_features)))
            params = dense_params(w, np.zeros(out_features), activation)
        self.params = params

    @property
    def activation(self) -> str:
        return self.params.hyper.get("activation", "none")

    def forward(self, x, train=False, update_stats=True):
        w = self.params.weights["weight"]
        if x.shape[-1] != w.shape[1]:
            raise GeometryError(f"{self.name}: expected width {w.shape[1]}, got {x.shape[-1]}")
        out = F.apply_activation(x @ w.T + self.params.weights["bias"], self.activation)
        self._cache = (x, out)
        return out

    def backward(self, grad):
        x, out = self._require_cache()
        if self.activation == "relu":
            grad = grad * (out > 0)
        elif self.activation == "sigmoid":
            grad = grad * out * (1.0 - out)
        self.grads = {"weight": grad.T @ x, "bias": grad.sum(axis=0)}
        return grad @ self.params.weights["weight"]


class Sequential:
    """Ordered layer graph; the unit that is trained, checked and serialised."""

    def __init__(self, layers: list[Layer]):
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"layer names must be unique: {names}")
        self.layers = layers
        self._trace: list[str] | None = None
        self.backward_trace: list[str] = []

    def forward(self, x, train: bool = False, update_stats: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        trace = []
        for layer in self.layers:
            x = layer.forward(x, train=train, update_stats=update_stats)
            trace.append(layer.name)
        self._trace = trace
        return x

    __call__ = forward

    def backward(self, loss_grad, input_grad: bool = True) -> dict[str, np.ndarray]:
        """Propagate dLoss/dOutput; returns gradients for every trainable weight.

        Weights the loss does not depend on come back as zeros. With
        ``input_grad=False`` the first layer may skip computing dLoss/dInput
        and ``self.input_grad`` is None.
        """
        if self._trace is None:
            raise StateError("backward called before forward")
        by_name = {layer.name: layer for layer in self.layers}
        grad = np.asarray(loss_grad, dtype=np.float64)
        self.backward_trace = []
        for pos, name in enumerate(reversed(self._trace)):
            layer = by_name[name]
            layer.zero_grads()
            layer.input_grad_needed = input_grad or pos < len(self._trace) - 1
            grad = layer.backward(grad)
            layer.input_grad_needed = True
            self.backward_trace.append(name)
        self.input_grad = grad
        out = {}
        for layer in self.layers:
            for k in layer.trainable:
                out[f"{layer.name}.{k}"] = layer.grads.get(k, np.zeros_like(layer.params.weights[k]))
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable weight arrays keyed like the gradients; mutate in place to update."""
        return {f"{layer.name}.{k}": layer.params.weights[k]
                for layer in self.layers for k in layer.trainable}

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def layer_params(self) -> list[tuple[str, str, LayerParams | None]]:
        return [(layer.name, type(layer).__name__, layer.params) for layer in self.layers]


def backward(graph: Sequential, loss_grad) -> dict[str, np.ndarray]:
    return graph.backward(loss_grad)
