"""Forward math for the layer set.

Every function accepts either a single sample or a batch with a leading
sample axis. Arrays are float64 throughout.
"""
from __future__ import annotations

import numpy as np

from ..errors import EmptyInputError, GeometryError, InputError
from .params import LayerParams

PROB_EPS = 1e-12


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def resolve_padding(padding, kernel_size: int) -> tuple[int, int]:
    """Turn a padding spec into explicit (left, right) amounts."""
    if padding == "valid":
        return 0, 0
    if padding == "same":
        left = (kernel_size - 1) // 2
        return left, kernel_size - 1 - left
    if isinstance(padding, (int, np.integer)):
        return int(padding), int(padding)
    left, right = padding
    return int(left), int(right)


def conv1d_output_length(length: int, kernel_size: int, stride: int, pad: tuple[int, int]) -> int:
    return (length + pad[0] + pad[1] - kernel_size) // stride + 1


def matmul_last(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b contracting a's last axis, run as one 2-D BLAS call."""
    return (a.reshape(-1, a.shape[-1]) @ b).reshape(*a.shape[:-1], b.shape[-1])


def im2col(x: np.ndarray, kernel_size: int, stride: int, pad: tuple[int, int]) -> np.ndarray:
    """(N, C, L) -> (N, L_out, C * k) patches, channel-major within a patch."""
    n, c, length = x.shape
    if kernel_size > length + pad[0] + pad[1]:
        raise GeometryError(
            f"kernel size {kernel_size} exceeds padded length {length + pad[0] + pad[1]}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), pad)) if pad != (0, 0) else x
    windows = np.lib.stride_tricks.sliding_window_view(xp, kernel_size, axis=2)
    windows = windows[:, :, ::stride, :]  # (N, C, L_out, k)
    return np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(n, windows.shape[2], c * kernel_size)


def conv1d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1,
           pad: tuple[int, int] = (0, 0)) -> tuple[np.ndarray, np.ndarray]:
    """Batched 1-D cross-correlation. Returns the output (N, C_out, L_out) and the patch matrix."""
    c_out, c_in, k = weight.shape
    if x.ndim != 3 or x.shape[1] != c_in:
        raise GeometryError(f"conv1d expects (N, {c_in}, L) input, got {x.shape}")
    if stride < 1:
        raise GeometryError("stride must be >= 1")
    cols = im2col(x, k, stride, pad)
    out = matmul_last(cols, weight.reshape(c_out, c_in * k).T) + bias
    return out.transpose(0, 2, 1), cols


def conv1d_forward(x, params: LayerParams) -> np.ndarray:
    """Convolve a [C_in x L] input (or a batch of them) with the layer's kernels."""
    x = as_tensor(x)
    single = x.ndim == 2
    xb = x[None] if single else x
    w = params.weights["weight"]
    pad = resolve_padding(params.hyper.get("padding", "valid"), w.shape[2])
    out, _ = conv1d(xb, w, params.weights["bias"], int(params.hyper.get("stride", 1)), pad)
    return out[0] if single else out


def _bn_axes(x: np.ndarray) -> tuple[int, ...]:
    # feature/channel axis is 1; statistics pool over every other axis
    return (0,) + tuple(range(2, x.ndim))


def _bn_shape(x: np.ndarray) -> tuple[int, ...]:
    return (1, x.shape[1]) + (1,) * (x.ndim - 2)


def channel_sum(x: np.ndarray) -> np.ndarray:
    """Sum over every axis except 1 (einsum is much faster than sum(axis=(0, 2)))."""
    return np.einsum("ncl->c", x.reshape(x.shape[0], x.shape[1], -1))


def batchnorm_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = x.size / x.shape[1]
    mean = channel_sum(x) / m
    centred = x - mean.reshape(_bn_shape(x))
    return mean, np.einsum("ncl,ncl->c", *(2 * [centred.reshape(x.shape[0], x.shape[1], -1)])) / m


def normalize(x: np.ndarray, mean: np.ndarray, var: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (x_hat, 1/sqrt(var+eps)); a zero denominator yields x_hat = 0."""
    shape = _bn_shape(x)
    denom = np.sqrt(var + eps)
    inv = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
    return (x - mean.reshape(shape)) * inv.reshape(shape), inv


def batchnorm_forward(batch, params: LayerParams, mode: str = "train") -> np.ndarray:
    """Batch normalisation over an [N x F] (or [N x C x L]) batch.

    Train mode normalises with the batch statistics and folds them into the
    running averages; infer mode uses the running averages.
    """
    x = as_tensor(batch)
    if x.shape[0] == 0:
        raise EmptyInputError("batchnorm received an empty batch")
    eps = float(params.hyper.get("epsilon", 1e-5))
    gamma, beta = params.weights["gamma"], params.weights["beta"]
    if mode == "train":
        mean, var = batchnorm_stats(x)
        m = float(params.hyper.get("momentum", 0.9))
        params.buffers["running_mean"] = m * params.buffers["running_mean"] + (1 - m) * mean
        params.buffers["running_var"] = m * params.buffers["running_var"] + (1 - m) * var
    elif mode == "infer":
        if "running_mean" not in params.buffers or "running_var" not in params.buffers:
            raise InputError("infer mode requires running statistics")
        mean, var = params.buffers["running_mean"], params.buffers["running_var"]
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    x_hat, _ = normalize(x, mean, var, eps)
    shape = _bn_shape(x)
    return gamma.reshape(shape) * x_hat + beta.reshape(shape)


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), 0.0)


def sigmoid(z) -> np.ndarray:
    z = as_tensor(z)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(v, axis: int = -1) -> np.ndarray:
    v = as_tensor(v)
    if v.size == 0:
        raise EmptyInputError("softmax of an empty vector")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def attention(x: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray, d_k: float):
    """Scaled dot-product self-attention on (..., T, F). Returns (out, weights, q, k, v)."""
    f = x.shape[-1]
    if wq.shape[0] != f or wk.shape[0] != f or wv.shape[0] != f:
        raise GeometryError(f"projection matrices must have {f} rows")
    if wq.shape[1] != wk.shape[1]:
        raise GeometryError("query and key projections must share a width")
    if d_k <= 0:
        raise GeometryError("d_k must be positive")
    q, k, v = matmul_last(x, wq), matmul_last(x, wk), matmul_last(x, wv)
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(d_k)
    weights = softmax(scores, axis=-1)
    return weights @ v, weights, q, k, v


def self_attention(x, params: LayerParams, return_weights: bool = False):
    """softmax(Q K^T / sqrt(d_k)) V for a [T x F] sequence (or a batch of them)."""
    x = as_tensor(x)
    w = params.weights
    d_k = float(params.hyper.get("d_k", w["w_q"].shape[1]))
    out, weights, *_ = attention(x, w["w_q"], w["w_k"], w["w_v"], d_k)
    return (out, weights) if return_weights else out


LSTM_GATES = ("i", "f", "c", "o")


def lstm_cell_step(x_t, h_prev, c_prev, params: LayerParams):
    """One peephole LSTM step; returns (h_t, c_t) and leaves params untouched."""
    h, c, _ = lstm_step(as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev), params.weights,
                        bool(params.hyper.get("peephole", True)))
    return h, c


def lstm_step(x, h_prev, c_prev, w: dict, peephole: bool = True):
    """Gate equations for one time step on (..., D) inputs. Returns (h, c, cache)."""
    hidden = w["b_i"].shape[0]
    if h_prev.shape[-1] != hidden or c_prev.shape[-1] != hidden:
        raise GeometryError(f"hidden/cell state must have width {hidden}")
    if x.shape[-1] != w["w_xi"].shape[1]:
        raise GeometryError(f"input width {x.shape[-1]} != {w['w_xi'].shape[1]}")
    a_i = x @ w["w_xi"].T + h_prev @ w["w_hi"].T + w["b_i"]
    a_f = x @ w["w_xf"].T + h_prev @ w["w_hf"].T + w["b_f"]
    a_o = x @ w["w_xo"].T + h_prev @ w["w_ho"].T + w["b_o"]
    if peephole:
        a_i = a_i + c_prev @ w["w_ci"].T
        a_f = a_f + c_prev @ w["w_cf"].T
        a_o = a_o + c_prev @ w["w_co"].T
    a_c = x @ w["w_xc"].T + h_prev @ w["w_hc"].T + w["b_c"]
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o)
    g = np.tanh(a_c)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def global_avg_pool(x) -> np.ndarray:
    """Mean over the last (length) axis: [C x L] -> [C]."""
    x = as_tensor(x)
    if x.shape[-1] == 0:
        raise EmptyInputError("cannot pool over an empty length axis")
    return x.mean(axis=-1)


def dense_forward(x, params: LayerParams, activation: str | None = None) -> np.ndarray:
    """W x + b followed by an optional activation (none | relu | sigmoid)."""
    x = as_tensor(x)
    w = params.weights["weight"]
    if x.shape[-1] != w.shape[1]:
        raise GeometryError(f"dense expects width {w.shape[1]}, got {x.shape[-1]}")
    z = x @ w.T + params.weights["bias"]
    act = activation if activation is not None else params.hyper.get("activation", "none")
    return apply_activation(z, act)


def apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation in (None, "none", "linear"):
        return z
    if activation == "relu":
        return relu(z)
    if activation == "sigmoid":
        return sigmoid(z)
    raise ValueError(f"unknown activation {activation!r}")


def bce_loss(y, p) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12]."""
    y, p = as_tensor(y).ravel(), as_tensor(p).ravel()
    if y.size == 0:
        raise EmptyInputError("bce_loss of zero samples")
    if y.shape != p.shape:
        raise GeometryError(f"label/probability length mismatch: {y.size} vs {p.size}")
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_grad(y, p) -> np.ndarray:
    """d(bce_loss)/dp, shaped like p."""
    p = as_tensor(p)
    y = as_tensor(y).reshape(p.shape)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return -(y / pc - (1.0 - y) / (1.0 - pc)) / p.size
