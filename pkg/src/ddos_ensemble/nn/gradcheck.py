"""Central finite-difference verification of ``Sequential.backward``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import functional as F
from .layers import Sequential

# float64 roundoff at h=1e-6 is ~1e-10; entries below this are compared in absolute terms
ABS_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_FLOOR)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradCheckReport:
    tol: float
    per_parameter: dict[str, float] = field(default_factory=dict)

    @property
    def per_layer(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, err in self.per_parameter.items():
            layer = name.split(".", 1)[0]
            out[layer] = max(out.get(layer, 0.0), err)
        return out

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.per_parameter.items() if not v <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failed

    def summary(self) -> str:
        lines = [f"{layer}: max rel err {err:.3e}" for layer, err in self.per_layer.items()]
        return "\n".join(lines + [f"{'PASS' if self.passed else 'FAIL'} (tol {self.tol:g})"])


def projection_loss(seed: int = 0) -> Callable:
    """Scalar objective sum(R * out) with R fixed per output shape."""
    cache: dict = {}

    def loss(out):
        r = cache.get(out.shape)
        if r is None:
            r = cache[out.shape] = np.random.default_rng(seed).normal(size=out.shape)
        return float((r * out).sum()), r

    return loss


def bce_objective(y) -> Callable:
    y = np.asarray(y, dtype=np.float64)

    def loss(out):
        return F.bce_loss(y, out), F.bce_grad(y, out)

    return loss


def finite_diff_check(graph: Sequential, sample, h: float = 1e-6, tol: float = 1e-5,
                      loss: Callable | None = None, train: bool = False,
                      analytic: dict[str, np.ndarray] | None = None) -> GradCheckReport:
    """Compare backward() to (f(θ+h) - f(θ-h)) / 2h for every scalar parameter.

    ``sample`` is an input batch, or an ``(x, y)`` pair in which case the
    objective is binary cross-entropy on the graph's output. ``analytic``
    may supply precomputed gradients (used for fault injection).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    if isinstance(sample, tuple):
        x, y = sample
        loss = loss or bce_objective(y)
    else:
        x = sample
        loss = loss or projection_loss()
    x = np.asarray(x, dtype=np.float64)

    def f() -> float:
        return loss(graph.forward(x, train=train, update_stats=False))[0]

    if analytic is None:
        out = graph.forward(x, train=train, update_stats=False)
        analytic = graph.backward(loss(out)[1])
    report = GradCheckReport(tol=tol)
    for name, p in graph.parameters().items():
        numeric = np.empty_like(p)
        flat, nflat = p.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            nflat[i] = (fp - fm) / (2 * h)
        report.per_parameter[name] = float(relative_error(analytic[name], numeric).max()) if p.size else 0.0
    return report
