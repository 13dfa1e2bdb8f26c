import json
import os
import warnings

import numpy as np
import pytest

from ddos_ensemble.base_models import (BaseModel, ExtractorConfig, LSTMConfig, TrainConfig,
                                       build_lstm_network, build_sa_cnn_extractor)
from ddos_ensemble.data import SynthSpec, minmax_scale, stratified_split, synth_generate
from ddos_ensemble.trees import train_gbt, train_rf

TINY_EXT = dict(conv1_filters=4, conv2_filters=3, kernel_size=3, padding="same")


def synth_arrays(n_rows=2000, separation=4.0, noise=1.0, seed=42, n_features=7, train_fraction=0.8):
    """Scaled (X_train, y_train, X_test, y_test) from the synthetic generator."""
    ds = synth_generate(SynthSpec(n_rows, n_features, 0.5, separation, noise, seed))
    tr, te = stratified_split(ds.y, train_fraction, seed)
    X_tr, X_te, _, _ = minmax_scale(ds.X[tr], ds.X[te])
    return X_tr, ds.y[tr], X_te, ds.y[te]


@pytest.fixture(scope="session")
def tiny_models():
    """Untrained-network base models with small tree heads, for shape/probability checks."""
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(120, 6))
    y = (X[:, 0] + X[:, 1] > 1.0).astype(np.int64)
    ext = ExtractorConfig(**TINY_EXT, seed=3)
    net = build_sa_cnn_extractor(ext, 6)
    models = {}
    for kind in ("cnn_xgb", "cnn_rf"):
        m = BaseModel(kind, net, None, 6, ext, TrainConfig(epochs=1))
        feats = m.features(X)
        m.head = train_gbt(feats, y, n_trees=5, max_depth=3) if kind == "cnn_xgb" else \
            train_rf(feats, y, n_trees=5, seed=1)
        models[kind] = m
    lstm = build_lstm_network(ext, LSTMConfig(hidden_size=3), 6)
    models["cnn_lstm"] = BaseModel("cnn_lstm", lstm, None, 6, ext, TrainConfig(epochs=1))
    return models


@pytest.fixture
def tiny_config(tmp_path):
    """A config file that keeps CLI training to a few seconds."""
    cfg = {
        "extractor": {"conv1_filters": 8, "conv2_filters": 4},
        "lstm": {"hidden_size": 4},
        "train": {"epochs": 2, "batch_size": 64},
        "gbt": {"n_trees": 5},
        "rf": {"n_trees": 5},
        "meta": {"hidden": 8, "epochs": 2},
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(cfg))
    return path


def pytest_configure(config):
    # numba kernels are cached on disk; keep warnings from them out of the output
    warnings.filterwarnings("ignore", category=DeprecationWarning, module="numba")
    os.environ.setdefault("PYTHONHASHSEED", "0")


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number: int, ok: bool, detail: str, elapsed: float, limit: float | None = None):
        timing = f"{elapsed:.1f}s" + ("" if limit is None else f" (limit {limit:g}s)")
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{timing}]"
        ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
