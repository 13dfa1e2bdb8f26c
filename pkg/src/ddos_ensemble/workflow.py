"""End-to-end training and evaluation on preprocessed datasets."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .artifact import ModelArtifact
from .base_models import (BaseModel, ExtractorConfig, LSTMConfig, TrainConfig, train_cnn_lstm,
                          train_cnn_rf, train_cnn_xgb, train_sa_cnn_extractor)
from .config import RunConfig
from .data.dataset import Dataset
from .data.preprocess import stratified_split
from .ensemble import (MODEL_ORDER, EnsembleModel, GridSpec, GridTrace, combine, grid_search_weights,
                       train_meta)
from .errors import InputError
from .metrics import MetricsReport, evaluate

log = logging.getLogger(__name__)


def argmax_labels(p: np.ndarray) -> np.ndarray:
    """Base-model label: the larger probability column, class 0 on a tie."""
    return (p[:, 1] > p[:, 0]).astype(np.int64)


@dataclass
class TrainOutputs:
    artifact: ModelArtifact
    trace: GridTrace
    base_reports: list[MetricsReport] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _train_cfg(cfg: RunConfig, seed: int, epochs: int | None = None, batch: int | None = None) -> TrainConfig:
    t = cfg.train
    return TrainConfig(epochs or t.epochs, batch or t.batch_size, t.learning_rate, t.beta1, t.beta2,
                       t.epsilon, t.tuning_fraction, seed)


def _ext_cfg(cfg: RunConfig, seed: int) -> ExtractorConfig:
    e = cfg.extractor
    return ExtractorConfig(e.conv1_filters, e.conv2_filters, e.kernel_size, e.padding,
                           e.attention_width, e.d_k, seed)


def partition_train(y: np.ndarray, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split of the training rows into (base, tuning) index sets."""
    return stratified_split(y, 1.0 - cfg.train.tuning_fraction,
                            seeding.derive_seed(cfg.seed, seeding.TUNING))


def train_base_models(X, y, cfg: RunConfig, val=None) -> dict[str, BaseModel]:
    root = cfg.seed
    s = lambda label: seeding.derive_seed(root, label)
    rf_hyper = {"n_trees": cfg.rf.n_trees, "max_depth": cfg.rf.max_depth, "min_leaf": cfg.rf.min_leaf,
                "feature_subsample": cfg.rf.feature_subsample, "bootstrap": cfg.rf.bootstrap,
                "seed": s(seeding.FOREST), "threads": cfg.threads}
    gbt_hyper = cfg.gbt.hyper()
    lstm_cfg = LSTMConfig(cfg.lstm.hidden_size, cfg.lstm.peephole)

    def lstm_job():
        log.info("training cnn_lstm")
        return train_cnn_lstm(X, y, _train_cfg(cfg, s(seeding.LSTM_SHUFFLE)),
                              _ext_cfg(cfg, s(seeding.LSTM_INIT)), lstm_cfg, val)

    def tree_jobs():
        if cfg.train.share_extractor:
            log.info("training shared extractor for cnn_xgb / cnn_rf")
            stage1 = train_sa_cnn_extractor(X, y, _train_cfg(cfg, s(seeding.EXTRACTOR_SHUFFLE)),
                                            _ext_cfg(cfg, s(seeding.EXTRACTOR_INIT)), val)
            log.info("fitting boosted-tree head")
            xgb = train_cnn_xgb(X, y, gbt=gbt_hyper, extractor=stage1)
            log.info("fitting random-forest head")
            rf = train_cnn_rf(X, y, rf=rf_hyper, extractor=stage1)
        else:
            log.info("training cnn_xgb")
            xgb = train_cnn_xgb(X, y, _train_cfg(cfg, s(seeding.XGB_EXTRACTOR_SHUFFLE)),
                                _ext_cfg(cfg, s(seeding.XGB_EXTRACTOR_INIT)), gbt_hyper, val)
            log.info("training cnn_rf")
            rf = train_cnn_rf(X, y, _train_cfg(cfg, s(seeding.RF_EXTRACTOR_SHUFFLE)),
                              _ext_cfg(cfg, s(seeding.RF_EXTRACTOR_INIT)), rf_hyper, val)
        return xgb, rf

    if cfg.threads > 1:
        # independent jobs; results are collected by name so completion order is irrelevant
        with ThreadPoolExecutor(2) as pool:
            f_lstm, f_trees = pool.submit(lstm_job), pool.submit(tree_jobs)
            lstm_model, (xgb, rf) = f_lstm.result(), f_trees.result()
    else:
        xgb, rf = tree_jobs()
        lstm_model = lstm_job()
    return {"cnn_xgb": xgb, "cnn_lstm": lstm_model, "cnn_rf": rf}


def train_ensemble(train: Dataset, cfg: RunConfig, val: Dataset | None = None) -> TrainOutputs:
    """Base models on the base partition; grid search and meta training on the tuning partition."""
    if train.y is None:
        raise InputError("labels required for training")
    if len(np.unique(train.y)) < 2:
        raise InputError("training data contains a single class")
    base_idx, tune_idx = partition_train(train.y, cfg)
    base, tune = train.subset(base_idx), train.subset(tune_idx)
    if len(np.unique(tune.y)) < 2 or len(np.unique(base.y)) < 2:
        raise InputError("base or tuning partition contains a single class")
    val_pair = (val.X, val.y) if val is not None and val.y is not None and len(val) else None
    log.info("base partition %d rows, tuning partition %d rows", len(base), len(tune))

    models = train_base_models(base.X, base.y, cfg, val_pair)
    preds = [models[k].predict_proba(tune.X) for k in MODEL_ORDER]
    grid = GridSpec.from_max(cfg.grid.step, cfg.grid.max)
    trace = GridTrace()
    weights = grid_search_weights(preds, tune.y, grid, trace)
    log.info("grid search: alpha=%s beta=%s gamma=%s tuning accuracy %.6f",
             weights.alpha, weights.beta, weights.gamma, weights.accuracy)

    meta = None
    mode = cfg.ensemble.combine
    if mode != "soft_vote":
        stacked = combine(preds, weights, mode)
        meta_cfg = _train_cfg(cfg, seeding.derive_seed(cfg.seed, seeding.META),
                              cfg.meta.epochs, cfg.meta.batch_size)
        meta = train_meta(stacked, tune.y, meta_cfg, cfg.meta.hidden)
    model = EnsembleModel(models, weights, meta, cfg.ensemble.threshold, mode)
    artifact = ModelArtifact(model, train.feature_names, train.scaler, cfg.model_dict(),
                             cfg.config_hash(), cfg.seed)

    base_reports = [evaluate(tune.y, argmax_labels(p), k, "tuning")
                    for k, p in zip(MODEL_ORDER, preds)]
    summary = {
        "rows": {"base": len(base), "tuning": len(tune), "validation": len(val) if val_pair else 0},
        "base_models": {k: models[k].summary() for k in MODEL_ORDER},
        "weights": weights.to_dict(),
        "grid": {"step": grid.step, "max_index": grid.max_index, "tuples": grid.size},
        "meta": None if meta is None else {
            "initial_train_loss": meta.initial_loss,
            "history": meta.curve.to_dict(),
        },
        "fingerprint": artifact.fingerprint,
    }
    return TrainOutputs(artifact, trace, base_reports, summary)


def evaluate_artifact(artifact: ModelArtifact, data: Dataset, split: str = "test") -> list[MetricsReport]:
    """Reports for the three base models and the ensemble, in that order."""
    if data.y is None:
        raise InputError("labels required for evaluation")
    data = data.aligned(artifact.feature_names)
    model = artifact.model
    reports = []
    for k, p in zip(MODEL_ORDER, model.base_probabilities(data.X)):
        reports.append(evaluate(data.y, argmax_labels(p), k, split))
    labels, _ = model.predict(data.X)
    reports.append(evaluate(data.y, labels, "ensemble", split))
    return reports
