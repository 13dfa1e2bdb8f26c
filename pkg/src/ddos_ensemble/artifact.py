"""The single-file model artifact.

A JSON document (sorted keys, compact separators, UTF-8) holding the
scaler, feature names, the three base models, the ensemble weights, the
meta-classifier and a training fingerprint. Tensors are stored as
``{"shape": [...], "data": [flat row-major values]}``; floats use Python's
shortest round-trip repr, so deserialize -> serialize reproduces the bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .base_models import BaseModel, ExtractorConfig, TrainConfig
from .data.preprocess import MinMaxScaler
from .ensemble import MODEL_ORDER, EnsembleModel, EnsembleWeights, MetaClassifier
from .errors import FormatError
from .metrics import CurveSeries
from .nn import layers as L
from .nn.params import LayerParams
from .trees import GBTModel, RFModel

FORMAT = "ddos-ensemble-model"
FORMAT_VERSION = 1

_LAYER_TYPES = {cls.__name__: cls for cls in (L.Conv1d, L.BatchNorm, L.ReLU, L.SwapAxes, L.SelfAttention,
                                              L.LSTM, L.GlobalAvgPool, L.Flatten, L.Dense)}


def tensor_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def tensor_from_json(d: dict) -> np.ndarray:
    try:
        return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad tensor entry: {exc}") from exc


def _nan_to_none(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def _none_to_nan(v):
    return float("nan") if v is None else v


def network_to_json(net: L.Sequential) -> list[dict]:
    out = []
    for layer in net.layers:
        entry = {"name": layer.name, "type": type(layer).__name__}
        p = layer.params
        if p is not None:
            entry["params"] = {
                "kind": p.kind,
                "weights": {k: tensor_to_json(v) for k, v in p.weights.items()},
                "hyper": dict(p.hyper),
                "buffers": {k: tensor_to_json(v) for k, v in p.buffers.items()},
            }
        out.append(entry)
    return out


def network_from_json(entries: list[dict]) -> L.Sequential:
    layers = []
    for e in entries:
        cls = _LAYER_TYPES.get(e.get("type"))
        if cls is None:
            raise FormatError(f"unknown layer type {e.get('type')!r}")
        if "params" in e:
            p = e["params"]
            params = LayerParams(p["kind"], {k: tensor_from_json(v) for k, v in p["weights"].items()},
                                 dict(p["hyper"]), {k: tensor_from_json(v) for k, v in p["buffers"].items()})
            layers.append(cls(name=e["name"], params=params))
        else:
            layers.append(cls(name=e["name"]))
    return L.Sequential(layers)


def _curve_to_json(curve: CurveSeries) -> list[dict]:
    return [{k: _nan_to_none(v) for k, v in r.items()} for r in curve.rows]


def _curve_from_json(rows: list[dict]) -> CurveSeries:
    return CurveSeries([{k: _none_to_nan(v) for k, v in r.items()} for r in rows])


def base_model_to_json(m: BaseModel) -> dict:
    head = None if m.head is None else m.head.to_dict()
    return {
        "kind": m.kind,
        "n_features": m.n_features,
        "network": network_to_json(m.network),
        "head": head,
        "extractor_config": asdict(m.extractor_config),
        "train_config": asdict(m.train_config),
        "head_config": m.head_config,
        "curve": _curve_to_json(m.curve),
        "initial_loss": _nan_to_none(m.initial_loss),
    }


def base_model_from_json(d: dict) -> BaseModel:
    head = d.get("head")
    if head is not None:
        head = GBTModel.from_dict(head) if head.get("kind") == "gbt" else RFModel.from_dict(head)
    return BaseModel(d["kind"], network_from_json(d["network"]), head, int(d["n_features"]),
                     ExtractorConfig(**d["extractor_config"]), TrainConfig(**d["train_config"]),
                     dict(d.get("head_config", {})), _curve_from_json(d.get("curve", [])),
                     _none_to_nan(d.get("initial_loss")))


class ModelArtifact:
    """Everything needed to score raw flow rows."""

    def __init__(self, model: EnsembleModel, feature_names: list[str], scaler: MinMaxScaler | None,
                 config: dict | None = None, config_hash: str = "", seed: int = 0):
        self.model = model
        self.feature_names = list(feature_names)
        self.scaler = scaler
        self.config = config or {}
        self.config_hash = config_hash
        self.seed = int(seed)

    @property
    def fingerprint(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}

    def to_json(self) -> dict:
        m = self.model
        meta = None
        if m.meta is not None:
            meta = {"network": network_to_json(m.meta.network), "train_config": asdict(m.meta.train_config),
                    "curve": _curve_to_json(m.meta.curve), "initial_loss": _nan_to_none(m.meta.initial_loss)}
        return {
            "format": FORMAT,
            "format_version": FORMAT_VERSION,
            "feature_names": self.feature_names,
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "fingerprint": self.fingerprint,
            "config": self.config,
            "base_models": {k: base_model_to_json(m.base_models[k]) for k in MODEL_ORDER},
            "weights": m.weights.to_dict(),
            "meta": meta,
            "threshold": m.threshold,
            "combine_mode": m.combine_mode,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelArtifact":
        if d.get("format") != FORMAT:
            raise FormatError("not a model artifact")
        if d.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"unsupported artifact version {d.get('format_version')}")
        try:
            bases = {k: base_model_from_json(d["base_models"][k]) for k in MODEL_ORDER}
            meta = None
            if d.get("meta") is not None:
                md = d["meta"]
                meta = MetaClassifier(network_from_json(md["network"]), TrainConfig(**md["train_config"]),
                                      _curve_from_json(md.get("curve", [])), _none_to_nan(md.get("initial_loss")))
            model = EnsembleModel(bases, EnsembleWeights.from_dict(d["weights"]), meta,
                                  float(d["threshold"]), d["combine_mode"])
            scaler = MinMaxScaler.from_dict(d["scaler"]) if d.get("scaler") else None
            fp = d["fingerprint"]
            return cls(model, d["feature_names"], scaler, d.get("config", {}), fp["config_hash"], fp["seed"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed artifact: missing or bad field {exc}") from exc


def serialize(artifact: ModelArtifact) -> bytes:
    text = json.dumps(artifact.to_json(), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return (text + "\n").encode("utf-8")


def deserialize(blob: bytes) -> ModelArtifact:
    try:
        d = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"artifact is not valid JSON: {exc}") from exc
    return ModelArtifact.from_json(d)


def save_artifact(artifact: ModelArtifact, path) -> None:
    Path(path).write_bytes(serialize(artifact))


def load_artifact(path) -> ModelArtifact:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read model {path}: {exc}") from exc
    return deserialize(blob)
