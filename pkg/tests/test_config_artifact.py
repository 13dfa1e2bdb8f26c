import json

import numpy as np
import pytest

from ddos_ensemble import seeding
from ddos_ensemble.artifact import (FormatError, ModelArtifact, deserialize, load_artifact, network_from_json,
                                    network_to_json, save_artifact, serialize)
from ddos_ensemble.config import RunConfig, from_dict, load_config
from ddos_ensemble.data.preprocess import MinMaxScaler
from ddos_ensemble.ensemble import EnsembleModel, EnsembleWeights, MetaClassifier, build_meta
from ddos_ensemble.base_models import TrainConfig
from ddos_ensemble.errors import ConfigError


def test_defaults_documented_values():
    cfg = RunConfig()
    assert cfg.train.epochs == 64 and cfg.train.batch_size == 256
    assert cfg.grid.step == 0.1 and cfg.grid.max == 0.4
    assert cfg.gbt.n_trees == 100 and cfg.gbt.max_depth == 4
    assert cfg.rf.feature_subsample == "sqrt"
    assert cfg.ensemble.threshold == 0.5 and cfg.ensemble.combine == "stack"
    assert cfg.preprocess.prune_threshold == 0.95


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="train.epoch"):
        from_dict({"train": {"epoch": 3}})
    with pytest.raises(ConfigError):
        from_dict({"nonsense": 1})


def test_precedence_file_then_flags(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "train": {"epochs": 7, "batch_size": 32}}))
    cfg = load_config(p, {"train.epochs": 9, "seed": None})
    assert (cfg.seed, cfg.train.epochs, cfg.train.batch_size) == (5, 9, 32)


def test_invalid_values(tmp_path):
    with pytest.raises(ConfigError):
        from_dict({"train": {"tuning_fraction": 1.5}})
    with pytest.raises(ConfigError):
        from_dict({"ensemble": {"combine": "max"}})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_hash_ignores_paths_and_threads():
    a, b = RunConfig(), RunConfig(threads=4)
    b.paths.model = "elsewhere.json"
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig(seed=1).config_hash()


def test_derive_seed_stable():
    assert seeding.derive_seed(0, "meta") == seeding.derive_seed(0, "meta")
    assert seeding.derive_seed(0, "meta") != seeding.derive_seed(0, "tuning")
    assert seeding.derive_seed(0, "meta") != seeding.derive_seed(1, "meta")
    assert 0 <= seeding.derive_seed(123, "x") < 2 ** 32


def _artifact(tiny_models):
    meta = MetaClassifier(build_meta(6, 4, 1), TrainConfig(epochs=1))
    model = EnsembleModel(dict(tiny_models), EnsembleWeights(0.1, 0.2, 0.3, accuracy=0.9), meta)
    scaler = MinMaxScaler(np.zeros(6), np.arange(1.0, 7.0))
    return ModelArtifact(model, [f"f{i}" for i in range(6)], scaler, RunConfig().model_dict(), "abc", 7)


def test_artifact_roundtrip_byte_identical(tiny_models, tmp_path):
    art = _artifact(tiny_models)
    blob = serialize(art)
    again = deserialize(blob)
    assert serialize(again) == blob
    X = np.random.default_rng(0).uniform(size=(10, 6))
    np.testing.assert_array_equal(art.model.predict(X)[1], again.model.predict(X)[1])
    save_artifact(art, tmp_path / "m.json")
    assert load_artifact(tmp_path / "m.json").fingerprint == {"config_hash": "abc", "seed": 7}


def test_artifact_rejects_foreign_json():
    with pytest.raises(FormatError):
        deserialize(b'{"format": "other"}')
    with pytest.raises(FormatError):
        deserialize(b"\xff\xfe")
    with pytest.raises(FormatError):
        deserialize(json.dumps({"format": "ddos-ensemble-model", "format_version": 1}).encode())


def test_network_json_keeps_tensor_shapes(tiny_models):
    net = tiny_models["cnn_lstm"].network
    entries = json.loads(json.dumps(network_to_json(net)))
    for e in entries:
        for t in e.get("params", {}).get("weights", {}).values():
            assert int(np.prod(t["shape"])) == len(t["data"])
    rebuilt = network_from_json(entries)
    x = np.random.default_rng(1).uniform(size=(3, 1, 6))
    np.testing.assert_array_equal(rebuilt.forward(x), net.forward(x))
