"""Synthetic flows through preprocessing, ensemble training and evaluation.

Uses the library API with a reduced configuration so it runs in well
under a minute.  The command-line tool runs the same stages at full size:

    ddos-ensemble synth --spec '{"n_rows": 10000}' --seed 42 --out raw/flows.csv
    ddos-ensemble preprocess --seed 42 --in raw --out data/ds.csv
    ddos-ensemble train --seed 42 --data data/ds.csv --out model/model.json
    ddos-ensemble evaluate --data data/ds.csv --model model/model.json --out eval

    python3 demos/03_desk_pipeline.py
"""
import tempfile
from pathlib import Path

from ddos_ensemble.artifact import deserialize, serialize
from ddos_ensemble.config import from_dict
from ddos_ensemble.data import SynthSpec, run_preprocess, synth_generate, write_flow_csv
from ddos_ensemble.metrics import compare_table
from ddos_ensemble.workflow import evaluate_artifact, train_ensemble

cfg = from_dict({
    "seed": 42,
    "train": {"epochs": 6},
    "gbt": {"n_trees": 40},
    "rf": {"n_trees": 40},
    "meta": {"epochs": 8},
})

with tempfile.TemporaryDirectory() as tmp:
    raw = Path(tmp) / "raw"
    raw.mkdir()
    write_flow_csv(synth_generate(SynthSpec(n_rows=3000, separation=4.0, noise=1.0, seed=42)), raw / "flows.csv")
    res = run_preprocess([raw], seed=cfg.seed)

print(f"rows in {res.report.rows_in}, train {len(res.train)}, test {len(res.test)}")
print("features:", ", ".join(res.train.feature_names))

out = train_ensemble(res.train, cfg, val=res.test)
w = out.artifact.model.weights
print(f"\ngrid weights alpha={w.alpha} beta={w.beta} gamma={w.gamma} (tuning accuracy {w.accuracy:.4f})")
for kind, s in out.summary["base_models"].items():
    print(f"{kind}: train loss {s['initial_train_loss']:.4f} -> {s['final_train_loss']:.4f}")

# the artifact survives a serialize/deserialize cycle byte for byte
blob = serialize(out.artifact)
assert serialize(deserialize(blob)) == blob
print(f"artifact {len(blob) / 1024:.0f} KiB, fingerprint {out.artifact.fingerprint}")

print()
print(compare_table(evaluate_artifact(out.artifact, res.test)), end="")
