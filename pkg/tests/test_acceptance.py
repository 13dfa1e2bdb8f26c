"""Acceptance criteria, each checked at its stated tolerance and time limit.

Run on its own with ``pytest tests/test_acceptance.py``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""
import csv
import itertools
import json
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from _graphs import GRAD_LAYERS, layer_graph
from ddos_ensemble.data import SynthSpec, run_preprocess, synth_generate, write_flow_csv
from ddos_ensemble.ensemble import GridTrace, grid_search_weights
from ddos_ensemble.metrics import ConfusionMatrix, compute_metrics, evaluate
from ddos_ensemble.nn import gradcheck
from ddos_ensemble.nn.functional import self_attention, softmax
from ddos_ensemble.nn.layers import SelfAttention

MODELS = ("cnn_xgb", "cnn_lstm", "cnn_rf")


def cli(*args, cwd=None):
    r = subprocess.run([sys.executable, "-m", "ddos_ensemble", "--quiet", *map(str, args)],
                       capture_output=True, text=True, cwd=cwd)
    assert r.returncode == 0, f"{args[0]} failed: {r.stderr}"
    return r


def test_criterion_1_gradients(criterion):
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for kind in GRAD_LAYERS:
        for seed in range(10):
            graph, x = layer_graph(kind, seed)
            report = gradcheck.finite_diff_check(graph, x, h=1e-6, tol=1e-5)
            worst = max([worst, *report.per_parameter.values()])
            if not report.passed:
                failures.append(f"{kind}/{seed}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    criterion(1, ok, f"max rel err {worst:.2e} over {len(GRAD_LAYERS)} layers x 10 seeds", elapsed, 60)
    assert not failures, failures
    assert elapsed < 60


def test_criterion_2_probabilities(criterion, tiny_models):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    n = 1000
    for _ in range(n):
        v = rng.normal(scale=rng.uniform(0.1, 50), size=rng.integers(1, 12))
        s = softmax(v)
        assert abs(s.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(softmax(v + rng.normal(scale=100)), s, rtol=0, atol=1e-12)
    attn = SelfAttention(4, 3, np.random.default_rng(0))
    for _ in range(n):
        _, w = self_attention(rng.normal(scale=3, size=(rng.integers(1, 8), 4)), attn.params, return_weights=True)
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
    X = rng.uniform(-0.5, 1.5, size=(n, 6))
    for kind in MODELS:
        p = tiny_models[kind].predict_proba(X)
        assert p.shape == (n, 2) and np.all((p >= 0) & (p <= 1))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    elapsed = time.perf_counter() - t0
    criterion(2, elapsed < 10, f"{n} softmax, {n} attention, {n} x 3 predict_proba inputs", elapsed, 10)
    assert elapsed < 10


def _brute_force(preds, y):
    results = []
    for a, b, c in itertools.product(range(5), repeat=3):
        if a == b == c == 0:
            continue
        s = a / 10 * preds[0] + b / 10 * preds[1] + c / 10 * preds[2]
        results.append((float((np.where(s[:, 1] > s[:, 0], 1, 0) == y).mean()), (a / 10, b / 10, c / 10)))
    best = max(acc for acc, _ in results)
    return best, next(t for acc, t in results if acc == best), len(results)


def test_criteria_3_4_grid_search(criterion):
    t0 = time.perf_counter()
    mismatches, dominated = [], []
    for trial in range(20):
        rng = np.random.default_rng(1000 + trial)
        preds = [np.column_stack([1 - p, p]) for p in (rng.uniform(size=200) for _ in range(3))]
        y = rng.integers(0, 2, 200)
        trace = GridTrace()
        w = grid_search_weights(preds, y, trace=trace)
        best, first, size = _brute_force(preds, y)
        if size != 124 or len(trace) != 124 or w.accuracy != best or (w.alpha, w.beta, w.gamma) != first:
            mismatches.append(trial)
        singles = [float((np.argmax(p, axis=1) == y).mean()) for p in preds]
        if any(w.accuracy < s for s in singles):
            dominated.append(trial)
    elapsed = time.perf_counter() - t0
    criterion(3, not mismatches and elapsed < 5, f"20 trials, {len(mismatches)} oracle mismatches", elapsed, 5)
    criterion(4, not dominated, f"20 trials, {len(dominated)} below a base model", elapsed)
    assert not mismatches and not dominated
    assert elapsed < 5


def test_criterion_5_metrics(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(1, 80))
        yt, yp = rng.integers(0, 2, n), rng.integers(0, 2, n)
        tp = sum(int(a == 1 and b == 1) for a, b in zip(yt, yp))
        tn = sum(int(a == 0 and b == 0) for a, b in zip(yt, yp))
        fp = sum(int(a == 0 and b == 1) for a, b in zip(yt, yp))
        fn = n - tp - tn - fp
        frac = lambda a, b: Fraction(a, b) if b else Fraction(0)
        want = (frac(tp + tn, n), frac(tp, tp + fp), frac(tp, tp + fn), frac(2 * tp, 2 * tp + fp + fn))
        r = evaluate(yt, yp)
        got = (r.accuracy, r.precision, r.recall, r.f1)
        if (r.confusion.tp, r.confusion.tn, r.confusion.fp, r.confusion.fn) != (tp, tn, fp, fn) \
                or any(g != float(w) for g, w in zip(got, want)):
            bad += 1
    worked = compute_metrics(ConfusionMatrix(tp=50, tn=40, fp=5, fn=5))
    worked_ok = abs(worked.accuracy - 0.9) <= 1e-6 and all(
        abs(v - 0.909091) <= 1e-6 for v in (worked.precision, worked.recall, worked.f1))
    elapsed = time.perf_counter() - t0
    criterion(5, bad == 0 and worked_ok, f"1000 recounts, {bad} disagreements; worked case "
              f"{worked.accuracy:.6f}/{worked.precision:.6f}/{worked.recall:.6f}/{worked.f1:.6f}", elapsed)
    assert bad == 0 and worked_ok


def test_criterion_8_pipeline(criterion, tmp_path):
    t0 = time.perf_counter()
    ds = synth_generate(SynthSpec(n_rows=1000, seed=8))
    write_flow_csv(ds, tmp_path / "flows.csv")
    lines = (tmp_path / "flows.csv").read_text().splitlines()
    header, rows = lines[0], lines[1:]
    rng = np.random.default_rng(8)
    planted = [rows[i] for i in rng.choice(len(rows), 37, replace=False)]
    mixed = [(rows + planted)[i] for i in rng.permutation(len(rows) + len(planted))]
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "flows.csv").write_text("\n".join([header, *mixed]) + "\n")
    res = run_preprocess([raw], seed=8)
    X = res.train.X
    in_range = bool(np.isfinite(X).all() and X.min() >= 0.0 and X.max() <= 1.0)
    dedup_ok = res.report.duplicates_removed == 37 and res.report.rows_in == 1037

    # feeding the cleaned output back in changes nothing
    clean = tmp_path / "clean"
    clean.mkdir()
    labels = ["DrDoS_x" if v else "BENIGN" for v in res.train.y]
    with open(clean / "train.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*res.train.feature_names, "Label"])
        w.writerows([*map(repr, x.tolist()), lab] for x, lab in zip(X, labels))
    r2 = run_preprocess([clean], seed=8).report
    idem = (r2.duplicates_removed == 0 and not r2.nulls_imputed and not r2.infinities_replaced
            and not r2.columns_dropped and r2.rows_out == len(res.train))
    elapsed = time.perf_counter() - t0
    ok = in_range and dedup_ok and idem
    criterion(8, ok, f"range/finite {in_range}, planted 37 removed {res.report.duplicates_removed}, "
              f"idempotent {idem}", elapsed)
    assert ok


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """The full default-configuration run on 10,000 synthetic rows."""
    d = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    cli("synth", "--spec", json.dumps({"n_rows": 10_000, "separation": 4, "noise": 1, "seed": 42}),
        "--seed", 42, "--out", d / "raw" / "flows.csv")
    cli("preprocess", "--seed", 42, "--in", d / "raw", "--out", d / "data" / "ds.csv")
    cli("train", "--seed", 42, "--data", d / "data" / "ds.csv", "--out", d / "model" / "model.json")
    cli("evaluate", "--data", d / "data" / "ds.csv", "--model", d / "model" / "model.json", "--out", d / "eval")
    return d, time.perf_counter() - t0


def test_criterion_6_end_to_end(criterion, desk_run):
    d, elapsed = desk_run
    reports = {r["model"]: r for r in json.loads((d / "eval" / "metrics.json").read_text())["reports"]}
    acc = {k: float(v["accuracy"]) for k, v in reports.items()}
    cm = reports["ensemble"]["confusion"]
    n = cm["tp"] + cm["tn"] + cm["fp"] + cm["fn"]
    prior = max(cm["tp"] + cm["fn"], cm["tn"] + cm["fp"]) / n
    a = acc["ensemble"] >= 0.95
    b = acc["ensemble"] >= max(acc[k] for k in MODELS) - 0.01
    c = all(acc[k] >= prior + 0.40 for k in MODELS)
    ok = a and b and c and elapsed < 300
    detail = ", ".join(f"{k} {acc[k]:.4f}" for k in (*MODELS, "ensemble")) + f", prior {prior:.4f}"
    criterion(6, ok, detail, elapsed, 300)
    assert a and b and c
    assert elapsed < 300


def test_criterion_7_training_dynamics(criterion, desk_run):
    d, elapsed = desk_run
    report = json.loads((d / "model" / "train_report.json").read_text())
    epochs = report["config"]["train"]["epochs"]
    parts, ok = [], True
    for k in MODELS:
        s = report["base_models"][k]
        rows = (d / "model" / f"curves_{k}.csv").read_text().splitlines()[1:]
        ratio = s["final_train_loss"] / s["initial_train_loss"]
        ok &= ratio < 0.1 and len(rows) == epochs
        parts.append(f"{k} loss ratio {ratio:.4f}, {len(rows)}/{epochs} rows")
    criterion(7, ok, "; ".join(parts), elapsed)
    assert ok


def test_criterion_9_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "reduced.json"
    cfg.write_text(json.dumps({"train": {"epochs": 4}, "gbt": {"n_trees": 20}, "rf": {"n_trees": 20},
                               "meta": {"epochs": 4}}))
    # same working directory both times, so recorded input paths match too
    work = tmp_path / "work"
    runs = []
    for name in ("a", "b"):
        work.mkdir()
        cli("synth", "--spec", '{"n_rows": 2000}', "--seed", 9, "--out", "raw/flows.csv", cwd=work)
        cli("preprocess", "--seed", 9, "--in", "raw", "--out", "data/ds.csv", cwd=work)
        cli("train", "--config", cfg, "--seed", 9, "--data", "data/ds.csv", "--out", "model/m.json", cwd=work)
        cli("evaluate", "--data", "data/ds.csv", "--model", "model/m.json", "--out", "eval", cwd=work)
        runs.append(work.rename(tmp_path / name))
    files = sorted(p.relative_to(runs[0]) for p in runs[0].rglob("*") if p.is_file())
    differ = [str(f) for f in files if (runs[0] / f).read_bytes() != (runs[1] / f).read_bytes()]
    elapsed = time.perf_counter() - t0
    criterion(9, not differ and len(files) > 10, f"{len(files)} files compared, {len(differ)} differ", elapsed)
    assert not differ, differ
