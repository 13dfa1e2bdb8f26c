"""Weighted soft voting and the exhaustive weight grid.

Three fake base models of different quality vote on a tuning set.  The grid
scores all 124 (alpha, beta, gamma) tuples and keeps the first best one.

    python3 demos/02_weight_search.py
"""
import numpy as np

from ddos_ensemble.ensemble import GridSpec, GridTrace, grid_search_weights, weighted_labels

rng = np.random.default_rng(7)
n = 400
y = rng.integers(0, 2, n)


def noisy_model(flip_rate):
    # probability of the true class, with some rows confidently wrong
    p = np.clip(np.where(y == 1, 0.8, 0.2) + rng.normal(scale=0.15, size=n), 0.01, 0.99)
    flip = rng.uniform(size=n) < flip_rate
    p = np.where(flip, 1 - p, p)
    return np.column_stack([1 - p, p])


preds = [noisy_model(r) for r in (0.12, 0.08, 0.20)]
for name, p in zip(("model 1", "model 2", "model 3"), preds):
    print(f"{name}: accuracy {np.mean(p.argmax(1) == y):.4f}")

trace = GridTrace()
w = grid_search_weights(preds, y, GridSpec(), trace=trace)
print(f"\nsearched {len(trace)} tuples")
print(f"best weights alpha={w.alpha} beta={w.beta} gamma={w.gamma}  accuracy {w.accuracy:.4f}")

# rows sharing the best accuracy; the earliest in grid order wins
ties = [r for r in trace.rows if r[3] == w.accuracy]
print(f"{len(ties)} tuple(s) reach it, first is {ties[0][:3]}")

# scaling a single model's weight never changes its labels
same = np.array_equal(weighted_labels(preds, (0, 0.1, 0)), weighted_labels(preds, (0, 0.4, 0)))
print("single-model scale invariance:", same)

fine = GridSpec.from_max(0.05, 0.4)
print(f"\na finer grid (step 0.05) has {fine.size} tuples:",
      grid_search_weights(preds, y, fine).to_dict())
