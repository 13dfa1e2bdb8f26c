"""Gradient-boosted trees (second-order logistic boosting) and a Gini random forest.

Both learners use exact greedy split search: candidate thresholds are the
midpoints between consecutive distinct sorted values, ``x <= threshold``
goes left, and equal-gain candidates resolve to the lowest feature index,
then the lowest threshold.
"""
from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _tree_kernels as K
from .errors import EmptyInputError, GeometryError
from .nn.functional import sigmoid

LEAF = -1
# base-score clamp for single-class training sets
PRIOR_EPS = 1e-6


@dataclass
class DecisionTree:
    """Flat node arrays. ``feature == -1`` marks a leaf.

    ``value`` is (n_nodes, 1) raw leaf scores for boosted trees and
    (n_nodes, 2) class counts for forest trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def validate(self):
        n = self.n_nodes
        internal = np.flatnonzero(self.feature != LEAF)
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if np.any((kids < 0) | (kids >= n)):
            raise GeometryError("child index out of range")
        # nodes are emitted parent-before-child, which rules out cycles
        if np.any(self.left[internal] <= internal) or np.any(self.right[internal] <= internal):
            raise GeometryError("tree contains a backward edge")
        if len(np.unique(kids)) != len(kids):
            raise GeometryError("node has two parents")

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64).reshape(len(d["feature"]), -1),
            d.get("max_depth"),
        )


class _TreeBuilder:
    def __init__(self, width: int):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self.width = width

    def add(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append([0.0] * self.width)
        return len(self.feature) - 1

    def build(self, max_depth) -> DecisionTree:
        return DecisionTree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64).reshape(-1, self.width),
            max_depth,
        )


def _midpoint(lo: float, hi: float) -> float:
    mid = lo + (hi - lo) / 2.0
    # adjacent floats: keep hi on the right-hand side
    return lo if mid >= hi else mid


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise GeometryError(f"feature matrix must be 2-D, got shape {X.shape}")
    if len(X) != len(y):
        raise GeometryError(f"{len(X)} rows but {len(y)} labels")
    if len(X) == 0:
        raise EmptyInputError("cannot train on zero rows")
    return X, y


def _check_width(X, width: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None] if single else X
    if X2.shape[1] != width:
        raise GeometryError(f"model expects {width} features, got {X2.shape[1]}")
    return X2


# --------------------------------------------------------------------- boosting


@dataclass
class GBTModel:
    trees: list[DecisionTree]
    learning_rate: float
    base_score: float
    n_features: int
    hyper: dict = field(default_factory=dict)
    train_loss: list[float] = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        X2 = _check_width(X, self.n_features)
        score = np.full(len(X2), self.base_score)
        for tree in self.trees:
            score += self.learning_rate * tree.value[tree.apply(X2), 0]
        return score

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "hyper": self.hyper,
            "train_loss": self.train_loss,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GBTModel":
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], d["learning_rate"],
                   d["base_score"], d["n_features"], d.get("hyper", {}), d.get("train_loss", []))


GBT_DEFAULTS = {"n_trees": 100, "max_depth": 4, "learning_rate": 0.1, "lambda": 1.0,
                "min_child_weight": 1.0}


def logistic_loss(y: np.ndarray, score: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def train_gbt(X, y, **hyper) -> GBTModel:
    """Fit a boosted ensemble of regression trees to logistic-loss gradients.

    Each round computes g = p - y and h = p(1 - p), grows a tree by exact
    greedy search on the gain GL^2/(HL+λ) + GR^2/(HR+λ) - G^2/(H+λ), and
    sets leaf values to -G/(H+λ).
    """
    unknown = set(hyper) - set(GBT_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown gbt hyperparameters: {sorted(unknown)}")
    hp = {**GBT_DEFAULTS, **hyper}
    X, y = _check_xy(X, y)
    n, width = X.shape
    prior = float(np.clip(y.mean(), PRIOR_EPS, 1.0 - PRIOR_EPS))
    base = float(np.log(prior / (1.0 - prior)))
    model = GBTModel([], float(hp["learning_rate"]), base, width, hp)
    score = np.full(n, base)
    model.train_loss.append(logistic_loss(y, score))
    if np.all(y == y[0]):
        return model
    order = np.argsort(X, axis=0, kind="stable").T.copy()  # (F, N) presorted index lists
    sorted_vals = np.take_along_axis(X.T, order, axis=1)
    for _ in range(int(hp["n_trees"])):
        p = sigmoid(score)
        g, h = p - y, p * (1.0 - p)
        tree = _grow_boosted_tree(X, order, sorted_vals, g, h, hp)
        model.trees.append(tree)
        score += model.learning_rate * tree.value[tree.apply(X), 0]
        model.train_loss.append(logistic_loss(y, score))
    return model


def _grow_boosted_tree(X, order, sorted_vals, g, h, hp) -> DecisionTree:
    lam = float(hp["lambda"])
    mcw = float(hp["min_child_weight"])
    max_depth = hp["max_depth"]
    go_left = np.zeros(X.shape[0], dtype=np.bool_)
    builder = _TreeBuilder(1)
    root = builder.add()
    queue = deque([(root, order, sorted_vals, 0)])
    while queue:
        node, lists, vals, depth = queue.popleft()
        G, H = K.node_stats(lists[0], g, h)
        builder.value[node] = [-G / (H + lam)]
        m = lists.shape[1]
        if (max_depth is not None and depth >= max_depth) or m < 2:
            continue
        gain, f, pos = K.boosted_best_split(lists, vals, g, h, lam, mcw)
        if f < 0 or not gain > 1e-12:
            continue
        thr = _midpoint(vals[f, pos], vals[f, pos + 1])
        go_left[lists[f]] = False
        go_left[lists[f, : pos + 1]] = True
        ll, lv, rl, rv = K.partition(lists, vals, go_left, pos + 1)
        left, right = builder.add(), builder.add()
        builder.feature[node], builder.threshold[node] = int(f), thr
        builder.left[node], builder.right[node] = left, right
        queue.append((left, ll, lv, depth + 1))
        queue.append((right, rl, rv, depth + 1))
    return builder.build(max_depth)


def predict_gbt(model: GBTModel, x) -> np.ndarray:
    """[p_safe, p_ddos] for one feature vector, or (N, 2) for a matrix."""
    p = sigmoid(model.decision_function(x))
    out = np.stack([1.0 - p, p], axis=-1)
    return out[0] if np.ndim(x) == 1 else out


# ----------------------------------------------------------------------- forest


@dataclass
class RFModel:
    trees: list[DecisionTree]
    seeds: list[int]
    n_features: int
    hyper: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": "rf", "seeds": list(self.seeds), "n_features": self.n_features,
                "hyper": self.hyper, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RFModel":
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], list(d["seeds"]),
                   d["n_features"], d.get("hyper", {}))


RF_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_leaf": 1, "feature_subsample": "sqrt",
               "seed": 0, "bootstrap": True, "threads": 1}


def _n_candidate_features(spec, width: int) -> int:
    if spec in (None, "sqrt"):
        return max(1, int(np.sqrt(width)))
    if spec == "all":
        return width
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, int(spec * width))
    return max(1, min(width, int(spec)))


def train_rf(X, y, **hyper) -> RFModel:
    """Bagged Gini trees; every node draws a fresh random feature subset.

    If none of the drawn features admits an impurity-reducing split the
    remaining features are tried in the same random order before the node
    is made a leaf.
    """
    unknown = set(hyper) - set(RF_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown rf hyperparameters: {sorted(unknown)}")
    hp = {**RF_DEFAULTS, **hyper}
    X, y = _check_xy(X, y)
    yi = y.astype(np.int64)
    seeds = np.random.default_rng(int(hp["seed"])).integers(0, 2**31 - 1, size=int(hp["n_trees"])).tolist()
    k = _n_candidate_features(hp["feature_subsample"], X.shape[1])

    def grow(s):
        return _grow_gini_tree(X, yi, np.random.default_rng(s), hp["max_depth"], int(hp["min_leaf"]),
                               k, bool(hp["bootstrap"]))

    threads = int(hp.get("threads") or 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    stored = {k_: v for k_, v in hp.items() if k_ != "threads"}
    return RFModel(trees, seeds, X.shape[1], stored)


def _grow_gini_tree(X, y, rng, max_depth, min_leaf, k, bootstrap) -> DecisionTree:
    n, width = X.shape
    idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    builder = _TreeBuilder(2)
    root = builder.add()
    yf = y.astype(np.float64)
    queue = deque([(root, idx, 0)])
    while queue:
        node, members, depth = queue.popleft()
        ys = y[members]
        pos = int(ys.sum())
        m = len(members)
        builder.value[node] = [float(m - pos), float(pos)]
        if pos == 0 or pos == m or m < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        parent = m - (pos ** 2 + (m - pos) ** 2) / m
        perm = rng.permutation(width)
        found = None
        for start in range(0, width, k):
            feats = np.sort(perm[start: start + k])
            score, f, lo, hi = K.gini_best_split(X, members, feats, yf, min_leaf)
            if f >= 0 and score < parent - 1e-12:
                found = (f, lo, hi)
                break
        if found is None:
            continue
        f, lo, hi = found
        thr = _midpoint(lo, hi)
        go_left = X[members, f] <= thr
        left, right = builder.add(), builder.add()
        builder.feature[node], builder.threshold[node] = int(f), thr
        builder.left[node], builder.right[node] = left, right
        queue.append((left, members[go_left], depth + 1))
        queue.append((right, members[~go_left], depth + 1))
    return builder.build(max_depth)


def predict_rf(model: RFModel, x) -> np.ndarray:
    """Mean over trees of the reached leaf's class frequencies."""
    X2 = _check_width(x, model.n_features)
    total = np.zeros((len(X2), 2))
    for tree in model.trees:
        counts = tree.value[tree.apply(X2)]
        total += counts / counts.sum(axis=1, keepdims=True)
    out = total / len(model.trees)
    out[:, 0] = 1.0 - out[:, 1]
    return out[0] if np.ndim(x) == 1 else out
