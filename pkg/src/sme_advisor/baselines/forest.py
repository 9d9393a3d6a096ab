"""Random forest of axis-aligned CART trees (variance or Gini splits)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import ContractError, as_matrix, make_rng
from .config import ForestConfig

FOREST_STREAM = 21


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``value`` holds the leaf mean (regression, shape (n, 1)) or class
    frequencies (classification, shape (n, n_classes)).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_json(cls, doc: dict) -> "Tree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64), np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64), np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64),
        )


def _best_split(x: np.ndarray, Y: np.ndarray, classify: bool):
    """Lowest-impurity threshold on one feature; None if ``x`` is constant.

    ``Y`` is (n, 1) targets for regression or (n, k) one-hot rows.
    Impurity is the summed squared error (regression) or the count-weighted
    Gini index (classification) of the two children.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    Ys = Y[order]
    n = len(xs)
    n_left = np.arange(1, n)
    csum = np.cumsum(Ys, axis=0)[:-1]
    total = csum[-1] + Ys[-1]
    rsum = total - csum
    n_right = n - n_left
    if classify:
        # n * gini = n - sum(counts^2) / n
        cost = (n_left - np.sum(csum**2, axis=1) / n_left) + (n_right - np.sum(rsum**2, axis=1) / n_right)
    else:
        csq = np.cumsum(Ys[:, 0] ** 2)[:-1]
        tsq = csq[-1] + Ys[-1, 0] ** 2
        cost = (csq - csum[:, 0] ** 2 / n_left) + ((tsq - csq) - rsum[:, 0] ** 2 / n_right)
    cost = np.where(valid, cost, np.inf)
    i = int(np.argmin(cost))
    return float(cost[i]), float((xs[i] + xs[i + 1]) / 2.0)


def _n_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    return max(1, min(d, int(max_features)))


def build_tree(X: np.ndarray, Y: np.ndarray, classify: bool, max_depth: int | None,
               max_features, rng: np.random.Generator) -> Tree:
    """Grow one tree depth-first.

    Each split draws a feature subset; if none of those features can split
    the node, the remaining features are tried before giving up.
    """
    d = X.shape[1]
    k = _n_features(max_features, d)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(Y[rows].mean(axis=0))
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        Yn = Y[rows]
        if np.all(Yn == Yn[0]):
            continue
        if not classify:
            Yn = Yn - Yn.mean(axis=0)
        perm = rng.permutation(d)
        best = None
        for candidates in (perm[:k], perm[k:]):
            for f in candidates:
                found = _best_split(X[rows, f], Yn, classify)
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], f, found[1])
            if best is not None:
                break
        if best is None:
            continue
        _, f, thr = best
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = int(f), thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    return Tree(
        np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64).reshape(len(value), -1),
    )


@dataclass
class ForestModel:
    trees: list[Tree]
    head_kind: str
    n_classes: int = 0
    config: ForestConfig = field(default_factory=ForestConfig)

    @property
    def classify(self) -> bool:
        return self.head_kind != "regression"

    def vote_fractions(self, X) -> np.ndarray:
        """(n, n_classes) share of trees voting for each class."""
        X = as_matrix(X, "X")
        votes = np.zeros((X.shape[0], self.n_classes))
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            votes[rows, np.argmax(tree.leaf_values(X), axis=1)] += 1.0
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        """Mean of tree outputs (regression) or majority class, ties to the lower index."""
        if not self.classify:
            X = as_matrix(X, "X")
            return np.mean([t.leaf_values(X)[:, 0] for t in self.trees], axis=0)
        return np.argmax(self.vote_fractions(X), axis=1)

    def predict_proba(self, X) -> np.ndarray:
        """P(class 1) for binary forests, as the share of trees voting 1."""
        if self.head_kind != "binary":
            raise ContractError("predict_proba is defined for binary forests")
        return self.vote_fractions(X)[:, 1]

    def to_json(self) -> dict:
        return {"trees": [t.to_json() for t in self.trees], "head_kind": self.head_kind, "n_classes": self.n_classes}

    @classmethod
    def from_json(cls, doc: dict, config: ForestConfig = ForestConfig()) -> "ForestModel":
        return cls([Tree.from_json(t) for t in doc["trees"]], doc["head_kind"], doc["n_classes"], config)


def train_forest(X, targets, head_kind: str = "regression", cfg: ForestConfig = ForestConfig()) -> ForestModel:
    X = as_matrix(X, "X")
    y = np.asarray(targets, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise ContractError("a forest needs at least two instances")
    if y.shape != (m,):
        raise ContractError(f"{m} instances but targets of shape {y.shape}")
    if head_kind == "regression":
        Y, n_classes = y[:, None], 0
    else:
        n_classes = 2 if head_kind == "binary" else 3
        if not np.all(np.isin(y, np.arange(n_classes))):
            raise ContractError(f"{head_kind} targets must be class indices below {n_classes}")
        Y = np.eye(n_classes)[y.astype(np.int64)]

    trees = []
    for t in range(cfg.n_trees):
        rng = make_rng(cfg.seed, FOREST_STREAM, t)
        rows = rng.integers(0, m, size=m) if cfg.bootstrap else np.arange(m)
        trees.append(build_tree(X[rows], Y[rows], head_kind != "regression", cfg.max_depth, cfg.max_features, rng))
    return ForestModel(trees, head_kind, n_classes, cfg)
