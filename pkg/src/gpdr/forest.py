"""From-scratch random forest classifier (axis-aligned splits, Gini
impurity, bootstrap sampling, sqrt-p feature subsets, grown to purity)
and balanced accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

MIN_SPLIT = 2


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_TreeNode"] = None
    right: Optional["_TreeNode"] = None
    counts: Optional[np.ndarray] = None  # leaf class distribution

    def is_leaf(self) -> bool:
        return self.left is None


def _gini_best_split(X, y, feat_candidates, n_classes):
    """Best (feature, threshold, gain) over the candidate features.

    Uses class-count prefix sums over the sorted column, so each feature
    costs O(n log n).
    """
    n = y.size
    counts_total = np.bincount(y, minlength=n_classes).astype(np.float64)
    parent_gini = 1.0 - np.sum((counts_total / n) ** 2)
    best = (None, 0.0, 0.0)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for f in feat_candidates:
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        prefix = np.cumsum(onehot[order], axis=0)  # (n, c)
        # split after position i (left = first i+1 rows); need distinct values
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        nl = (valid + 1).astype(np.float64)
        nr = n - nl
        left_counts = prefix[valid]
        right_counts = counts_total - left_counts
        gini_l = 1.0 - np.sum((left_counts / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right_counts / nr[:, None]) ** 2, axis=1)
        score = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(score))
        gain = parent_gini - score[i]
        if gain > best[2] + 1e-15:
            thr = 0.5 * (xs[valid[i]] + xs[valid[i] + 1])
            best = (f, thr, gain)
    return best


def _build_tree(X, y, n_classes, max_features, rng):
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    if y.size < MIN_SPLIT or np.count_nonzero(counts) == 1:
        return _TreeNode(counts=counts)
    feats = rng.choice(X.shape[1], size=max_features, replace=False)
    f, thr, gain = _gini_best_split(X, y, feats, n_classes)
    if f is None or gain <= 0.0:
        return _TreeNode(counts=counts)
    mask = X[:, f] <= thr
    return _TreeNode(
        feature=int(f),
        threshold=float(thr),
        left=_build_tree(X[mask], y[mask], n_classes, max_features, rng),
        right=_build_tree(X[~mask], y[~mask], n_classes, max_features, rng),
    )


def _predict_tree(node: _TreeNode, X: np.ndarray) -> np.ndarray:
    """Class-count votes, shape (n, c)."""
    if node.is_leaf():
        dist = node.counts / node.counts.sum()
        return np.tile(dist, (X.shape[0], 1))
    mask = X[:, node.feature] <= node.threshold
    left = _predict_tree(node.left, X[mask])
    right = _predict_tree(node.right, X[~mask])
    out = np.empty((X.shape[0], left.shape[1]))
    out[mask] = left
    out[~mask] = right
    return out


@dataclass
class RandomForest:
    trees: list
    n_classes: int
    seed: int

    def predict_proba(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        votes = np.zeros((rows.shape[0], self.n_classes))
        for t in self.trees:
            votes += _predict_tree(t, rows)
        return votes / len(self.trees)

    def predict(self, rows: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(rows), axis=1)


def rf_fit(X, y, trees: int = 100, seed: int = 0) -> RandomForest:
    """Bootstrap-sampled trees with sqrt(p) feature candidates per split."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    n_classes = int(y.max()) + 1
    if len(np.unique(y)) == 1:
        # degenerate single-class data: a constant predictor, flagged by
        # the forest having one pure leaf
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        return RandomForest([_TreeNode(counts=counts)], n_classes, seed)
    rng = np.random.default_rng(seed)
    max_features = max(1, int(math.sqrt(X.shape[1])))
    forest = []
    n = X.shape[0]
    for _ in range(trees):
        boot = rng.integers(n, size=n)
        forest.append(
            _build_tree(X[boot], y[boot], n_classes, max_features, rng)
        )
    return RandomForest(forest, n_classes, seed)


def rf_predict(rf: RandomForest, rows: np.ndarray) -> np.ndarray:
    return rf.predict(rows)


def balanced_accuracy(y_true, y_pred) -> float:
    """Mean per-class recall."""
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    recalls = []
    for c in np.unique(y_true):
        mask = y_true == c
        recalls.append(float(np.mean(y_pred[mask] == c)))
    if not recalls:
        raise ValueError("no classes present in y_true")
    return float(np.mean(recalls))
