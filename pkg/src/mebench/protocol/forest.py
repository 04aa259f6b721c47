"""Self-contained random forest: bagged CART trees with Gini splits.

Split candidates are midpoints between consecutive distinct sorted
feature values; the split minimizing the weighted Gini impurity wins,
scanning features in ascending index order and thresholds in ascending
order with strict improvement, so the choice is deterministic and
invariant under duplicating every training sample. Prediction is a
majority vote over trees (ties resolve to the lowest class index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..runutil import derived_rng


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2
    feature_subsample: str = "sqrt"  # "sqrt" or "all"
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ConfigError("n_trees, max_depth, min_leaf must all be >= 1")
        if self.feature_subsample not in ("sqrt", "all"):
            raise ConfigError("feature_subsample must be 'sqrt' or 'all'")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "feature_subsample": self.feature_subsample,
            "bootstrap": self.bootstrap,
        }


@dataclass
class _Node:
    prediction: int
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class ForestModel:
    trees: list
    n_classes: int
    config: ForestConfig


def _gini(class_counts: np.ndarray) -> float:
    total = class_counts.sum()
    if total == 0:
        return 0.0
    p = class_counts / total
    return 1.0 - float((p * p).sum())


def _majority(class_counts: np.ndarray) -> int:
    return int(np.argmax(class_counts))  # argmax takes the lowest index on ties


def _best_split(x: np.ndarray, y: np.ndarray, feature_ids: np.ndarray, n_classes: int):
    """Scan candidate midpoints; returns (impurity, feature, threshold) or None."""
    n = y.size
    best = None
    for feature in feature_ids:
        values = x[:, feature]
        order = np.argsort(values, kind="stable")
        sorted_vals = values[order]
        sorted_y = y[order]
        # prefix class counts: counts_left[i] = counts of first i samples
        onehot = np.zeros((n, n_classes), dtype=np.int64)
        onehot[np.arange(n), sorted_y] = 1
        prefix = np.cumsum(onehot, axis=0)
        distinct = np.nonzero(sorted_vals[:-1] < sorted_vals[1:])[0]  # split after index i
        for i in distinct:
            left = prefix[i]
            right = prefix[-1] - left
            n_left = i + 1
            n_right = n - n_left
            impurity = (n_left * _gini(left) + n_right * _gini(right)) / n
            threshold = 0.5 * (sorted_vals[i] + sorted_vals[i + 1])
            if best is None or impurity < best[0] - 1e-15:
                best = (impurity, int(feature), float(threshold))
    return best


def _grow(x, y, n_classes, config: ForestConfig, rng, depth: int) -> _Node:
    counts = np.bincount(y, minlength=n_classes)
    node = _Node(prediction=_majority(counts))
    if depth >= config.max_depth or y.size < 2 * config.min_leaf or _gini(counts) == 0.0:
        return node
    n_features = x.shape[1]
    if config.feature_subsample == "sqrt":
        k = max(1, int(np.sqrt(n_features)))
        feature_ids = np.sort(rng.choice(n_features, size=k, replace=False))
    else:
        feature_ids = np.arange(n_features)
    best = _best_split(x, y, feature_ids, n_classes)
    if best is None:
        return node
    _, feature, threshold = best
    mask = x[:, feature] < threshold
    if mask.sum() < config.min_leaf or (~mask).sum() < config.min_leaf:
        return node
    node.feature = feature
    node.threshold = threshold
    node.left = _grow(x[mask], y[mask], n_classes, config, rng, depth + 1)
    node.right = _grow(x[~mask], y[~mask], n_classes, config, rng, depth + 1)
    return node


def forest_train(features: np.ndarray, labels: np.ndarray, config: ForestConfig, seed: int) -> ForestModel:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError(f"features must be a non-empty (n, d) matrix, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise DataError(f"labels shape {y.shape} inconsistent with {x.shape[0]} samples")
    n_classes = int(y.max()) + 1
    trees = []
    n = x.shape[0]
    for tree_index in range(config.n_trees):
        rng = derived_rng(seed, "tree", tree_index)
        if config.bootstrap:
            idx = rng.integers(0, n, size=n)
            trees.append(_grow(x[idx], y[idx], n_classes, config, rng, 0))
        else:
            trees.append(_grow(x, y, n_classes, config, rng, 0))
    return ForestModel(trees=trees, n_classes=n_classes, config=config)


def _predict_tree(node: _Node, row: np.ndarray) -> int:
    while not node.is_leaf:
        node = node.left if row[node.feature] < node.threshold else node.right
    return node.prediction


def forest_predict(model: ForestModel, feature: np.ndarray) -> int:
    row = np.asarray(feature, dtype=np.float64)
    votes = np.zeros(model.n_classes, dtype=np.int64)
    for tree in model.trees:
        votes[_predict_tree(tree, row)] += 1
    return int(np.argmax(votes))


def forest_predict_batch(model: ForestModel, features: np.ndarray) -> np.ndarray:
    return np.array([forest_predict(model, row) for row in np.asarray(features, dtype=np.float64)])
