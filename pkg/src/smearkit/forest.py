"""Random-forest classifier with class weighting, built from scratch.

Trees are grown on bootstrap samples with axis-aligned, Gini-minimizing
splits over a random feature subset per node.  Candidate thresholds are the
midpoints between consecutive sorted unique feature values, so the split
search is exhaustive for the drawn features.  Class weights (mode
``"balanced"`` or an explicit map) enter both the impurity and the leaf
distributions, which is how the ensemble counters class imbalance.

Training is deterministic: tree t draws all of its randomness from the
model seed and the tree index, so a parallel build would produce the same
forest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from smearkit import _kernels

MODEL_FORMAT = "smearkit-forest"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """A model file is corrupt, truncated, or from an incompatible version."""


@dataclass(frozen=True)
class ForestParams:
    """Training hyperparameters; defaults follow common random-forest practice."""

    n_trees: int = 1000
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None   # None: ceil(sqrt(n_features))
    class_weight: object = None             # None | "balanced" | {label: weight}
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if isinstance(self.class_weight, str) and self.class_weight != "balanced":
            raise ValueError(f"class_weight mode {self.class_weight!r} not recognized")
        if isinstance(self.class_weight, dict):
            for label, weight in self.class_weight.items():
                if weight <= 0:
                    raise ValueError(f"class weight for {label!r} must be positive")


@dataclass(eq=False)
class _Tree:
    feature: np.ndarray      # (nodes,) int32, -1 marks a leaf
    threshold: np.ndarray    # (nodes,) float64
    left: np.ndarray         # (nodes,) int32
    right: np.ndarray        # (nodes,) int32
    leaf_dist: np.ndarray    # (nodes, classes) float64 weighted counts, zeros inside


@dataclass(eq=False)
class ForestModel:
    """A trained ensemble: trees, the class list, and the parameter snapshot."""

    classes: tuple
    n_features: int
    trees: list
    params: ForestParams


def class_weight_values(y_codes: np.ndarray, n_classes: int, mode, classes) -> np.ndarray:
    """Per-class weight vector for the requested weighting mode.

    ``"balanced"`` gives total / (n_classes * class_count); absent classes
    get weight 0 (they carry no samples).  A dict maps labels to explicit
    positive weights, defaulting to 1.0 for unlisted classes.
    """
    if mode is None:
        return np.ones(n_classes, dtype=np.float64)
    counts = np.bincount(y_codes, minlength=n_classes).astype(np.float64)
    if mode == "balanced":
        weights = np.zeros(n_classes, dtype=np.float64)
        present = counts > 0
        weights[present] = counts.sum() / (n_classes * counts[present])
        return weights
    if isinstance(mode, dict):
        return np.array([float(mode.get(label, 1.0)) for label in classes], dtype=np.float64)
    raise ValueError(f"unsupported class_weight {mode!r}")


def best_split(X: np.ndarray, y_codes: np.ndarray, sample_weight: np.ndarray,
               feature_ids, n_classes: int, min_leaf: int = 1):
    """Exhaustive best weighted-Gini split among the candidate features.

    Returns (feature, threshold, impurity) or None when no feature admits a
    valid split.  Thresholds are midpoints of consecutive distinct sorted
    values; ties resolve to the earliest candidate feature, then to the
    smallest threshold.
    """
    best = None
    for f in feature_ids:
        values = X[:, f]
        order = np.argsort(values, kind="stable")
        sorted_values = values[order]
        k, score = _kernels.scan_split(
            sorted_values,
            y_codes[order].astype(np.int32),
            sample_weight[order],
            n_classes,
            min_leaf,
        )
        if k >= 0 and (best is None or score < best[2]):
            threshold = 0.5 * (sorted_values[k - 1] + sorted_values[k])
            best = (int(f), float(threshold), float(score))
    return best


def _grow_tree(X, y_codes, sample_weight, n_classes, max_features, params, rng) -> _Tree:
    n_features = X.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    dists: list[np.ndarray] = []

    def make_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        dists.append(np.zeros(n_classes, dtype=np.float64))
        return len(feature) - 1

    def build(indices: np.ndarray, depth: int) -> int:
        node = make_node()
        codes = y_codes[indices]
        dist = np.bincount(codes, weights=sample_weight[indices], minlength=n_classes)
        pure = bool((codes == codes[0]).all())
        splittable = (
            not pure
            and indices.size >= 2 * params.min_samples_leaf
            and (params.max_depth is None or depth < params.max_depth)
        )
        split = None
        if splittable:
            feats = rng.choice(n_features, size=max_features, replace=False)
            split = best_split(X[indices], codes, sample_weight[indices],
                               feats, n_classes, params.min_samples_leaf)
        if split is not None:
            f, t, _ = split
            go_left = X[indices, f] <= t
            if go_left.all() or not go_left.any():
                split = None          # midpoint degenerated onto a value
        if split is None:
            dists[node] = dist
            return node
        f, t, _ = split
        feature[node] = f
        threshold[node] = t
        go_left = X[indices, f] <= t
        left[node] = build(indices[go_left], depth + 1)
        right[node] = build(indices[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return _Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        leaf_dist=np.vstack(dists),
    )


def train_forest(X, y, params: ForestParams, classes=None) -> ForestModel:
    """Fit a random forest on feature rows X and labels y.

    ``classes`` fixes the class order (used for tie-breaking and output
    columns); by default classes appear in order of first occurrence in y.
    Deterministic for given (X, y, params).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    y = list(y)
    if len(y) != X.shape[0]:
        raise ValueError(f"got {X.shape[0]} feature rows but {len(y)} labels")
    if len(y) < 2:
        raise ValueError("need at least 2 training samples")
    if classes is None:
        classes = tuple(dict.fromkeys(y))
    else:
        classes = tuple(classes)
        missing = set(y) - set(classes)
        if missing:
            raise ValueError(f"labels {sorted(map(str, missing))} not in the declared classes")
    index = {label: i for i, label in enumerate(classes)}
    y_codes = np.array([index[label] for label in y], dtype=np.int64)
    n, n_features = X.shape
    n_classes = len(classes)
    per_class = class_weight_values(y_codes, n_classes, params.class_weight, classes)
    sample_weight = per_class[y_codes]
    max_features = params.features_per_split or math.ceil(math.sqrt(n_features))
    max_features = min(max(max_features, 1), n_features)

    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=params.seed, spawn_key=(t,)))
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[boot], y_codes[boot], sample_weight[boot],
                                n_classes, max_features, params, rng))
    return ForestModel(classes=classes, n_features=n_features, trees=trees, params=params)


def _apply_tree(tree: _Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(X.shape[0], dtype=np.intp)
    active = np.nonzero(tree.feature[node] >= 0)[0]
    while active.size:
        current = node[active]
        go_left = X[active, tree.feature[current]] <= tree.threshold[current]
        node[active] = np.where(go_left, tree.left[current], tree.right[current])
        active = active[tree.feature[node[active]] >= 0]
    return node


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Per-class probabilities: mean of the normalized leaf distributions."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected (n, {model.n_features}) features, got shape {X.shape}")
    probs = np.zeros((X.shape[0], len(model.classes)), dtype=np.float64)
    for tree in model.trees:
        dist = tree.leaf_dist[_apply_tree(tree, X)]
        probs += dist / dist.sum(axis=1, keepdims=True)
    return probs / len(model.trees)


def predict(model: ForestModel, x) -> tuple:
    """Classify one feature vector; returns (label, per-class probabilities).

    The label is the argmax of the mean leaf distributions, ties broken by
    class declaration order; probabilities sum to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single feature vector, got shape {x.shape}")
    probs = predict_proba(model, x[None, :])[0]
    return model.classes[int(np.argmax(probs))], probs


def predict_labels(model: ForestModel, X) -> list:
    probs = predict_proba(model, X)
    return [model.classes[i] for i in np.argmax(probs, axis=1)]


# ---------------------------------------------------------------------------
# model persistence: versioned JSON tree dump


def save_model(model: ForestModel) -> bytes:
    params = model.params
    weight = params.class_weight
    if isinstance(weight, dict):
        weight = {"explicit": [[label, value] for label, value in weight.items()]}
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "classes": list(model.classes),
        "n_features": model.n_features,
        "params": {
            "n_trees": params.n_trees,
            "max_depth": params.max_depth,
            "min_samples_leaf": params.min_samples_leaf,
            "features_per_split": params.features_per_split,
            "class_weight": weight,
            "seed": params.seed,
        },
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "leaf_dist": tree.leaf_dist.tolist(),
            }
            for tree in model.trees
        ],
    }
    return json.dumps(payload).encode("utf-8")


def load_model(data) -> ForestModel:
    """Load a model saved by save_model; predictions round-trip exactly."""
    try:
        payload = json.loads(data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a forest model file")
    version = payload.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"model version {version!r} unsupported (expected {MODEL_VERSION})")
    try:
        raw_weight = payload["params"]["class_weight"]
        if isinstance(raw_weight, dict):
            raw_weight = {label: value for label, value in raw_weight["explicit"]}
        params = ForestParams(
            n_trees=payload["params"]["n_trees"],
            max_depth=payload["params"]["max_depth"],
            min_samples_leaf=payload["params"]["min_samples_leaf"],
            features_per_split=payload["params"]["features_per_split"],
            class_weight=raw_weight,
            seed=payload["params"]["seed"],
        )
        trees = [
            _Tree(
                feature=np.array(raw["feature"], dtype=np.int32),
                threshold=np.array(raw["threshold"], dtype=np.float64),
                left=np.array(raw["left"], dtype=np.int32),
                right=np.array(raw["right"], dtype=np.int32),
                leaf_dist=np.array(raw["leaf_dist"], dtype=np.float64),
            )
            for raw in payload["trees"]
        ]
        model = ForestModel(
            classes=tuple(payload["classes"]),
            n_features=int(payload["n_features"]),
            trees=trees,
            params=params,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    if not model.trees:
        raise ModelFormatError("model file contains no trees")
    return model
