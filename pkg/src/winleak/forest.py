"""Random forest (CART, Gini) and a k-nearest-neighbour reference model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _cart
from .core import ConfigError, InvariantError

MODEL_FORMAT_VERSION = 1
_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def tree_seed(seed: int, tree_index: int) -> int:
    """Per-tree seed: splitmix64 of the forest seed xor the tree index."""
    return splitmix64((seed & _MASK64) ^ tree_index)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 20
    min_leaf: int = 2
    max_features: str | int = "sqrt"  # "sqrt" -> ceil(sqrt(F)), "all", or a count
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ConfigError("max_depth must be >= 0 and min_leaf >= 1")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        if self.max_features == "all":
            return n_features
        return max(1, min(int(self.max_features), n_features))


@dataclass
class Tree:
    """Flat array form: node i is a leaf when ``feature[i] == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training class counts per node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(int(self.left[node])), self.depth(int(self.right[node])))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] >= 0]
        return node

    def leaf_class(self) -> np.ndarray:
        # argmax takes the lowest class id on ties
        return np.argmax(self.counts, axis=1)

    def to_node_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"counts": [int(c) for c in self.counts[node]]}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_node_dict(int(self.left[node])),
            "right": self.to_node_dict(int(self.right[node])),
        }

    @classmethod
    def from_node_dict(cls, root: dict, n_classes: int) -> "Tree":
        feature, threshold, left, right, counts = [], [], [], [], []

        def visit(d: dict) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append(np.zeros(n_classes, dtype=np.int64))
            if "counts" in d:
                counts[i] = np.asarray(d["counts"], dtype=np.int64)
            else:
                feature[i] = int(d["feature"])
                threshold[i] = float(d["threshold"])
                left[i] = visit(d["left"])
                right[i] = visit(d["right"])
                counts[i] = counts[left[i]] + counts[right[i]]
            return i

        visit(root)
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(counts, dtype=np.int64).reshape(len(feature), n_classes),
        )


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    seed: int = 0,
    n_classes: int | None = None,
) -> Tree:
    """Grow one CART tree greedily top-down.

    At each node ``features_per_split`` of the node's non-constant features
    are drawn (partial Fisher-Yates on a splitmix64 stream seeded by
    ``seed``) and scanned for the midpoint threshold with the largest Gini
    decrease. Ties go to the lower feature index, then the lower threshold.
    Growth stops at ``max_depth``, below ``2 * min_leaf`` samples, at zero
    impurity, or when no cut leaves ``min_leaf`` samples on both sides.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise ConfigError("need a non-empty 2-D feature matrix with one label per row")
    if not np.isfinite(X).all():
        raise InvariantError("non-finite feature values reached the classifier")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if y.min() < 0 or y.max() >= n_classes:
        raise ConfigError("label id outside the class table")
    arrays = _cart.grow(
        X, y, n_classes, params.max_depth, params.min_leaf,
        params.features_per_split(X.shape[1]), np.uint64(seed & _MASK64),
    )
    return Tree(*arrays)


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    classes: list[str]
    params: ForestParams
    seed: int
    schema_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def to_dict(self) -> dict:
        return {
            "format": "winleak-forest",
            "version": MODEL_FORMAT_VERSION,
            "n_features": self.n_features,
            "classes": list(self.classes),
            "params": asdict(self.params),
            "seed": self.seed,
            "schema_fingerprint": self.schema_fingerprint,
            "trees": [t.to_node_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format") != "winleak-forest" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ConfigError(f"unsupported model document (format={d.get('format')}, version={d.get('version')})")
        n_classes = len(d["classes"])
        return cls(
            trees=[Tree.from_node_dict(t, n_classes) for t in d["trees"]],
            n_features=int(d["n_features"]),
            classes=list(d["classes"]),
            params=ForestParams(**d["params"]),
            seed=int(d["seed"]),
            schema_fingerprint=d.get("schema_fingerprint", ""),
        )

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        return cls.from_dict(json.loads(text))


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    seed: int = 0,
    classes: Sequence[str] | None = None,
    schema_fingerprint: str = "",
) -> ForestModel:
    """Bagged CART ensemble; tree ``i`` uses ``tree_seed(seed, i)``.

    The per-tree generator draws the bootstrap sample (N draws with
    replacement) first, then drives feature subsampling.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ConfigError("cannot train on an empty set")
    n_classes = len(classes) if classes is not None else int(y.max()) + 1
    if y.max() >= n_classes:
        raise ConfigError("label id outside the class table")
    trees = []
    for i in range(params.n_trees):
        s = tree_seed(seed, i)
        if params.bootstrap:
            rng = np.random.default_rng(s)
            rows = rng.integers(0, len(X), size=len(X))
            # the bootstrap stream is separate from the tree's own stream
            trees.append(train_tree(X[rows], y[rows], params, splitmix64(s), n_classes))
        else:
            trees.append(train_tree(X, y, params, s, n_classes))
    names = list(classes) if classes is not None else [str(c) for c in range(n_classes)]
    return ForestModel(trees, X.shape[1], names, params, seed, schema_fingerprint)


def predict_proba(model: ForestModel, X: np.ndarray, schema_fingerprint: str | None = None) -> np.ndarray:
    """Vote shares per class: each tree votes its leaf's majority class."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ConfigError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if schema_fingerprint is not None and schema_fingerprint != model.schema_fingerprint:
        raise ConfigError(
            f"feature schema mismatch: model {model.schema_fingerprint!r}, input {schema_fingerprint!r}"
        )
    votes = np.zeros((len(X), model.n_classes))
    rows = np.arange(len(X))
    for t in model.trees:
        votes[rows, t.leaf_class()[t.apply(X)]] += 1
    return votes / len(model.trees)


def predict(
    model: ForestModel, features: np.ndarray, schema_fingerprint: str | None = None
) -> tuple[np.ndarray | int, np.ndarray]:
    """Label(s) and vote-share probabilities; ties go to the lowest class id.

    A 1-D ``features`` gives a single label and probability vector.
    """
    features = np.asarray(features, dtype=float)
    proba = predict_proba(model, features, schema_fingerprint)
    labels = np.argmax(proba, axis=1)
    if features.ndim == 1:
        return int(labels[0]), proba[0]
    return labels, proba


def knn_predict(
    X_train: np.ndarray, y_train: np.ndarray, X_query: np.ndarray, k: int = 1
) -> np.ndarray:
    """Majority label of the ``k`` nearest training rows (Euclidean, z-scored).

    Normalisation statistics come from the training rows only. Distance ties
    go to the lower training index, vote ties to the lower label.
    """
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=np.int64)
    if len(X_train) == 0:
        raise ConfigError("k-NN needs a non-empty training set")
    if not 1 <= k <= len(X_train):
        raise ConfigError(f"k must be in [1, {len(X_train)}], got {k}")
    Xq = np.atleast_2d(np.asarray(X_query, dtype=float))
    mu = X_train.mean(axis=0)
    sd = X_train.std(axis=0)
    sd[sd == 0] = 1.0
    A = (X_train - mu) / sd
    B = (Xq - mu) / sd
    n_labels = int(y_train.max()) + 1
    out = np.empty(len(B), dtype=np.int64)
    chunk = max(1, 2_000_000 // max(1, A.size))
    for start in range(0, len(B), chunk):
        Q = B[start:start + chunk]
        # direct differences keep equal distances exactly equal
        d2 = ((Q[:, None, :] - A[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for r, nb in enumerate(nearest):
            out[start + r] = int(np.argmax(np.bincount(y_train[nb], minlength=n_labels)))
    return out
