"""Random-forest match scorer, trained from scratch.

Each tree sees a bootstrap sample in which positives are oversampled to the
number of negatives, splits on Gini impurity over ``sqrt(d)`` random
features, and stores raw class counts at its leaves.  A forest's score is
the mean positive proportion of the leaves a vector lands in.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import InvalidArgument, InvalidTrainingSet, SchemaViolation


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidArgument("n_trees must be >= 1")
        if not 1 <= self.max_depth <= 40:
            raise InvalidArgument("max_depth must be in 1..40")
        if self.min_leaf < 1:
            raise InvalidArgument("min_leaf must be >= 1")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    npos: np.ndarray
    nneg: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_value(self) -> np.ndarray:
        total = self.npos + self.nneg
        return np.where(total > 0, self.npos / np.maximum(total, 1), 0.0)


@dataclass
class Forest:
    trees: list
    n_features: int
    params: ForestParams
    schema_fingerprint: str = ""
    positive_mean: np.ndarray | None = None
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def packed(self):
        """All trees in shared arrays with absolute child indices."""
        if self._packed is None:
            feats, thrs, lefts, rights, vals, roots = [], [], [], [], [], []
            offset = 0
            for t in self.trees:
                roots.append(offset)
                feats.append(t.feature)
                thrs.append(t.threshold)
                lefts.append(np.where(t.left >= 0, t.left + offset, -1))
                rights.append(np.where(t.right >= 0, t.right + offset, -1))
                vals.append(t.leaf_value())
                offset += t.n_nodes
            self._packed = (
                np.concatenate(feats).astype(np.int32),
                np.concatenate(thrs).astype(np.float64),
                np.concatenate(lefts).astype(np.int32),
                np.concatenate(rights).astype(np.int32),
                np.concatenate(vals).astype(np.float64),
                np.array(roots, dtype=np.int64),
            )
        return self._packed


def _canonical_order(X: np.ndarray) -> np.ndarray:
    if X.shape[0] == 0:
        return np.arange(0)
    return np.lexsort(X.T[::-1])


def _fit_tree(X, y, pos_idx, neg_idx, params: ForestParams, n_sub: int, t: int) -> Tree:
    rng = np.random.default_rng([params.seed, t])
    n_neg = len(neg_idx)
    draw_neg = neg_idx[rng.integers(0, n_neg, size=n_neg)]
    draw_pos = pos_idx[rng.integers(0, len(pos_idx), size=n_neg)]
    w = np.bincount(np.concatenate([draw_neg, draw_pos]), minlength=X.shape[0]).astype(np.int64)
    tree_seed = int(rng.integers(0, 2**63, dtype=np.int64))
    used = np.nonzero(w)[0]
    arrays = kernels.build_tree(X[used], y[used], w[used], params.max_depth, params.min_leaf, n_sub, tree_seed)
    return Tree(*arrays)


def train_forest(positives, negatives, params: ForestParams = ForestParams(), n_jobs: int = 1) -> Forest:
    """Fit a forest; the result depends only on the example sets and the seed."""
    P = np.asarray(positives, dtype=np.float64)
    N = np.asarray(negatives, dtype=np.float64)
    if P.ndim != 2 or N.ndim != 2 or P.shape[0] == 0 or N.shape[0] == 0:
        raise InvalidTrainingSet("both positive and negative examples are required")
    if P.shape[1] != N.shape[1]:
        raise SchemaViolation(f"feature lengths differ: positives {P.shape[1]}, negatives {N.shape[1]}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(N))):
        raise InvalidTrainingSet("feature vectors must be finite")
    d = P.shape[1]
    P = P[_canonical_order(P)]
    N = N[_canonical_order(N)]
    X = np.ascontiguousarray(np.vstack([P, N]))
    y = np.concatenate([np.ones(len(P), dtype=np.int8), np.zeros(len(N), dtype=np.int8)])
    pos_idx = np.arange(len(P))
    neg_idx = np.arange(len(P), len(P) + len(N))
    n_sub = max(1, int(math.floor(math.sqrt(d))))

    def fit(t):
        return _fit_tree(X, y, pos_idx, neg_idx, params, n_sub, t)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(fit, range(params.n_trees)))
    else:
        trees = [fit(t) for t in range(params.n_trees)]
    return Forest(trees=trees, n_features=d, params=params, positive_mean=P.mean(axis=0))


def score_batch(forest: Forest, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != forest.n_features:
        raise SchemaViolation(f"feature vector length {X.shape[1]} != forest's {forest.n_features}")
    if X.shape[0] == 0:
        return np.zeros(0)
    return kernels.predict_forest(X, *forest.packed())


def score(forest: Forest, fv) -> float:
    fv = np.asarray(fv, dtype=np.float64)
    if fv.ndim != 1:
        raise SchemaViolation("score expects a single feature vector")
    return float(score_batch(forest, fv[None, :])[0])


def forest_to_dict(forest: Forest) -> dict:
    trees = []
    for t in forest.trees:
        trees.append(
            [
                [int(f), float(h), int(a), int(b), int(p), int(q)]
                for f, h, a, b, p, q in zip(t.feature, t.threshold, t.left, t.right, t.npos, t.nneg)
            ]
        )
    return {
        "n_features": forest.n_features,
        "params": {
            "n_trees": forest.params.n_trees,
            "max_depth": forest.params.max_depth,
            "min_leaf": forest.params.min_leaf,
            "seed": forest.params.seed,
        },
        "positive_mean": None if forest.positive_mean is None else [float(v) for v in forest.positive_mean],
        "trees": trees,
    }


def forest_from_dict(doc: dict, schema_fingerprint: str = "") -> Forest:
    n_features = int(doc["n_features"])
    params = ForestParams(**{k: int(v) for k, v in doc["params"].items()})
    trees = []
    for ti, nodes in enumerate(doc["trees"]):
        arr = np.array(nodes, dtype=object).reshape(-1, 6) if nodes else np.zeros((0, 6))
        if arr.shape[0] == 0:
            raise InvalidArgument(f"tree {ti} has no nodes")
        tree = Tree(
            np.array(arr[:, 0], dtype=np.int32),
            np.array(arr[:, 1], dtype=np.float64),
            np.array(arr[:, 2], dtype=np.int32),
            np.array(arr[:, 3], dtype=np.int32),
            np.array(arr[:, 4], dtype=np.int64),
            np.array(arr[:, 5], dtype=np.int64),
        )
        _check_tree(tree, n_features, ti)
        trees.append(tree)
    mean = doc.get("positive_mean")
    return Forest(
        trees=trees,
        n_features=n_features,
        params=params,
        schema_fingerprint=schema_fingerprint,
        positive_mean=None if mean is None else np.array(mean, dtype=np.float64),
    )


def _check_tree(tree: Tree, n_features: int, ti: int) -> None:
    n = tree.n_nodes
    inner = tree.feature >= 0
    if np.any(tree.feature[inner] >= n_features):
        raise InvalidArgument(f"tree {ti}: feature index out of range")
    for name, child in (("left", tree.left), ("right", tree.right)):
        c = child[inner]
        if np.any(c <= np.nonzero(inner)[0]) or np.any(c >= n):
            raise InvalidArgument(f"tree {ti}: bad {name} child index")
    if np.any(tree.npos < 0) or np.any(tree.nneg < 0):
        raise InvalidArgument(f"tree {ti}: negative class counts")


def permutation_importance(forest: Forest, X, y, blocks, seed: int = 0) -> list[float]:
    """Drop in balanced accuracy when each column block is shuffled.

    ``blocks`` is a list of column slices (one per relation spec).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)

    def balanced_accuracy(scores):
        pred = scores >= 0.5
        return 0.5 * (np.mean(pred[y]) + np.mean(~pred[~y]))

    base = balanced_accuracy(score_batch(forest, X))
    rng = np.random.default_rng(seed)
    out = []
    for sl in blocks:
        Xp = X.copy()
        perm = rng.permutation(len(X))
        Xp[:, sl] = X[perm][:, sl]
        out.append(float(base - balanced_accuracy(score_batch(forest, Xp))))
    return out
