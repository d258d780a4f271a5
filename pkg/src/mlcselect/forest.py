"""CART regression trees and bootstrap forests with single or multi-output targets.

Trees are stored as flat parallel arrays (sklearn-style). Every node keeps the
number of training samples that reached it; the SHAP computation in
:mod:`mlcselect.explain` relies on those counts.

Split criterion: at each node the candidate (feature, threshold) pair that
minimizes the child-weighted sum of per-target variances is chosen, with
thresholds at midpoints between consecutive distinct sorted values. Ties go to
the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import derive_seed
from .errors import (
    DimensionMismatchError,
    EmptyTrainingSetError,
    TooFewSamplesForFoldsError,
)

__all__ = [
    "ForestParams",
    "default_grid",
    "RegressionTree",
    "RegressionForest",
    "fit_tree",
    "fit_forest",
    "grid_search",
    "CVCandidate",
    "CVReport",
    "DecisionTreeRegressor",
    "RandomForestRegressor",
]

MAX_FEATURES_CHOICES = ("auto", "sqrt", "log2")

SERIAL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters of one forest candidate.

    The grid-search space is ``default_grid()``: n_estimators in {50, 100},
    max_features in {auto, sqrt, log2}, max_depth in {4, 8, 15, unlimited},
    min_samples_split in {2, 5, 10}, i.e. 72 candidates. Off-grid values are
    allowed when constructing a forest directly (small forests are useful in
    tests); only the grid itself is fixed.
    """

    n_estimators: int = 100
    max_features: str = "auto"
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_features not in MAX_FEATURES_CHOICES:
            raise ValueError(f"max_features must be one of {MAX_FEATURES_CHOICES}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be None (unlimited) or >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def key(self) -> str:
        """Canonical string identity, used for seeding and reports."""
        depth = "none" if self.max_depth is None else str(self.max_depth)
        return (
            f"{self.n_estimators}|{self.max_features}|{depth}"
            f"|{self.min_samples_split}|{self.min_samples_leaf}"
        )

    def n_candidate_features(self, d: int) -> int:
        if self.max_features == "auto":
            return d
        if self.max_features == "sqrt":
            return min(d, math.ceil(math.sqrt(d)))
        return min(d, max(1, math.ceil(math.log2(d))))

    @classmethod
    def default_grid(cls) -> list["ForestParams"]:
        """All 72 candidates in canonical (table-row) order."""
        grid = []
        for n_estimators in (50, 100):
            for max_features in ("auto", "sqrt", "log2"):
                for max_depth in (4, 8, 15, None):
                    for min_samples_split in (2, 5, 10):
                        grid.append(cls(
                            n_estimators=n_estimators,
                            max_features=max_features,
                            max_depth=max_depth,
                            min_samples_split=min_samples_split,
                        ))
        return grid

    def to_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_features": self.max_features,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**d)


def default_grid() -> list[ForestParams]:
    """The full 72-candidate hyperparameter grid."""
    return ForestParams.default_grid()


@dataclass
class RegressionTree:
    """Flat-array binary regression tree.

    ``feature[i] == -1`` marks a leaf. ``value`` holds the per-target training
    mean at every node (prediction reads it only at leaves).
    ``n_node_samples[i]`` is the number of training rows that reached node i;
    children sum to their parent by construction.
    """

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_targets(self) -> int:
        return self.value.shape[1]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if not self.is_leaf(i):
                depths[self.children_left[i]] = depths[i] + 1
                depths[self.children_right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def predict_row(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while not self.is_leaf(node):
            if x[self.feature[node]] < self.threshold[node]:
                node = self.children_left[node]
            else:
                node = self.children_right[node]
        return self.value[node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.stack([self.predict_row(row) for row in X])

    def check_sample_counts(self) -> bool:
        """True when every internal node's children sum to the parent count."""
        for i in range(self.n_nodes):
            if not self.is_leaf(i):
                total = (self.n_node_samples[self.children_left[i]]
                         + self.n_node_samples[self.children_right[i]])
                if total != self.n_node_samples[i]:
                    return False
        return True

    def to_dict(self) -> dict:
        return {
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "value": self.value.tolist(),
            "n_node_samples": self.n_node_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            children_left=np.asarray(d["children_left"], dtype=np.int32),
            children_right=np.asarray(d["children_right"], dtype=np.int32),
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            value=np.asarray(d["value"], dtype=np.float64),
            n_node_samples=np.asarray(d["n_node_samples"], dtype=np.int64),
        )


class _TreeBuilder:
    """Grows one CART tree depth-first (pre-order node ids)."""

    def __init__(self, X: np.ndarray, Y: np.ndarray, params: ForestParams,
                 rng: np.random.Generator):
        self.X = X
        self.Y = Y
        self.params = params
        self.rng = rng
        self.d = X.shape[1]
        self.m = params.n_candidate_features(self.d)
        self.children_left: list[int] = []
        self.children_right: list[int] = []
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.value: list[np.ndarray] = []
        self.n_node_samples: list[int] = []

    def build(self) -> RegressionTree:
        self._grow(np.arange(self.X.shape[0]), depth=0)
        return RegressionTree(
            children_left=np.asarray(self.children_left, dtype=np.int32),
            children_right=np.asarray(self.children_right, dtype=np.int32),
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            value=np.asarray(self.value, dtype=np.float64),
            n_node_samples=np.asarray(self.n_node_samples, dtype=np.int64),
        )

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        self.children_left.append(-1)
        self.children_right.append(-1)
        self.feature.append(-1)
        self.threshold.append(0.0)
        Y_node = self.Y[idx]
        self.value.append(Y_node.mean(axis=0))
        self.n_node_samples.append(len(idx))

        if self._should_stop(idx, Y_node, depth):
            return node
        split = self._find_split(idx)
        if split is None:
            return node
        f, thr = split
        mask = self.X[idx, f] < thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.children_left[node] = self._grow(idx[mask], depth + 1)
        self.children_right[node] = self._grow(idx[~mask], depth + 1)
        return node

    def _should_stop(self, idx: np.ndarray, Y_node: np.ndarray, depth: int) -> bool:
        p = self.params
        if p.max_depth is not None and depth >= p.max_depth:
            return True
        if len(idx) < p.min_samples_split:
            return True
        # zero impurity: every target row identical
        return bool(np.all(Y_node == Y_node[0]))

    def _candidate_features(self) -> np.ndarray:
        if self.m >= self.d:
            return np.arange(self.d)
        return np.sort(self.rng.choice(self.d, size=self.m, replace=False))

    def _find_split(self, idx: np.ndarray) -> tuple[int, float] | None:
        n = len(idx)
        msl = self.params.min_samples_leaf
        best_sse = np.inf
        best: tuple[int, float] | None = None
        Y_node = self.Y[idx]
        for f in self._candidate_features():
            xs = self.X[idx, f]
            order = np.argsort(xs, kind="stable")
            xv = xs[order]
            cuts = np.nonzero(xv[:-1] < xv[1:])[0]
            if cuts.size == 0:
                continue
            if msl > 1:
                cuts = cuts[(cuts + 1 >= msl) & (n - cuts - 1 >= msl)]
                if cuts.size == 0:
                    continue
            ys = Y_node[order]
            csum = np.cumsum(ys, axis=0)
            csq = np.cumsum(ys * ys, axis=0)
            n_left = (cuts + 1).astype(np.float64)[:, None]
            n_right = n - n_left
            sum_left = csum[cuts]
            sq_left = csq[cuts]
            sse_left = (sq_left - sum_left * sum_left / n_left).sum(axis=1)
            sum_right = csum[-1] - sum_left
            sq_right = csq[-1] - sq_left
            sse_right = (sq_right - sum_right * sum_right / n_right).sum(axis=1)
            sse = sse_left + sse_right
            j = int(np.argmin(sse))
            if sse[j] < best_sse:
                best_sse = sse[j]
                cut = cuts[j]
                best = (int(f), float((xv[cut] + xv[cut + 1]) / 2.0))
        return best


def fit_tree(X: np.ndarray, Y: np.ndarray, params: ForestParams,
             rng_seed: int) -> RegressionTree:
    """Fit one CART tree on (X, Y). Y may be (n,) or (n, t).

    The seed drives per-node feature subsampling only; with
    ``max_features="auto"`` the fit is fully deterministic and consumes no
    random numbers.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] == 0:
        raise EmptyTrainingSetError("cannot fit a tree on zero rows")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(
            f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    rng = np.random.default_rng(rng_seed)
    return _TreeBuilder(X, Y, params, rng).build()


@dataclass
class RegressionForest:
    """Bootstrap ensemble of regression trees sharing target arity."""

    trees: list[RegressionTree]
    params: ForestParams
    feature_names: list[str]
    target_names: list[str]
    seed: int = 0

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_targets(self) -> int:
        return len(self.target_names)

    def predict_row(self, x) -> np.ndarray:
        """Mean of per-tree leaf vectors, accumulated in stored tree order."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise DimensionMismatchError(
                f"expected a vector of length {self.n_features}, got shape {x.shape}")
        acc = np.zeros(self.n_targets, dtype=np.float64)
        for tree in self.trees:
            acc += tree.predict_row(x)
        return acc / len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.stack([self.predict_row(row) for row in X])

    def to_dict(self) -> dict:
        return {
            "format_version": SERIAL_FORMAT_VERSION,
            "params": self.params.to_dict(),
            "feature_names": list(self.feature_names),
            "target_names": list(self.target_names),
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionForest":
        if d.get("format_version") != SERIAL_FORMAT_VERSION:
            raise ValueError(f"unsupported forest format: {d.get('format_version')!r}")
        return cls(
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            params=ForestParams.from_dict(d["params"]),
            feature_names=list(d["feature_names"]),
            target_names=list(d["target_names"]),
            seed=int(d["seed"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RegressionForest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_forest(X, Y, params: ForestParams, base_seed: int, task_id: str,
               feature_names: list[str] | None = None,
               target_names: list[str] | None = None) -> RegressionForest:
    """Fit ``params.n_estimators`` trees, each on its own bootstrap sample.

    Tree i draws all of its randomness (bootstrap indices, then per-node
    feature subsets in construction order) from a generator seeded with
    ``derive_seed(base_seed, task_id, i)``, so the result is identical no
    matter how tree fits are scheduled.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, d = X.shape
    if n == 0:
        raise EmptyTrainingSetError("cannot fit a forest on zero rows")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(d)]
    if target_names is None:
        target_names = [f"t{j}" for j in range(Y.shape[1])]

    trees = []
    for i in range(params.n_estimators):
        rng = np.random.default_rng(derive_seed(base_seed, task_id, i))
        boot = rng.integers(0, n, size=n)
        trees.append(_TreeBuilder(X[boot], Y[boot], params, rng).build())
    return RegressionForest(
        trees=trees,
        params=params,
        feature_names=list(feature_names),
        target_names=list(target_names),
        seed=derive_seed(base_seed, task_id),
    )


@dataclass
class CVCandidate:
    params: ForestParams
    fold_mse: list[float]
    mean_mse: float


@dataclass
class CVReport:
    candidates: list[CVCandidate]
    best_index: int

    def __len__(self) -> int:
        return len(self.candidates)


def grid_search(X, Y, grid: list[ForestParams], folds: int, base_seed: int,
                task_id: str) -> tuple[ForestParams, CVReport]:
    """Score every candidate with seeded k-fold CV and return the argmin.

    Folds are contiguous blocks of a seeded shuffle of the rows. The score is
    the fold-mean of the per-fold MSE (itself averaged over targets). Ties
    keep the earliest candidate in the given grid order; candidate forests
    are seeded by parameter content, so duplicated candidates score
    identically.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if not grid:
        raise ValueError("grid must contain at least one candidate")
    n = X.shape[0]
    if n < folds:
        raise TooFewSamplesForFoldsError(
            f"{n} training rows cannot be split into {folds} folds")

    perm = np.random.default_rng(derive_seed(base_seed, f"{task_id}/cv-shuffle")).permutation(n)
    blocks = np.array_split(perm, folds)

    candidates = []
    best_index = 0
    best_score = np.inf
    for params in grid:
        fold_mse = []
        for k, val_idx in enumerate(blocks):
            train_idx = np.concatenate([b for j, b in enumerate(blocks) if j != k])
            forest = fit_forest(
                X[train_idx], Y[train_idx], params, base_seed,
                f"{task_id}/grid/{params.key()}/fold{k}")
            pred = forest.predict(X[val_idx])
            fold_mse.append(float(np.mean((pred - Y[val_idx]) ** 2)))
        mean_mse = float(np.mean(fold_mse))
        if mean_mse < best_score:
            best_score = mean_mse
            best_index = len(candidates)
        candidates.append(CVCandidate(params=params, fold_mse=fold_mse, mean_mse=mean_mse))
    report = CVReport(candidates=candidates, best_index=best_index)
    return grid[best_index], report


class DecisionTreeRegressor(BaseEstimator, RegressorMixin):
    """Single CART tree with the package's split rules, sklearn-style."""

    def __init__(self, max_depth=None, max_features="auto", min_samples_split=2,
                 min_samples_leaf=1, seed=0):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def _params(self) -> ForestParams:
        return ForestParams(
            n_estimators=1,
            max_features=self.max_features,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self._multi_output = y.ndim > 1
        self.tree_ = fit_tree(X, y, self._params(), self.seed)
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}")
        pred = self.tree_.predict(X)
        return pred if self._multi_output else pred[:, 0]


class RandomForestRegressor(BaseEstimator, RegressorMixin):
    """Bootstrap forest estimator wrapping :func:`fit_forest`.

    Randomness derives from (base_seed, task_id) through the package seeding
    scheme rather than a single random_state, which keeps refits bit-identical
    under any scheduling.
    """

    def __init__(self, n_estimators=100, max_features="auto", max_depth=None,
                 min_samples_split=2, min_samples_leaf=1, base_seed=0,
                 task_id="forest"):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.base_seed = base_seed
        self.task_id = task_id

    def _params(self) -> ForestParams:
        return ForestParams(
            n_estimators=self.n_estimators,
            max_features=self.max_features,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self._multi_output = y.ndim > 1
        self.forest_ = fit_forest(X, y, self._params(), self.base_seed, self.task_id)
        return self

    def predict(self, X):
        check_is_fitted(self, "forest_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}")
        pred = self.forest_.predict(X)
        return pred if self._multi_output else pred[:, 0]
