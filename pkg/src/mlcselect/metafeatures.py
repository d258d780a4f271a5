"""Dataset meta-features and correlation-based pruning.

Each dataset is summarised by a fixed catalogue of 21 scalar descriptors in
five groups: dimensionality, label distribution, label imbalance, label
relationships, and attribute statistics. A greedy Pearson filter then drops
near-duplicate columns so downstream models see a compact, decorrelated view.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import RunConfig, format_float, read_csv_rows
from .errors import (
    AllColumnsDroppedError,
    DegenerateLabelsError,
    LengthMismatchError,
    MissingCellError,
)
from .ingest import ColumnKind, MLCDataset, PerformanceTable

__all__ = [
    "FeatureGroup",
    "FEATURE_CATALOGUE",
    "feature_group",
    "MetaFeatureVector",
    "MetaFeatureMatrix",
    "DropRecord",
    "compute_metafeatures",
    "build_matrix",
    "chi2_dependent_ratio",
    "pearson",
    "prune_correlated",
    "prune_metrics",
    "CorrelationPruner",
]


class FeatureGroup(Enum):
    DIMENSIONALITY = "dimensionality"
    LABEL_DISTRIBUTION = "label_distribution"
    LABEL_IMBALANCE = "label_imbalance"
    LABEL_RELATIONSHIP = "label_relationship"
    ATTRIBUTE_METRICS = "attribute_metrics"


# Canonical catalogue order; every vector and matrix column follows it.
FEATURE_CATALOGUE: list[tuple[str, FeatureGroup]] = [
    ("instances", FeatureGroup.DIMENSIONALITY),
    ("attributes", FeatureGroup.DIMENSIONALITY),
    ("labels", FeatureGroup.DIMENSIONALITY),
    ("instances_per_attribute", FeatureGroup.DIMENSIONALITY),
    ("cardinality", FeatureGroup.LABEL_DISTRIBUTION),
    ("density", FeatureGroup.LABEL_DISTRIBUTION),
    ("min_label_frequency", FeatureGroup.LABEL_DISTRIBUTION),
    ("mean_label_frequency", FeatureGroup.LABEL_DISTRIBUTION),
    ("max_label_frequency", FeatureGroup.LABEL_DISTRIBUTION),
    ("mean_ir", FeatureGroup.LABEL_IMBALANCE),
    ("max_ir", FeatureGroup.LABEL_IMBALANCE),
    ("cv_ir", FeatureGroup.LABEL_IMBALANCE),
    ("distinct_labelsets", FeatureGroup.LABEL_RELATIONSHIP),
    ("proportion_distinct_labelsets", FeatureGroup.LABEL_RELATIONSHIP),
    ("mean_examples_per_labelset", FeatureGroup.LABEL_RELATIONSHIP),
    ("chi2_dependent_pair_ratio", FeatureGroup.LABEL_RELATIONSHIP),
    ("proportion_binary_attributes", FeatureGroup.ATTRIBUTE_METRICS),
    ("proportion_numeric_attributes", FeatureGroup.ATTRIBUTE_METRICS),
    ("proportion_nominal_attributes", FeatureGroup.ATTRIBUTE_METRICS),
    ("mean_of_means_numeric_attributes", FeatureGroup.ATTRIBUTE_METRICS),
    ("mean_of_stds_numeric_attributes", FeatureGroup.ATTRIBUTE_METRICS),
]

FEATURE_NAMES = [name for name, _ in FEATURE_CATALOGUE]
_GROUP_OF = dict(FEATURE_CATALOGUE)


def feature_group(name: str) -> FeatureGroup:
    return _GROUP_OF[name]


@dataclass
class MetaFeatureVector:
    """All catalogue features for one dataset, in catalogue order."""

    dataset_id: str
    values: dict[str, float]
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def as_array(self) -> np.ndarray:
        return np.array([self.values[n] for n in FEATURE_NAMES], dtype=np.float64)


def pearson(x, y) -> float:
    """Sample Pearson correlation; 0.0 when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError(
            f"pearson needs two equal-length 1-d arrays, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise LengthMismatchError("pearson needs at least 2 observations")
    xd = x - x.mean()
    yd = y - y.mean()
    denom_sq = float((xd * xd).sum()) * float((yd * yd).sum())
    if denom_sq == 0.0:
        return 0.0
    return float((xd * yd).sum() / np.sqrt(denom_sq))


def chi2_dependent_ratio(labels, critical: float = 6.635) -> float:
    """Fraction of label pairs whose 2x2 chi-square statistic exceeds critical.

    The statistic is the plain Pearson chi-square over the four co-occurrence
    cells, without continuity correction. A pair where either label has a
    zero marginal (all 0s or all 1s) contributes 0 by convention.
    """
    Y = np.asarray(labels, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ValueError("labels must be a 2-d matrix with at least two columns")
    n, q = Y.shape
    cnt = Y.sum(axis=0)
    n11 = Y.T @ Y
    n10 = cnt[:, None] - n11
    n01 = cnt[None, :] - n11
    n00 = n - n11 - n10 - n01
    row1 = cnt[:, None]
    col1 = cnt[None, :]
    e11 = row1 * col1 / n
    e10 = row1 * (n - col1) / n
    e01 = (n - row1) * col1 / n
    e00 = (n - row1) * (n - col1) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = ((n11 - e11) ** 2 / e11 + (n10 - e10) ** 2 / e10
               + (n01 - e01) ** 2 / e01 + (n00 - e00) ** 2 / e00)
    informative = (cnt > 0) & (cnt < n)
    valid = informative[:, None] & informative[None, :]
    chi = np.where(valid, chi, 0.0)
    iu, ju = np.triu_indices(q, k=1)
    dependent = int((chi[iu, ju] > critical).sum())
    return dependent / len(iu)


def compute_metafeatures(ds: MLCDataset, cfg: RunConfig | None = None) -> MetaFeatureVector:
    """Compute the full 21-feature catalogue for one dataset."""
    cfg = cfg or RunConfig()
    n = ds.n_instances
    d = ds.n_attributes
    q = ds.n_labels
    Y = ds.labels.astype(np.float64)
    warnings: list[str] = []

    counts = Y.sum(axis=0)
    max_count = counts.max()
    if max_count == 0:
        raise DegenerateLabelsError(
            f"dataset {ds.id!r}: every label column is all-zero")
    positive = counts > 0
    if not positive.all():
        absent = [ds.label_names[j] for j in np.nonzero(~positive)[0]]
        warnings.append(
            f"labels with zero positives excluded from imbalance ratios: {absent}")
    ir = max_count / counts[positive]
    mean_ir = float(ir.mean())
    freq = counts / n

    labelsets = np.unique(Y, axis=0).shape[0]

    values: dict[str, float] = {
        "instances": float(n),
        "attributes": float(d),
        "labels": float(q),
        "instances_per_attribute": n / d,
        "cardinality": float(Y.sum()) / n,
        "density": float(Y.sum()) / (n * q),
        "min_label_frequency": float(freq.min()),
        "mean_label_frequency": float(freq.mean()),
        "max_label_frequency": float(freq.max()),
        "mean_ir": mean_ir,
        "max_ir": float(ir.max()),
        "cv_ir": float(ir.std()) / mean_ir,
        "distinct_labelsets": float(labelsets),
        "proportion_distinct_labelsets": labelsets / n,
        "mean_examples_per_labelset": n / labelsets,
        "chi2_dependent_pair_ratio": chi2_dependent_ratio(Y, cfg.chi_square_critical),
    }

    kind_counts = ds.kind_counts()
    values["proportion_binary_attributes"] = kind_counts[ColumnKind.BINARY] / d
    values["proportion_numeric_attributes"] = kind_counts[ColumnKind.NUMERIC] / d
    values["proportion_nominal_attributes"] = kind_counts[ColumnKind.NOMINAL] / d

    numeric_cols = ds.numeric_columns()
    if numeric_cols:
        means = [float(ds.attributes[c].to_numpy(dtype=np.float64).mean())
                 for c in numeric_cols]
        stds = [float(ds.attributes[c].to_numpy(dtype=np.float64).std())
                for c in numeric_cols]
        values["mean_of_means_numeric_attributes"] = float(np.mean(means))
        values["mean_of_stds_numeric_attributes"] = float(np.mean(stds))
    else:
        warnings.append("no numeric attributes; attribute summary statistics set to 0")
        values["mean_of_means_numeric_attributes"] = 0.0
        values["mean_of_stds_numeric_attributes"] = 0.0

    ordered = {name: float(values[name]) for name in FEATURE_NAMES}
    return MetaFeatureVector(dataset_id=ds.id, values=ordered, warnings=warnings)


@dataclass
class DropRecord:
    """One pruning decision: why a column was removed."""

    dropped: str
    kept: str | None
    reason: str  # "correlated" or "zero-variance"
    r: float | None

    def as_row(self) -> list[str]:
        # column 2 is the surviving partner for correlation drops, else the reason
        return [
            self.dropped,
            self.kept if self.kept is not None else self.reason,
            format_float(self.r) if self.r is not None else "",
        ]


@dataclass
class MetaFeatureMatrix:
    """Datasets x features table with a log of pruned columns."""

    dataset_ids: list[str]
    feature_names: list[str]
    data: np.ndarray
    drop_log: list[DropRecord] = field(default_factory=list)

    def __post_init__(self):
        expected = (len(self.dataset_ids), len(self.feature_names))
        if self.data.shape != expected:
            raise LengthMismatchError(
                f"matrix shape {self.data.shape} does not match {expected}")

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.feature_names.index(name)]

    def row(self, dataset_id: str) -> np.ndarray:
        return self.data[self.dataset_ids.index(dataset_id)]

    def without_rows(self, dataset_ids) -> "MetaFeatureMatrix":
        skip = set(dataset_ids)
        keep = [i for i, d in enumerate(self.dataset_ids) if d not in skip]
        return MetaFeatureMatrix(
            [self.dataset_ids[i] for i in keep],
            list(self.feature_names),
            self.data[keep],
            list(self.drop_log),
        )

    def save_csv(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment is not None:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["dataset"] + self.feature_names)
            for i, ds_id in enumerate(self.dataset_ids):
                writer.writerow([ds_id] + [format_float(v) for v in self.data[i]])

    @classmethod
    def load_csv(cls, path: str | Path) -> "MetaFeatureMatrix":
        rows = read_csv_rows(path)
        header, body = rows[0], rows[1:]
        names = header[1:]
        ids = [r[0] for r in body]
        data = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
        if not body:
            data = data.reshape(0, len(names))
        return cls(ids, names, data)

    def save_drop_log(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment is not None:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["dropped", "kept_or_reason", "r"])
            for rec in self.drop_log:
                writer.writerow(rec.as_row())


def build_matrix(vectors: list[MetaFeatureVector]) -> MetaFeatureMatrix:
    """Stack per-dataset vectors into a matrix, rows sorted by dataset id."""
    ordered = sorted(vectors, key=lambda v: v.dataset_id)
    ids = [v.dataset_id for v in ordered]
    if len(set(ids)) != len(ids):
        raise LengthMismatchError("duplicate dataset ids in meta-feature vectors")
    data = (np.stack([v.as_array() for v in ordered])
            if ordered else np.empty((0, len(FEATURE_NAMES))))
    return MetaFeatureMatrix(ids, list(FEATURE_NAMES), data)


def _greedy_prune(columns: np.ndarray, names: list[str],
                  threshold: float) -> tuple[list[int], list[DropRecord]]:
    """Later-column greedy filter: walk pairs (i, j), i < j, in column order
    and drop j when |r(i, j)| exceeds the threshold and i is still kept."""
    kept = [True] * len(names)
    log: list[DropRecord] = []
    for i in range(len(names)):
        if not kept[i]:
            continue
        for j in range(i + 1, len(names)):
            if not kept[j]:
                continue
            r = pearson(columns[:, i], columns[:, j])
            if abs(r) > threshold:
                kept[j] = False
                log.append(DropRecord(names[j], names[i], "correlated", r))
    return [i for i, k in enumerate(kept) if k], log


def prune_correlated(matrix: MetaFeatureMatrix, threshold: float) -> MetaFeatureMatrix:
    """Drop zero-variance columns, then later columns of highly correlated pairs.

    Column order is the tie-break: of a correlated pair the earlier column
    survives. Every removal lands in the drop log with its correlation.
    """
    log = list(matrix.drop_log)
    alive: list[int] = []
    for j, name in enumerate(matrix.feature_names):
        col = matrix.data[:, j]
        if col.size and bool((col == col[0]).all()):
            log.append(DropRecord(name, None, "zero-variance", None))
        else:
            alive.append(j)
    if not alive:
        raise AllColumnsDroppedError("all feature columns have zero variance")
    names = [matrix.feature_names[j] for j in alive]
    sub = matrix.data[:, alive]
    kept_local, pair_log = _greedy_prune(sub, names, threshold)
    log.extend(pair_log)
    if not kept_local:
        raise AllColumnsDroppedError("pruning removed every feature column")
    return MetaFeatureMatrix(
        list(matrix.dataset_ids),
        [names[j] for j in kept_local],
        sub[:, kept_local].copy(),
        log,
    )


def prune_metrics(table: PerformanceTable, threshold: float,
                  metrics: list[str] | None = None) -> tuple[list[str], list[DropRecord]]:
    """Keep a decorrelated subset of metrics, judged over all (dataset,
    algorithm) cells. Requires a dense table for the listed metrics."""
    metrics = list(table.metrics) if metrics is None else list(metrics)
    missing = table.missing_cells(metrics=metrics)
    if missing:
        raise MissingCellError(
            f"metric pruning needs a dense table; first missing cell {missing[0]}")
    columns = np.column_stack([table.metric_vector(m) for m in metrics])
    kept, log = _greedy_prune(columns, metrics, threshold)
    return [metrics[j] for j in kept], log


class CorrelationPruner(BaseEstimator, TransformerMixin):
    """Transformer view of the greedy correlation filter.

    fit records which columns survive on the training matrix; transform
    selects those columns from any matrix with the same width.
    """

    def __init__(self, threshold: float = 0.75, drop_zero_variance: bool = True):
        self.threshold = threshold
        self.drop_zero_variance = drop_zero_variance

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        names = [str(j) for j in range(X.shape[1])]
        alive = list(range(X.shape[1]))
        if self.drop_zero_variance:
            alive = [j for j in alive if not bool((X[:, j] == X[0, j]).all())]
            if not alive:
                raise AllColumnsDroppedError("all columns have zero variance")
        kept_local, _ = _greedy_prune(
            X[:, alive], [names[j] for j in alive], self.threshold)
        self.n_features_in_ = X.shape[1]
        self.support_ = np.array([alive[j] for j in kept_local], dtype=np.intp)
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise LengthMismatchError(
                f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return X[:, self.support_]
