"""Load multi-label datasets and algorithm performance tables; validate joins.

Datasets arrive as a CSV plus a small JSON manifest naming the label columns;
performance data arrives as a long-format CSV keyed (dataset, algorithm,
metric). Axis orders are always first-appearance order from the file, never
map iteration order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .core import MetricRegistry, format_float, read_csv_rows
from .errors import (
    DatasetValidationError,
    DisjointCorporaError,
    DuplicateKeyError,
    LabelColumnNotFoundError,
    MalformedManifestError,
    MalformedTableError,
    MissingCellError,
    MissingFileError,
    NonBinaryLabelValueError,
    NonFiniteValueError,
)

__all__ = [
    "ColumnKind",
    "MLCDataset",
    "load_dataset",
    "save_dataset",
    "PerformanceTable",
    "load_performance_table",
    "ValidationReport",
    "validate_join",
]

PERFORMANCE_HEADER = ["dataset", "algorithm", "metric", "value"]


class ColumnKind(Enum):
    NUMERIC = "numeric"
    BINARY = "binary"
    NOMINAL = "nominal"


@dataclass(eq=False)
class MLCDataset:
    """One multi-label dataset: attributes, binary label matrix, domain tag."""

    id: str
    domain: str
    attributes: pd.DataFrame
    kinds: dict[str, ColumnKind]
    labels: np.ndarray
    label_names: list[str]

    def __post_init__(self):
        n, d = self.attributes.shape
        if n < 1:
            raise DatasetValidationError(f"dataset {self.id!r} has no instances")
        if d < 1:
            raise DatasetValidationError(f"dataset {self.id!r} has no attribute columns")
        if self.labels.shape != (n, len(self.label_names)):
            raise DatasetValidationError(
                f"dataset {self.id!r}: label matrix shape {self.labels.shape} does not "
                f"match {n} instances x {len(self.label_names)} labels")
        if len(self.label_names) < 2:
            raise DatasetValidationError(f"dataset {self.id!r} needs at least 2 labels")
        if not np.isin(self.labels, (0, 1)).all():
            raise DatasetValidationError(f"dataset {self.id!r}: labels must be 0/1")
        missing_kinds = [c for c in self.attributes.columns if c not in self.kinds]
        if missing_kinds:
            raise DatasetValidationError(
                f"dataset {self.id!r}: no declared kind for columns {missing_kinds}")
        for col, kind in self.kinds.items():
            if kind is ColumnKind.BINARY:
                vals = set(np.asarray(self.attributes[col], dtype=np.float64))
                if not vals <= {0.0, 1.0}:
                    raise DatasetValidationError(
                        f"dataset {self.id!r}: binary column {col!r} holds values "
                        f"outside {{0, 1}}")

    @property
    def n_instances(self) -> int:
        return self.attributes.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.attributes.shape[1]

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def numeric_columns(self) -> list[str]:
        return [c for c in self.attributes.columns if self.kinds[c] is ColumnKind.NUMERIC]

    def kind_counts(self) -> dict[ColumnKind, int]:
        counts = {kind: 0 for kind in ColumnKind}
        for c in self.attributes.columns:
            counts[self.kinds[c]] += 1
        return counts

    def equals(self, other: "MLCDataset") -> bool:
        return (
            self.id == other.id
            and self.domain == other.domain
            and self.label_names == other.label_names
            and np.array_equal(self.labels, other.labels)
            and list(self.attributes.columns) == list(other.attributes.columns)
            and self.kinds == other.kinds
            and all(
                np.array_equal(
                    self.attributes[c].to_numpy(), other.attributes[c].to_numpy())
                for c in self.attributes.columns
            )
        )


def _parse_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def _infer_kind(values: list[str]) -> ColumnKind:
    parsed = [_parse_float(v) for v in values]
    if any(p is None for p in parsed):
        return ColumnKind.NOMINAL
    if set(parsed) <= {0.0, 1.0}:
        return ColumnKind.BINARY
    return ColumnKind.NUMERIC


def _read_csv_table(path: Path) -> tuple[list[str], list[list[str]]]:
    rows = read_csv_rows(path)
    if not rows:
        raise MalformedManifestError(f"data file {path} is empty")
    header, data = rows[0], rows[1:]
    if len(set(header)) != len(header):
        raise MalformedManifestError(f"data file {path} has duplicate column names")
    for i, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise MalformedManifestError(
                f"data file {path}: row {i} has {len(row)} cells, expected {len(header)}")
    return header, data


def load_dataset(manifest_path: str | Path) -> MLCDataset:
    """Load one dataset from its JSON manifest.

    The manifest must carry id, domain, data (CSV path relative to the
    manifest), and labels (at least two column names). Attribute kinds come
    from the optional ``kinds`` map, otherwise they are inferred per column:
    value set within {0, 1} means binary, all-parseable-as-real means
    numeric, anything else nominal.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedManifestError(f"{manifest_path}: not valid JSON ({exc})") from None

    if not isinstance(manifest, dict):
        raise MalformedManifestError(f"{manifest_path}: manifest must be a JSON object")
    for key in ("id", "domain", "data", "labels"):
        if key not in manifest:
            raise MalformedManifestError(f"{manifest_path}: missing required key {key!r}")
    label_names = manifest["labels"]
    if not isinstance(label_names, list) or len(label_names) < 2:
        raise MalformedManifestError(
            f"{manifest_path}: 'labels' must list at least two column names")

    data_path = manifest_path.parent / manifest["data"]
    if not data_path.exists():
        raise MissingFileError(f"data file not found: {data_path}")
    header, rows = _read_csv_table(data_path)

    for name in label_names:
        if name not in header:
            raise LabelColumnNotFoundError(
                f"dataset {manifest['id']!r}: label column {name!r} not in data header")

    col_index = {name: i for i, name in enumerate(header)}
    n = len(rows)
    labels = np.zeros((n, len(label_names)), dtype=np.int8)
    for j, name in enumerate(label_names):
        ci = col_index[name]
        for i, row in enumerate(rows):
            parsed = _parse_float(row[ci])
            if parsed is None or parsed not in (0.0, 1.0):
                raise NonBinaryLabelValueError(manifest["id"], i + 1, name, row[ci])
            labels[i, j] = int(parsed)

    attr_names = [c for c in header if c not in set(label_names)]
    declared = manifest.get("kinds", {})
    if not isinstance(declared, dict):
        raise MalformedManifestError(f"{manifest_path}: 'kinds' must be an object")
    for col, kind_name in declared.items():
        if col not in attr_names:
            raise MalformedManifestError(
                f"{manifest_path}: 'kinds' names unknown attribute column {col!r}")
        if kind_name not in {k.value for k in ColumnKind}:
            raise MalformedManifestError(
                f"{manifest_path}: unknown kind {kind_name!r} for column {col!r}")

    kinds: dict[str, ColumnKind] = {}
    columns: dict[str, object] = {}
    for name in attr_names:
        raw = [row[col_index[name]] for row in rows]
        kind = (ColumnKind(declared[name]) if name in declared else _infer_kind(raw))
        if kind is ColumnKind.NOMINAL:
            columns[name] = pd.Series(raw, dtype=object)
        else:
            parsed = [_parse_float(v) for v in raw]
            if any(p is None for p in parsed):
                bad = next(v for v, p in zip(raw, parsed) if p is None)
                raise DatasetValidationError(
                    f"dataset {manifest['id']!r}: column {name!r} declared "
                    f"{kind.value} but holds {bad!r}")
            columns[name] = pd.Series(parsed, dtype=np.float64)
        kinds[name] = kind

    return MLCDataset(
        id=str(manifest["id"]),
        domain=str(manifest["domain"]),
        attributes=pd.DataFrame(columns),
        kinds=kinds,
        labels=labels,
        label_names=list(label_names),
    )


def save_dataset(ds: MLCDataset, out_dir: str | Path) -> Path:
    """Write <id>.json + <id>.csv into out_dir; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_name = f"{ds.id}.csv"
    manifest = {
        "id": ds.id,
        "domain": ds.domain,
        "data": data_name,
        "labels": list(ds.label_names),
        "kinds": {c: k.value for c, k in ds.kinds.items()},
    }
    attr_cols = list(ds.attributes.columns)
    with open(out_dir / data_name, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(attr_cols + list(ds.label_names))
        for i in range(ds.n_instances):
            row = []
            for c in attr_cols:
                v = ds.attributes[c].iloc[i]
                row.append(str(v) if ds.kinds[c] is ColumnKind.NOMINAL else format_float(v))
            row.extend(str(int(v)) for v in ds.labels[i])
            writer.writerow(row)
    manifest_path = out_dir / f"{ds.id}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


class PerformanceTable:
    """(dataset, algorithm, metric) -> value with first-appearance axis order."""

    def __init__(self):
        self._values: dict[tuple[str, str, str], float] = {}
        self.datasets: list[str] = []
        self.algorithms: list[str] = []
        self.metrics: list[str] = []
        self._dataset_set: set[str] = set()
        self._algorithm_set: set[str] = set()
        self._metric_set: set[str] = set()

    def add(self, dataset: str, algorithm: str, metric: str, value: float) -> None:
        key = (dataset, algorithm, metric)
        if key in self._values:
            raise DuplicateKeyError(f"duplicate performance row for {key}")
        if not np.isfinite(value):
            raise NonFiniteValueError(f"non-finite value {value!r} for {key}")
        self._values[key] = float(value)
        if dataset not in self._dataset_set:
            self._dataset_set.add(dataset)
            self.datasets.append(dataset)
        if algorithm not in self._algorithm_set:
            self._algorithm_set.add(algorithm)
            self.algorithms.append(algorithm)
        if metric not in self._metric_set:
            self._metric_set.add(metric)
            self.metrics.append(metric)

    def __len__(self) -> int:
        return len(self._values)

    def has(self, dataset: str, algorithm: str, metric: str) -> bool:
        return (dataset, algorithm, metric) in self._values

    def value(self, dataset: str, algorithm: str, metric: str) -> float:
        try:
            return self._values[(dataset, algorithm, metric)]
        except KeyError:
            raise MissingCellError(
                f"no performance value for ({dataset}, {algorithm}, {metric})") from None

    def missing_cells(self, datasets=None, algorithms=None, metrics=None):
        datasets = self.datasets if datasets is None else datasets
        algorithms = self.algorithms if algorithms is None else algorithms
        metrics = self.metrics if metrics is None else metrics
        return [
            (d, a, m)
            for d in datasets for a in algorithms for m in metrics
            if (d, a, m) not in self._values
        ]

    def is_dense(self, datasets=None, algorithms=None, metrics=None) -> bool:
        return not self.missing_cells(datasets, algorithms, metrics)

    def dense_datasets(self, metric: str, algorithms=None) -> list[str]:
        """Datasets holding a value for every listed algorithm on this metric."""
        algorithms = self.algorithms if algorithms is None else algorithms
        return [
            d for d in self.datasets
            if all((d, a, metric) in self._values for a in algorithms)
        ]

    def metric_vector(self, metric: str) -> np.ndarray:
        """Values over (dataset, algorithm) in canonical axis order."""
        return np.array(
            [self.value(d, a, metric) for d in self.datasets for a in self.algorithms],
            dtype=np.float64,
        )

    def restrict(self, datasets=None, algorithms=None, metrics=None) -> "PerformanceTable":
        datasets = self.datasets if datasets is None else [d for d in self.datasets if d in set(datasets)]
        algorithms = self.algorithms if algorithms is None else [a for a in self.algorithms if a in set(algorithms)]
        metrics = self.metrics if metrics is None else [m for m in self.metrics if m in set(metrics)]
        out = PerformanceTable()
        for d in datasets:
            for a in algorithms:
                for m in metrics:
                    if self.has(d, a, m):
                        out.add(d, a, m, self._values[(d, a, m)])
        return out

    def save_csv(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment is not None:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(PERFORMANCE_HEADER)
            for d in self.datasets:
                for a in self.algorithms:
                    for m in self.metrics:
                        if self.has(d, a, m):
                            writer.writerow([d, a, m, format_float(self._values[(d, a, m)])])


def load_performance_table(csv_path: str | Path,
                           registry: MetricRegistry) -> PerformanceTable:
    """Read a long-format performance CSV, checking metrics against the registry."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise MissingFileError(f"performance file not found: {csv_path}")
    rows = read_csv_rows(csv_path)
    if not rows:
        raise MalformedTableError(f"{csv_path}: empty file")
    if rows[0] != PERFORMANCE_HEADER:
        raise MalformedTableError(
            f"{csv_path}: header must be exactly {','.join(PERFORMANCE_HEADER)}")
    table = PerformanceTable()
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise MalformedTableError(f"{csv_path}: row {i} has {len(row)} cells")
        dataset, algorithm, metric, raw = row
        registry.get(metric)  # raises UnknownMetricError with the known names
        parsed = _parse_float(raw)
        if parsed is None:
            raise MalformedTableError(f"{csv_path}: row {i}: cannot parse value {raw!r}")
        if not np.isfinite(parsed):
            raise NonFiniteValueError(f"{csv_path}: row {i}: non-finite value {raw!r}")
        table.add(dataset, algorithm, metric, parsed)
    return table


@dataclass
class ValidationReport:
    """Join diagnostics between loaded datasets and the performance table."""

    common_ids: list[str]
    feature_only_ids: list[str]
    performance_only_ids: list[str]
    excluded: dict[str, list[str]] = field(default_factory=dict)

    @property
    def is_clean(self) -> bool:
        return not (self.feature_only_ids or self.performance_only_ids or
                    any(self.excluded.values()))


def validate_join(datasets: list[MLCDataset], table: PerformanceTable,
                  allow_missing: bool = False) -> ValidationReport:
    """Check that datasets and performance cover each other.

    Without allow_missing, any hole in the table over the common dataset ids
    is an error. With it, a dataset missing any value for a metric is
    recorded under ``excluded[metric]`` and left for the caller to skip.
    """
    feature_ids = [ds.id for ds in datasets]
    perf_ids = set(table.datasets)
    common = [i for i in feature_ids if i in perf_ids]
    if not common:
        raise DisjointCorporaError(
            "no dataset id appears in both the loaded datasets and the performance table")
    feature_set = set(feature_ids)
    report = ValidationReport(
        common_ids=common,
        feature_only_ids=[i for i in feature_ids if i not in perf_ids],
        performance_only_ids=[i for i in table.datasets if i not in feature_set],
    )
    for metric in table.metrics:
        dense = set(table.dense_datasets(metric))
        holes = [d for d in common if d not in dense]
        if holes:
            if not allow_missing:
                missing = table.missing_cells(datasets=holes, metrics=[metric])
                raise MissingCellError(
                    f"performance table is not dense for metric {metric!r}: "
                    f"first missing cell {missing[0]}")
            report.excluded[metric] = holes
    return report
