"""Shared domain types: metric registry, run configuration, seeding.

Everything here is immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    InvalidConfigValueError,
    MissingFileError,
    UnknownConfigKeyError,
    UnknownMetricError,
)

__all__ = [
    "Orientation",
    "MetricSpec",
    "MetricRegistry",
    "default_metric_registry",
    "RunConfig",
    "Mode",
    "derive_seed",
    "rng_for",
    "format_float",
    "read_csv_rows",
]


class Orientation(Enum):
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"


class Mode(Enum):
    """Regression scenario: one model per algorithm and metric, or one
    multi-target model per algorithm covering all metrics jointly."""

    STR = "str"
    MTR = "mtr"


@dataclass(frozen=True)
class MetricSpec:
    name: str
    orientation: Orientation

    @property
    def higher_is_better(self) -> bool:
        return self.orientation is Orientation.HIGHER_IS_BETTER


class MetricRegistry:
    """Ordered collection of metric specs with unique names."""

    def __init__(self, specs: list[MetricSpec]):
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("metric names must be unique within a registry")
        self._specs = tuple(specs)
        self._by_name = {s.name: s for s in specs}

    def __len__(self) -> int:
        return len(self._specs)

    def __iter__(self):
        return iter(self._specs)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def names(self) -> list[str]:
        return [s.name for s in self._specs]

    def get(self, name: str) -> MetricSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownMetricError(
                f"metric {name!r} is not in the registry "
                f"(known: {', '.join(self.names)})"
            ) from None

    def higher_is_better(self, name: str) -> bool:
        return self.get(name).higher_is_better


def default_metric_registry() -> MetricRegistry:
    """The six evaluation measures retained after metric pruning.

    One error and Hamming loss count mistakes, so lower is better; the
    other four are gain metrics.
    """
    return MetricRegistry([
        MetricSpec("average_precision", Orientation.HIGHER_IS_BETTER),
        MetricSpec("macro_f1", Orientation.HIGHER_IS_BETTER),
        MetricSpec("one_error", Orientation.LOWER_IS_BETTER),
        MetricSpec("auroc", Orientation.HIGHER_IS_BETTER),
        MetricSpec("hamming_loss", Orientation.LOWER_IS_BETTER),
        MetricSpec("micro_precision", Orientation.HIGHER_IS_BETTER),
    ])


@dataclass(frozen=True)
class RunConfig:
    """Tunables shared by the whole pipeline.

    All randomness in the toolkit derives from ``base_seed`` through
    :func:`derive_seed`, so results are independent of execution order
    and parallelism.
    """

    base_seed: int = 0
    correlation_threshold_features: float = 0.75
    correlation_threshold_metrics: float = 0.90
    min_wins: int = 8
    inner_cv_folds: int = 5
    chi_square_critical: float = 6.635
    numeric_tolerance: float = 1e-9

    def __post_init__(self):
        if self.base_seed < 0:
            raise InvalidConfigValueError("base_seed must be a non-negative integer")
        for key in ("correlation_threshold_features", "correlation_threshold_metrics"):
            v = getattr(self, key)
            if not 0.0 < v <= 1.0:
                raise InvalidConfigValueError(f"{key} must lie in (0, 1], got {v}")
        if self.min_wins < 1:
            raise InvalidConfigValueError("min_wins must be >= 1")
        if self.inner_cv_folds < 2:
            raise InvalidConfigValueError("inner_cv_folds must be >= 2")
        if self.chi_square_critical <= 0:
            raise InvalidConfigValueError("chi_square_critical must be positive")
        if self.numeric_tolerance <= 0:
            raise InvalidConfigValueError("numeric_tolerance must be positive")

    _INT_FIELDS = frozenset({"base_seed", "min_wins", "inner_cv_folds"})

    def to_text(self) -> str:
        """Flat key/value serialization; exact float round-trip."""
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v if f.name in self._INT_FIELDS else format_float(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidConfigValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in known:
                raise UnknownConfigKeyError(f"line {lineno}: unknown configuration key {key!r}")
            try:
                values[key] = int(val) if key in cls._INT_FIELDS else float(val)
            except ValueError:
                raise InvalidConfigValueError(
                    f"line {lineno}: cannot parse value {val!r} for key {key!r}"
                ) from None
        return cls(**values)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise MissingFileError(f"configuration file not found: {path}")
        return cls.from_text(path.read_text(encoding="utf-8"))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        """Stable hash of the configuration, stamped on every result file."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


def derive_seed(base_seed: int, task_id: str, index: int = 0) -> int:
    """Derive an independent 64-bit seed for one task.

    The (base_seed, task_id, index) triple is hashed with SHA-256, so tree i
    of task t always sees the same stream no matter how work is scheduled.
    """
    payload = f"{base_seed}\x1f{task_id}\x1f{index}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def rng_for(base_seed: int, task_id: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, task_id, index))


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (exact round-trip)."""
    return f"{float(x):.17g}"


def read_csv_rows(path: str | Path) -> list[list[str]]:
    """All CSV rows of a file, skipping blank lines and '#' comment lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        content = (line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        return list(csv.reader(content))
