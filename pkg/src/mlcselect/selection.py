"""Portfolio construction, the leave-one-dataset-out harness, and selector
quality estimation against the single-best and virtual-best baselines.

The harness holds out one dataset at a time, fits performance regressors on
the rest, and predicts the held-out row. A selector then picks the algorithm
with the best predicted value per (dataset, metric); quality is reported as
macro-F1 against the true best algorithm and as regret against the virtual
best solver.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Mode, MetricRegistry, MetricSpec, RunConfig, format_float, read_csv_rows
from .errors import (
    DuplicateKeyError,
    EmptyPortfolioError,
    LengthMismatchError,
    MetricSetMismatchError,
    MissingCellError,
    ModelNotFoundError,
)
from .forest import ForestParams, RegressionForest, default_grid, fit_forest, grid_search
from .ingest import PerformanceTable
from .metafeatures import MetaFeatureMatrix

__all__ = [
    "AlgorithmPortfolio",
    "build_portfolio",
    "PredictionsTable",
    "LOOModels",
    "LOOResult",
    "loo_predictions",
    "select",
    "vbs",
    "sbs",
    "selector_macro_f1",
    "BoxStats",
    "DatasetOutcome",
    "MetricReport",
    "SelectionReport",
    "regret_table",
    "evaluate_selection",
    "ComparisonSummary",
    "compare_reports",
]

PREDICTIONS_HEADER = ["dataset", "algorithm", "metric", "predicted"]


@dataclass
class AlgorithmPortfolio:
    """Algorithms that won often enough to be worth selecting among."""

    algorithms: list[str]
    win_counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def __contains__(self, algorithm: str) -> bool:
        return algorithm in self.algorithms

    def __len__(self) -> int:
        return len(self.algorithms)

    def to_dict(self) -> dict:
        return {
            "algorithms": list(self.algorithms),
            "win_counts": {f"{a}|{m}": c for (a, m), c in sorted(self.win_counts.items())},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AlgorithmPortfolio":
        counts = {}
        for key, c in payload.get("win_counts", {}).items():
            a, m = key.split("|", 1)
            counts[(a, m)] = int(c)
        return cls(list(payload["algorithms"]), counts)


def build_portfolio(table: PerformanceTable, metrics: list[MetricSpec],
                    cfg: RunConfig) -> AlgorithmPortfolio:
    """Keep algorithms that win on at least cfg.min_wins datasets for some metric.

    A win on (dataset, metric) goes to every algorithm tied for the
    orientation-best true value. Portfolio order is the table's algorithm
    order.
    """
    names = [m.name for m in metrics]
    missing = table.missing_cells(metrics=names)
    if missing:
        raise MissingCellError(
            f"portfolio construction needs a dense table; first missing {missing[0]}")
    wins: dict[tuple[str, str], int] = {
        (a, m): 0 for a in table.algorithms for m in names}
    for spec in metrics:
        for d in table.datasets:
            values = [table.value(d, a, spec.name) for a in table.algorithms]
            best = max(values) if spec.higher_is_better else min(values)
            for a, v in zip(table.algorithms, values):
                if v == best:
                    wins[(a, spec.name)] += 1
    kept = [a for a in table.algorithms
            if max(wins[(a, m)] for m in names) >= cfg.min_wins]
    if not kept:
        raise EmptyPortfolioError(
            f"no algorithm reached {cfg.min_wins} wins on any metric")
    return AlgorithmPortfolio(
        kept, {(a, m): wins[(a, m)] for a in kept for m in names})


class PredictionsTable:
    """Held-out performance predictions keyed (dataset, algorithm, metric)."""

    def __init__(self, mode: Mode):
        self.mode = mode
        self._values: dict[tuple[str, str, str], float] = {}
        self.datasets: list[str] = []
        self.algorithms: list[str] = []
        self.metrics: list[str] = []

    def add(self, dataset: str, algorithm: str, metric: str, value: float) -> None:
        key = (dataset, algorithm, metric)
        if key in self._values:
            raise DuplicateKeyError(f"duplicate prediction for {key}")
        self._values[key] = float(value)
        if dataset not in self.datasets:
            self.datasets.append(dataset)
        if algorithm not in self.algorithms:
            self.algorithms.append(algorithm)
        if metric not in self.metrics:
            self.metrics.append(metric)

    def __len__(self) -> int:
        return len(self._values)

    def value(self, dataset: str, algorithm: str, metric: str) -> float:
        try:
            return self._values[(dataset, algorithm, metric)]
        except KeyError:
            raise MissingCellError(
                f"no prediction for ({dataset}, {algorithm}, {metric})") from None

    def save_csv(self, path: str | Path, comment: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment is not None:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(PREDICTIONS_HEADER)
            for d in self.datasets:
                for a in self.algorithms:
                    for m in self.metrics:
                        if (d, a, m) in self._values:
                            writer.writerow(
                                [d, a, m, format_float(self._values[(d, a, m)])])

    @classmethod
    def load_csv(cls, path: str | Path, mode: Mode) -> "PredictionsTable":
        table = cls(mode)
        rows = read_csv_rows(path)
        if not rows or rows[0] != PREDICTIONS_HEADER:
            raise LengthMismatchError(
                f"{path}: header must be {','.join(PREDICTIONS_HEADER)}")
        for row in rows[1:]:
            table.add(row[0], row[1], row[2], float(row[3]))
        return table


class LOOModels:
    """Fold models kept for explanation: the forest that predicted each cell."""

    def __init__(self, mode: Mode, metric_names: list[str]):
        self.mode = mode
        self.metric_names = list(metric_names)
        self._str: dict[tuple[str, str, str], RegressionForest] = {}
        self._mtr: dict[tuple[str, str], RegressionForest] = {}

    def put_str(self, algorithm: str, held_out: str, metric: str,
                forest: RegressionForest) -> None:
        self._str[(algorithm, held_out, metric)] = forest

    def put_mtr(self, algorithm: str, held_out: str, forest: RegressionForest) -> None:
        self._mtr[(algorithm, held_out)] = forest

    def get(self, algorithm: str, held_out: str,
            metric: str) -> tuple[RegressionForest, int]:
        """Forest plus target column index for one (algorithm, fold, metric)."""
        if self.mode is Mode.STR:
            forest = self._str.get((algorithm, held_out, metric))
            if forest is None:
                raise ModelNotFoundError(
                    f"no fold model for ({algorithm}, {held_out}, {metric})")
            return forest, 0
        forest = self._mtr.get((algorithm, held_out))
        if forest is None:
            raise ModelNotFoundError(f"no fold model for ({algorithm}, {held_out})")
        try:
            return forest, self.metric_names.index(metric)
        except ValueError:
            raise ModelNotFoundError(
                f"metric {metric!r} not among model targets") from None


@dataclass
class LOOResult:
    """Everything the harness produced: predictions, errors, tuned params."""

    predictions: PredictionsTable
    squared_errors: dict[tuple[str, str, str], float]
    mse: dict[tuple[str, str], float]
    chosen_params: dict[tuple[str, ...], ForestParams]
    models: LOOModels | None = None
    fold_train_ids: dict[str, list[str]] = field(default_factory=dict)


def _tune(X, Y, grid, folds, base_seed, task_id) -> ForestParams:
    if len(grid) == 1:
        return grid[0]
    best, _ = grid_search(X, Y, grid, folds, base_seed, task_id)
    return best


def loo_predictions(features: MetaFeatureMatrix, table: PerformanceTable,
                    portfolio: AlgorithmPortfolio, metrics: list[MetricSpec],
                    mode: Mode, cfg: RunConfig, *,
                    grid: list[ForestParams] | None = None,
                    keep_models: bool = False, jobs: int = 1) -> LOOResult:
    """Leave-one-dataset-out predictions for every (algorithm, metric) cell.

    STR mode fits one single-target forest per (algorithm, metric) per fold;
    MTR fits one multi-target forest per algorithm per fold, predicting all
    metrics jointly. Hyperparameters are re-tuned per fold by inner
    cross-validated grid search (skipped when the grid has one entry). All
    seeding is derived from fold/algorithm/metric names, so results do not
    depend on scheduling.
    """
    metric_names = [m.name for m in metrics]
    datasets = list(features.dataset_ids)
    missing = table.missing_cells(
        datasets=datasets, algorithms=portfolio.algorithms, metrics=metric_names)
    if missing:
        raise MissingCellError(
            f"harness needs dense performance over the corpus; first missing {missing[0]}")
    grid = default_grid() if grid is None else list(grid)
    folds = cfg.inner_cv_folds
    base_seed = cfg.base_seed
    row_of = {d: i for i, d in enumerate(datasets)}

    def run_fold(held: str):
        train_ids = [d for d in datasets if d != held]
        rows = [row_of[d] for d in train_ids]
        X = features.data[rows]
        x_test = features.data[row_of[held]]
        preds: dict[tuple[str, str], float] = {}
        params_used: dict[tuple[str, ...], ForestParams] = {}
        fold_models: list[tuple] = []
        for alg in portfolio.algorithms:
            if mode is Mode.STR:
                for name in metric_names:
                    y = np.array([table.value(d, alg, name) for d in train_ids])
                    task = f"loo/{held}/alg/{alg}/metric/{name}"
                    params = _tune(X, y, grid, folds, base_seed, task)
                    forest = fit_forest(X, y, params, base_seed, task,
                                        feature_names=features.feature_names,
                                        target_names=[name])
                    preds[(alg, name)] = float(forest.predict_row(x_test)[0])
                    params_used[(held, alg, name)] = params
                    if keep_models:
                        fold_models.append(("str", alg, held, name, forest))
            else:
                Y = np.column_stack(
                    [[table.value(d, alg, name) for d in train_ids]
                     for name in metric_names])
                task = f"loo/{held}/alg/{alg}"
                params = _tune(X, Y, grid, folds, base_seed, task)
                forest = fit_forest(X, Y, params, base_seed, task,
                                    feature_names=features.feature_names,
                                    target_names=metric_names)
                row = forest.predict_row(x_test)
                for j, name in enumerate(metric_names):
                    preds[(alg, name)] = float(row[j])
                params_used[(held, alg)] = params
                if keep_models:
                    fold_models.append(("mtr", alg, held, None, forest))
        return held, preds, params_used, fold_models, train_ids

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fold_results = list(pool.map(run_fold, datasets))
    else:
        fold_results = [run_fold(d) for d in datasets]

    # canonical assembly regardless of completion order
    fold_results.sort(key=lambda item: datasets.index(item[0]))
    predictions = PredictionsTable(mode)
    squared: dict[tuple[str, str, str], float] = {}
    chosen: dict[tuple[str, ...], ForestParams] = {}
    models = LOOModels(mode, metric_names) if keep_models else None
    train_ids_by_fold: dict[str, list[str]] = {}
    for held, preds, params_used, fold_models, train_ids in fold_results:
        train_ids_by_fold[held] = train_ids
        for alg in portfolio.algorithms:
            for name in metric_names:
                value = preds[(alg, name)]
                predictions.add(held, alg, name, value)
                truth = table.value(held, alg, name)
                squared[(held, alg, name)] = (value - truth) ** 2
        chosen.update(params_used)
        if models is not None:
            for kind, alg, held_id, name, forest in fold_models:
                if kind == "str":
                    models.put_str(alg, held_id, name, forest)
                else:
                    models.put_mtr(alg, held_id, forest)
    mse = {
        (alg, name): float(np.mean([squared[(d, alg, name)] for d in datasets]))
        for alg in portfolio.algorithms for name in metric_names
    }
    return LOOResult(predictions, squared, mse, chosen, models, train_ids_by_fold)


def select(pred: PredictionsTable, registry: MetricRegistry,
           portfolio: AlgorithmPortfolio) -> dict[tuple[str, str], str]:
    """Argbest of predicted performance; ties go to earlier portfolio order."""
    out: dict[tuple[str, str], str] = {}
    for d in pred.datasets:
        for m in pred.metrics:
            higher = registry.get(m).higher_is_better
            values = [pred.value(d, a, m) for a in portfolio.algorithms]
            best = max(values) if higher else min(values)
            out[(d, m)] = portfolio.algorithms[values.index(best)]
    return out


def vbs(table: PerformanceTable, metric: str, registry: MetricRegistry,
        datasets: list[str] | None = None,
        algorithms: list[str] | None = None) -> dict[str, str]:
    """True best algorithm per dataset; ties go to earlier table order."""
    higher = registry.get(metric).higher_is_better
    datasets = table.datasets if datasets is None else list(datasets)
    algorithms = table.algorithms if algorithms is None else list(algorithms)
    out = {}
    for d in datasets:
        values = [table.value(d, a, metric) for a in algorithms]
        best = max(values) if higher else min(values)
        out[d] = algorithms[values.index(best)]
    return out


def sbs(table: PerformanceTable, metric: str, registry: MetricRegistry,
        datasets: list[str] | None = None,
        algorithms: list[str] | None = None) -> str:
    """Algorithm with the best mean true performance over the corpus."""
    higher = registry.get(metric).higher_is_better
    datasets = table.datasets if datasets is None else list(datasets)
    algorithms = table.algorithms if algorithms is None else list(algorithms)
    means = [float(np.mean([table.value(d, a, metric) for d in datasets]))
             for a in algorithms]
    best = max(means) if higher else min(means)
    return algorithms[means.index(best)]


def selector_macro_f1(selected: dict[str, str], truth: dict[str, str],
                      portfolio: AlgorithmPortfolio | None = None) -> float:
    """Macro-F1 of the selector viewed as a multi-class classifier.

    Classes are the union of algorithms appearing in truth or selected (not
    the whole portfolio); zero-denominator precision or recall counts as 0.
    """
    if set(selected) != set(truth):
        raise LengthMismatchError("selected and truth must cover the same datasets")
    classes = sorted(set(truth.values()) | set(selected.values()))
    scores = []
    for c in classes:
        tp = sum(1 for k in truth if selected[k] == c and truth[k] == c)
        fp = sum(1 for k in truth if selected[k] == c and truth[k] != c)
        fn = sum(1 for k in truth if selected[k] != c and truth[k] == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        scores.append(f1)
    return float(np.mean(scores))


@dataclass
class BoxStats:
    """Five-number summary with linear-interpolation quartiles."""

    low: float
    q1: float
    median: float
    q3: float
    high: float

    @classmethod
    def from_values(cls, values) -> "BoxStats":
        v = np.asarray(values, dtype=np.float64)
        low, q1, med, q3, high = np.percentile(v, [0, 25, 50, 75, 100])
        return cls(float(low), float(q1), float(med), float(q3), float(high))

    def to_dict(self) -> dict:
        return {"min": self.low, "q1": self.q1, "median": self.median,
                "q3": self.q3, "max": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxStats":
        return cls(d["min"], d["q1"], d["median"], d["q3"], d["max"])


@dataclass
class DatasetOutcome:
    dataset_id: str
    selected: str
    vbs: str
    sbs: str
    y_selected: float
    y_vbs: float
    y_sbs: float
    regret: float

    def to_dict(self) -> dict:
        return {
            "selected": self.selected, "vbs": self.vbs, "sbs": self.sbs,
            "y_selected": self.y_selected, "y_vbs": self.y_vbs,
            "y_sbs": self.y_sbs, "regret": self.regret,
        }


@dataclass
class MetricReport:
    """Selector quality for one metric: outcomes, macro-F1, regret summaries."""

    metric: str
    sbs_algorithm: str
    outcomes: list[DatasetOutcome]
    macro_f1: float
    constant_macro_f1: dict[str, float]
    mean_regret: dict[str, float]      # "AS" plus one entry per algorithm
    regret_box: dict[str, BoxStats]

    def to_dict(self) -> dict:
        return {
            "sbs_algorithm": self.sbs_algorithm,
            "macro_f1": self.macro_f1,
            "constant_macro_f1": dict(sorted(self.constant_macro_f1.items())),
            "mean_regret": dict(sorted(self.mean_regret.items())),
            "regret_box": {k: v.to_dict() for k, v in sorted(self.regret_box.items())},
            "datasets": {o.dataset_id: o.to_dict() for o in self.outcomes},
        }

    @classmethod
    def from_dict(cls, metric: str, d: dict) -> "MetricReport":
        outcomes = [
            DatasetOutcome(ds, row["selected"], row["vbs"], row["sbs"],
                           row["y_selected"], row["y_vbs"], row["y_sbs"],
                           row["regret"])
            for ds, row in sorted(d["datasets"].items())
        ]
        return cls(
            metric=metric,
            sbs_algorithm=d["sbs_algorithm"],
            outcomes=outcomes,
            macro_f1=d["macro_f1"],
            constant_macro_f1=dict(d["constant_macro_f1"]),
            mean_regret=dict(d["mean_regret"]),
            regret_box={k: BoxStats.from_dict(v) for k, v in d["regret_box"].items()},
        )


def regret_table(selected: dict[str, str], table: PerformanceTable, metric: str,
                 registry: MetricRegistry,
                 portfolio: AlgorithmPortfolio) -> MetricReport:
    """Score one metric's selections against VBS/SBS with regret boxplot data.

    Regret is |y(chosen) - y(vbs)| on true values. Besides the selector
    ("AS"), every portfolio algorithm is scored as a constant selector; the
    SBS baseline is the constant selector of the SBS algorithm.
    """
    datasets = sorted(selected)
    algorithms = portfolio.algorithms
    truth_best = vbs(table, metric, registry, datasets, algorithms)
    sbs_alg = sbs(table, metric, registry, datasets, algorithms)
    outcomes = []
    as_regrets = []
    for d in datasets:
        y_vbs = table.value(d, truth_best[d], metric)
        y_sel = table.value(d, selected[d], metric)
        regret = abs(y_sel - y_vbs)
        outcomes.append(DatasetOutcome(
            d, selected[d], truth_best[d], sbs_alg,
            y_sel, y_vbs, table.value(d, sbs_alg, metric), regret))
        as_regrets.append(regret)
    mean_regret = {"AS": float(np.mean(as_regrets))}
    regret_box = {"AS": BoxStats.from_values(as_regrets)}
    constant_macro = {}
    for a in algorithms:
        regs = [abs(table.value(d, a, metric) - table.value(d, truth_best[d], metric))
                for d in datasets]
        mean_regret[a] = float(np.mean(regs))
        regret_box[a] = BoxStats.from_values(regs)
        constant_macro[a] = selector_macro_f1({d: a for d in datasets}, truth_best)
    macro = selector_macro_f1({d: selected[d] for d in datasets}, truth_best)
    return MetricReport(metric, sbs_alg, outcomes, macro, constant_macro,
                        mean_regret, regret_box)


@dataclass
class SelectionReport:
    """Full per-metric quality report, JSON round-trippable for comparison."""

    mode: Mode
    portfolio: list[str]
    metrics: list[str]
    per_metric: dict[str, MetricReport]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "portfolio": list(self.portfolio),
            "metrics": list(self.metrics),
            "per_metric": {m: self.per_metric[m].to_dict() for m in self.metrics},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "SelectionReport":
        metrics = list(payload["metrics"])
        return cls(
            mode=Mode(payload["mode"]),
            portfolio=list(payload["portfolio"]),
            metrics=metrics,
            per_metric={m: MetricReport.from_dict(m, payload["per_metric"][m])
                        for m in metrics},
        )

    @classmethod
    def from_json(cls, text: str) -> "SelectionReport":
        return cls.from_dict(json.loads(text))


def evaluate_selection(pred: PredictionsTable, table: PerformanceTable,
                       metrics: list[MetricSpec], registry: MetricRegistry,
                       portfolio: AlgorithmPortfolio) -> SelectionReport:
    """Run select + regret_table over every metric and bundle the reports."""
    chosen = select(pred, registry, portfolio)
    per_metric = {}
    for spec in metrics:
        by_dataset = {d: chosen[(d, spec.name)] for d in pred.datasets}
        per_metric[spec.name] = regret_table(
            by_dataset, table, spec.name, registry, portfolio)
    return SelectionReport(pred.mode, list(portfolio.algorithms),
                           [m.name for m in metrics], per_metric)


@dataclass
class ComparisonSummary:
    """Per-metric macro-F1 deltas and selection changes between two reports."""

    metrics: list[str]
    macro_f1_delta: dict[str, float]
    selection_changes: dict[str, list[tuple[str, str, str]]]

    def to_dict(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "macro_f1_delta": {m: self.macro_f1_delta[m] for m in self.metrics},
            "selection_changes": {
                m: [list(c) for c in self.selection_changes[m]] for m in self.metrics},
        }


def compare_reports(a: SelectionReport, b: SelectionReport) -> ComparisonSummary:
    """Delta of b relative to a; both reports must cover the same metrics."""
    if set(a.metrics) != set(b.metrics):
        raise MetricSetMismatchError(
            f"reports cover different metrics: {sorted(a.metrics)} vs {sorted(b.metrics)}")
    metrics = list(a.metrics)
    deltas = {}
    changes: dict[str, list[tuple[str, str, str]]] = {}
    for m in metrics:
        ra, rb = a.per_metric[m], b.per_metric[m]
        deltas[m] = rb.macro_f1 - ra.macro_f1
        sel_a = {o.dataset_id: o.selected for o in ra.outcomes}
        sel_b = {o.dataset_id: o.selected for o in rb.outcomes}
        changes[m] = [
            (d, sel_a[d], sel_b[d])
            for d in sorted(set(sel_a) & set(sel_b)) if sel_a[d] != sel_b[d]
        ]
    return ComparisonSummary(metrics, deltas, changes)
