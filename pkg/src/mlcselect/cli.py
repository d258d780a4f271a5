"""Command-line front end.

Every subcommand writes run_manifest.json into the output directory before
any result file, stamps the configuration hash on every artifact, writes
files atomically (temp + rename), and emits no timestamps, so identical
inputs with identical seeds produce byte-identical bundles.

Exit codes: 0 success; 2 usage or ingestion failure; 3 pipeline stage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from ._svg import beeswarm_svg, heatmap_svg
from .core import Mode, RunConfig, default_metric_registry, format_float
from .errors import (
    DatasetValidationError,
    DisjointCorporaError,
    DuplicateKeyError,
    InvalidConfigValueError,
    LabelColumnNotFoundError,
    MalformedManifestError,
    MalformedTableError,
    MissingCellError,
    MissingFileError,
    MlcSelectError,
    NonBinaryLabelValueError,
    NonFiniteValueError,
    UnknownConfigKeyError,
    UnknownMetricError,
)
from .explain import domain_topk, save_explanations_csv, selector_shap, summary_ranking
from .forest import ForestParams, default_grid
from .ingest import load_dataset, load_performance_table, validate_join
from .metafeatures import (
    MetaFeatureMatrix,
    build_matrix,
    compute_metafeatures,
    prune_correlated,
    prune_metrics,
)
from .selection import (
    AlgorithmPortfolio,
    PredictionsTable,
    SelectionReport,
    build_portfolio,
    compare_reports,
    evaluate_selection,
    loo_predictions,
    select,
)

_INGEST_ERRORS = (
    MissingFileError,
    MalformedManifestError,
    MalformedTableError,
    DatasetValidationError,
    LabelColumnNotFoundError,
    NonBinaryLabelValueError,
    UnknownMetricError,
    DuplicateKeyError,
    NonFiniteValueError,
    DisjointCorporaError,
    MissingCellError,
    UnknownConfigKeyError,
    InvalidConfigValueError,
)

# single in-grid candidate for quick runs; "full" is the published 72-point grid
FAST_GRID = [ForestParams(n_estimators=50, max_features="auto",
                          max_depth=4, min_samples_split=2)]


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(base_seed=args.seed)
    return cfg


def _grid_for(args):
    return default_grid() if getattr(args, "grid", "fast") == "full" else list(FAST_GRID)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_save(path: Path, save) -> None:
    """Run a save callback against a temp path, then rename into place."""
    tmp = path.with_name(path.name + ".tmp")
    save(tmp)
    os.replace(tmp, path)


def _write_json(path: Path, payload: dict, cfg: RunConfig) -> None:
    payload = {"config_hash": cfg.digest(), **payload}
    _atomic_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash={cfg.digest()}"


def _write_run_manifest(out: Path, args, cfg: RunConfig, inputs: dict) -> None:
    # no timestamps and no scheduling details (--jobs): reruns must be byte-identical
    payload = {
        "tool": "mlcselect",
        "version": __version__,
        "command": args.command,
        "config": cfg.to_text(),
        "config_hash": cfg.digest(),
        "mode": getattr(args, "mode", None),
        "grid": getattr(args, "grid", None),
        "inputs": inputs,
        "out": str(out),
    }
    _atomic_text(out / "run_manifest.json",
                 json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_datasets(paths):
    return [load_dataset(p) for p in paths]


def _usable_ids(datasets, table, allow_missing: bool) -> list[str]:
    report = validate_join(datasets, table, allow_missing=allow_missing)
    excluded = {d for ids in report.excluded.values() for d in ids}
    return [d for d in report.common_ids if d not in excluded]


def _metric_specs(names, registry):
    return [registry.get(m) for m in names]


def _write_heatmap(out: Path, report: SelectionReport, cfg: RunConfig) -> None:
    as_label = f"AS({report.mode.value.upper()})"
    rows = list(report.portfolio) + [as_label]
    values = []
    for selector in report.portfolio:
        values.append([report.per_metric[m].constant_macro_f1[selector]
                       for m in report.metrics])
    values.append([report.per_metric[m].macro_f1 for m in report.metrics])
    lines = [f"# {_stamp(cfg)}", ",".join(["selector"] + report.metrics)]
    for label, row in zip(rows, values):
        lines.append(",".join([label] + [format_float(v) for v in row]))
    _atomic_text(out / "macro_f1_heatmap.csv", "\n".join(lines) + "\n")
    _atomic_save(out / "macro_f1_heatmap.svg",
                 lambda p: heatmap_svg(rows, report.metrics, values, p,
                                       comment=_stamp(cfg)))


def _write_boxplots(out: Path, report: SelectionReport, cfg: RunConfig) -> None:
    lines = [f"# {_stamp(cfg)}", "metric,selector,mean,min,q1,median,q3,max"]
    for m in report.metrics:
        rep = report.per_metric[m]
        for selector in ["AS"] + list(report.portfolio):
            box = rep.regret_box[selector]
            cells = [rep.mean_regret[selector], box.low, box.q1,
                     box.median, box.q3, box.high]
            lines.append(",".join([m, selector] + [format_float(c) for c in cells]))
    _atomic_text(out / "regret_boxplots.csv", "\n".join(lines) + "\n")


def cmd_features(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {"datasets": list(args.manifests)})
    datasets = _load_datasets(args.manifests)
    vectors = [compute_metafeatures(ds, cfg) for ds in datasets]
    matrix = build_matrix(vectors)
    _atomic_save(out / "features.csv",
                 lambda p: matrix.save_csv(p, comment=_stamp(cfg)))
    warn_lines = [f"# {_stamp(cfg)}", "dataset,warning"]
    for v in sorted(vectors, key=lambda v: v.dataset_id):
        for w in v.warnings:
            warn_lines.append(f"{v.dataset_id},{w}")
    _atomic_text(out / "features_warnings.csv", "\n".join(warn_lines) + "\n")
    return 0


def cmd_prune(args) -> int:
    if not args.features and not args.performance:
        print("error: prune needs --features and/or --performance", file=sys.stderr)
        return 2
    cfg = _load_config(args)
    out = _out_dir(args)
    inputs = {"features": args.features, "performance": args.performance}
    _write_run_manifest(out, args, cfg, inputs)
    if args.features:
        matrix = MetaFeatureMatrix.load_csv(args.features)
        pruned = prune_correlated(matrix, cfg.correlation_threshold_features)
        _atomic_save(out / "features_pruned.csv",
                     lambda p: pruned.save_csv(p, comment=_stamp(cfg)))
        _atomic_save(out / "drop_log.csv",
                     lambda p: pruned.save_drop_log(p, comment=_stamp(cfg)))
    if args.performance:
        registry = default_metric_registry()
        table = load_performance_table(args.performance, registry)
        kept, log = prune_metrics(table, cfg.correlation_threshold_metrics)
        _write_json(out / "metrics_kept.json", {
            "metrics": kept,
            "dropped": [rec.as_row() for rec in log],
        }, cfg)
    return 0


def cmd_portfolio(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {"performance": args.performance})
    registry = default_metric_registry()
    table = load_performance_table(args.performance, registry)
    metrics = _metric_specs(table.metrics, registry)
    portfolio = build_portfolio(table, metrics, cfg)
    _write_json(out / "portfolio.json", portfolio.to_dict(), cfg)
    return 0


def _load_portfolio(path) -> AlgorithmPortfolio:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return AlgorithmPortfolio.from_dict(payload)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {
        "features": args.features, "performance": args.performance,
        "portfolio": args.portfolio})
    registry = default_metric_registry()
    features = MetaFeatureMatrix.load_csv(args.features)
    table = load_performance_table(args.performance, registry)
    portfolio = _load_portfolio(args.portfolio)
    metrics = _metric_specs(table.metrics, registry)
    result = loo_predictions(features, table, portfolio, metrics,
                             Mode(args.mode), cfg, grid=_grid_for(args),
                             jobs=args.jobs)
    _atomic_save(out / "predictions.csv",
                 lambda p: result.predictions.save_csv(p, comment=_stamp(cfg)))
    lines = [f"# {_stamp(cfg)}", "algorithm,metric,mse"]
    for alg in portfolio.algorithms:
        for m in metrics:
            lines.append(f"{alg},{m.name},{format_float(result.mse[(alg, m.name)])}")
    _atomic_text(out / "mse.csv", "\n".join(lines) + "\n")
    return 0


def cmd_select(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {
        "predictions": args.predictions, "portfolio": args.portfolio})
    registry = default_metric_registry()
    pred = PredictionsTable.load_csv(args.predictions, Mode(args.mode))
    portfolio = _load_portfolio(args.portfolio)
    chosen = select(pred, registry, portfolio)
    lines = [f"# {_stamp(cfg)}", "dataset,metric,algorithm"]
    for d in pred.datasets:
        for m in pred.metrics:
            lines.append(f"{d},{m},{chosen[(d, m)]}")
    _atomic_text(out / "selections.csv", "\n".join(lines) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {
        "predictions": args.predictions, "performance": args.performance,
        "portfolio": args.portfolio})
    registry = default_metric_registry()
    pred = PredictionsTable.load_csv(args.predictions, Mode(args.mode))
    table = load_performance_table(args.performance, registry)
    portfolio = _load_portfolio(args.portfolio)
    metrics = _metric_specs(pred.metrics, registry)
    report = evaluate_selection(pred, table, metrics, registry, portfolio)
    _write_json(out / "selection_report.json", report.to_dict(), cfg)
    _write_heatmap(out, report, cfg)
    _write_boxplots(out, report, cfg)
    return 0


def _explain_outputs(out, cfg, explanations, datasets, metrics, k):
    _atomic_save(out / "shap.csv",
                 lambda p: save_explanations_csv(explanations, p, comment=_stamp(cfg)))
    per_metric = {}
    for m in metrics:
        subset = [e for e in explanations if e.metric == m]
        if not subset:
            continue
        per_metric[m] = domain_topk(subset, datasets, k=k).to_dict()
        ranking = summary_ranking(subset)
        _atomic_save(out / f"shap_summary_{m}.svg",
                     lambda p, r=ranking: beeswarm_svg(r, p, comment=_stamp(cfg)))
    _write_json(out / "domain_topk.json", {"k": k, "per_metric": per_metric}, cfg)


def cmd_explain(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {
        "datasets": list(args.datasets), "features": args.features,
        "performance": args.performance, "portfolio": args.portfolio})
    registry = default_metric_registry()
    datasets = _load_datasets(args.datasets)
    features = MetaFeatureMatrix.load_csv(args.features)
    table = load_performance_table(args.performance, registry)
    portfolio = _load_portfolio(args.portfolio)
    metrics = _metric_specs(table.metrics, registry)
    result = loo_predictions(features, table, portfolio, metrics,
                             Mode(args.mode), cfg, grid=_grid_for(args),
                             keep_models=True, jobs=args.jobs)
    chosen = select(result.predictions, registry, portfolio)
    explanations = selector_shap(chosen, result.models, features,
                                 [m.name for m in metrics])
    _explain_outputs(out, cfg, explanations, datasets,
                     [m.name for m in metrics], args.topk)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {
        "datasets": list(args.datasets), "performance": args.performance})
    registry = default_metric_registry()
    stage = "ingest"
    try:
        datasets = _load_datasets(args.datasets)
        table = load_performance_table(args.performance, registry)
        usable = _usable_ids(datasets, table, args.allow_missing)
        datasets = [ds for ds in datasets if ds.id in set(usable)]

        stage = "features"
        vectors = [compute_metafeatures(ds, cfg) for ds in datasets]
        matrix = build_matrix(vectors)
        _atomic_save(out / "features.csv",
                     lambda p: matrix.save_csv(p, comment=_stamp(cfg)))

        stage = "prune"
        pruned = prune_correlated(matrix, cfg.correlation_threshold_features)
        _atomic_save(out / "drop_log.csv",
                     lambda p: pruned.save_drop_log(p, comment=_stamp(cfg)))
        table = table.restrict(datasets=usable)
        kept_names, metric_log = prune_metrics(table, cfg.correlation_threshold_metrics)
        _write_json(out / "metrics_kept.json", {
            "metrics": kept_names,
            "dropped": [rec.as_row() for rec in metric_log],
        }, cfg)
        metrics = _metric_specs(kept_names, registry)

        stage = "portfolio"
        portfolio = build_portfolio(table, metrics, cfg)
        _write_json(out / "portfolio.json", portfolio.to_dict(), cfg)

        stage = "train"
        result = loo_predictions(pruned, table, portfolio, metrics,
                                 Mode(args.mode), cfg, grid=_grid_for(args),
                                 keep_models=True, jobs=args.jobs)
        _atomic_save(out / "predictions.csv",
                     lambda p: result.predictions.save_csv(p, comment=_stamp(cfg)))

        stage = "select"
        chosen = select(result.predictions, registry, portfolio)

        stage = "evaluate"
        report = evaluate_selection(result.predictions, table, metrics,
                                    registry, portfolio)
        _write_json(out / "selection_report.json", report.to_dict(), cfg)
        _write_heatmap(out, report, cfg)
        _write_boxplots(out, report, cfg)

        stage = "explain"
        explanations = selector_shap(chosen, result.models, pruned,
                                     [m.name for m in metrics])
        _explain_outputs(out, cfg, explanations, datasets,
                         [m.name for m in metrics], args.topk)
    except MlcSelectError as exc:
        print(f"error: pipeline failed at stage {stage}: {exc}", file=sys.stderr)
        return 3
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _write_run_manifest(out, args, cfg, {
        "report_a": args.report_a, "report_b": args.report_b})
    reports = []
    for path in (args.report_a, args.report_b):
        if not Path(path).exists():
            raise MissingFileError(f"report not found: {path}")
        reports.append(SelectionReport.from_json(
            Path(path).read_text(encoding="utf-8")))
    summary = compare_reports(reports[0], reports[1])
    _write_json(out / "comparison.json", summary.to_dict(), cfg)
    for m in summary.metrics:
        delta = summary.macro_f1_delta[m]
        changed = len(summary.selection_changes[m])
        print(f"{m}: macro_f1 delta {format_float(delta)}, "
              f"{changed} selection change(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlcselect",
        description="Explainable per-dataset algorithm selection for "
                    "multi-label classification.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--mode", choices=["str", "mtr"], default="str",
                        help="single-target or multi-target regression")
    common.add_argument("--allow-missing", action="store_true",
                        help="skip datasets with missing performance cells")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for independent folds")
    common.add_argument("--out", default="out", help="output directory")
    grid_flag = argparse.ArgumentParser(add_help=False)
    grid_flag.add_argument("--grid", choices=["full", "fast"], default="fast",
                           help="hyperparameter grid: full 72-candidate "
                                "search or one fixed fast setting")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", parents=[common],
                       help="compute the meta-feature matrix")
    p.add_argument("manifests", nargs="+", help="dataset manifest JSON files")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("prune", parents=[common],
                       help="correlation-prune features and/or metrics")
    p.add_argument("--features", help="feature matrix CSV")
    p.add_argument("--performance", help="performance table CSV")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("portfolio", parents=[common],
                       help="build the algorithm portfolio by win counting")
    p.add_argument("--performance", required=True)
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("train", parents=[common, grid_flag],
                       help="leave-one-dataset-out performance predictions")
    p.add_argument("--features", required=True)
    p.add_argument("--performance", required=True)
    p.add_argument("--portfolio", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", parents=[common],
                       help="pick the best predicted algorithm per dataset")
    p.add_argument("--predictions", required=True)
    p.add_argument("--portfolio", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score selections against SBS/VBS baselines")
    p.add_argument("--predictions", required=True)
    p.add_argument("--performance", required=True)
    p.add_argument("--portfolio", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", parents=[common, grid_flag],
                       help="Shapley attributions for the selector")
    p.add_argument("--datasets", nargs="+", required=True,
                   help="dataset manifest JSON files (domain tags)")
    p.add_argument("--features", required=True)
    p.add_argument("--performance", required=True)
    p.add_argument("--portfolio", required=True)
    p.add_argument("--topk", type=int, default=5)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("pipeline", parents=[common, grid_flag],
                       help="full run: features to explanations")
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--performance", required=True)
    p.add_argument("--topk", type=int, default=5)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("compare", parents=[common],
                       help="diff two selection reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INGEST_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MlcSelectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
