"""Portfolio, leave-one-dataset-out harness, baselines, and reports."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _factories import (
    AUROC,
    ONE_ERROR,
    SMALL_GRID,
    dense_table,
    selection_corpus as corpus,
    table_from,
    two_metric_registry,
)
from mlcselect.core import Mode, RunConfig, default_metric_registry
from mlcselect.errors import (
    EmptyPortfolioError,
    LengthMismatchError,
    MetricSetMismatchError,
    MissingCellError,
    ModelNotFoundError,
)
from mlcselect.selection import (
    AlgorithmPortfolio,
    BoxStats,
    PredictionsTable,
    SelectionReport,
    build_portfolio,
    compare_reports,
    evaluate_selection,
    loo_predictions,
    regret_table,
    sbs,
    select,
    selector_macro_f1,
    vbs,
)

# portfolio


def test_build_portfolio_counts_wins():
    table = table_from({
        ("d1", "a", "auroc"): 0.9, ("d1", "b", "auroc"): 0.1,
        ("d2", "a", "auroc"): 0.8, ("d2", "b", "auroc"): 0.2,
        ("d3", "a", "auroc"): 0.1, ("d3", "b", "auroc"): 0.9,
    })
    cfg = RunConfig(min_wins=2)
    portfolio = build_portfolio(table, [AUROC], cfg)
    assert portfolio.algorithms == ["a"]
    assert portfolio.win_counts[("a", "auroc")] == 2
    assert ("b", "auroc") not in portfolio.win_counts
    both = build_portfolio(table, [AUROC], RunConfig(min_wins=1))
    assert both.algorithms == ["a", "b"]
    assert both.win_counts[("b", "auroc")] == 1


def test_build_portfolio_ties_award_every_winner():
    table = table_from({
        ("d1", "a", "auroc"): 0.5, ("d1", "b", "auroc"): 0.5,
    })
    portfolio = build_portfolio(table, [AUROC], RunConfig(min_wins=1))
    assert portfolio.algorithms == ["a", "b"]
    assert portfolio.win_counts[("a", "auroc")] == 1
    assert portfolio.win_counts[("b", "auroc")] == 1


def test_build_portfolio_respects_orientation():
    # lower one_error wins, so a takes the dataset and b drops out entirely
    table = table_from({
        ("d1", "a", "one_error"): 0.1, ("d1", "b", "one_error"): 0.9,
    })
    portfolio = build_portfolio(table, [ONE_ERROR], RunConfig(min_wins=1))
    assert portfolio.algorithms == ["a"]
    assert portfolio.win_counts == {("a", "one_error"): 1}


def test_build_portfolio_empty_raises():
    table = table_from({
        ("d1", "a", "auroc"): 0.5, ("d1", "b", "auroc"): 0.4,
    })
    with pytest.raises(EmptyPortfolioError):
        build_portfolio(table, [AUROC], RunConfig(min_wins=3))


def test_build_portfolio_needs_dense_table():
    table = table_from({
        ("d1", "a", "auroc"): 0.5, ("d2", "a", "auroc"): 0.4,
        ("d1", "b", "auroc"): 0.5,
    })
    with pytest.raises(MissingCellError):
        build_portfolio(table, [AUROC], RunConfig(min_wins=1))


def test_portfolio_round_trip():
    portfolio = AlgorithmPortfolio(["b", "a"], {("b", "auroc"): 3, ("a", "auroc"): 9})
    again = AlgorithmPortfolio.from_dict(portfolio.to_dict())
    assert again.algorithms == ["b", "a"]
    assert again.win_counts == portfolio.win_counts


# predictions table


def test_predictions_table_round_trip(tmp_path):
    pred = PredictionsTable(Mode.STR)
    pred.add("d1", "a", "auroc", 1 / 3)
    pred.add("d1", "b", "auroc", 0.25)
    path = tmp_path / "pred.csv"
    pred.save_csv(path, comment="config_hash=abc")
    again = PredictionsTable.load_csv(path, Mode.STR)
    assert again.value("d1", "a", "auroc") == 1 / 3
    assert again.datasets == ["d1"]
    assert len(again) == 2


def test_predictions_table_header_check(tmp_path):
    path = tmp_path / "pred.csv"
    path.write_text("dataset,algorithm,metric,value\nd1,a,auroc,0.5\n")
    with pytest.raises(LengthMismatchError):
        PredictionsTable.load_csv(path, Mode.STR)


# leave-one-dataset-out harness


def test_loo_str_structure():
    features, table, portfolio = corpus(n=6)
    metrics = [AUROC, ONE_ERROR]
    result = loo_predictions(features, table, portfolio, metrics, Mode.STR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID)
    assert len(result.predictions) == 6 * 2 * 2
    assert result.predictions.datasets == features.dataset_ids
    # one model per (held-out, algorithm, metric)
    assert set(result.chosen_params) == {
        (d, a, m) for d in features.dataset_ids
        for a in portfolio.algorithms for m in ("auroc", "one_error")}
    assert result.models is None
    for d in features.dataset_ids:
        assert d not in result.fold_train_ids[d]
        assert len(result.fold_train_ids[d]) == 5


def test_loo_mtr_shares_one_model_per_algorithm():
    features, table, portfolio = corpus(n=6)
    metrics = [AUROC, ONE_ERROR]
    result = loo_predictions(features, table, portfolio, metrics, Mode.MTR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID,
                             keep_models=True)
    assert set(result.chosen_params) == {
        (d, a) for d in features.dataset_ids for a in portfolio.algorithms}
    forest_auroc, t0 = result.models.get("a", "d0", "auroc")
    forest_one_error, t1 = result.models.get("a", "d0", "one_error")
    assert forest_auroc is forest_one_error  # same multi-target forest
    assert (t0, t1) == (0, 1)
    assert forest_auroc.n_targets == 2


def test_loo_errors_match_recomputation():
    features, table, portfolio = corpus(n=5)
    result = loo_predictions(features, table, portfolio, [AUROC], Mode.STR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID)
    for d in features.dataset_ids:
        for a in portfolio.algorithms:
            gap = result.predictions.value(d, a, "auroc") - table.value(d, a, "auroc")
            assert result.squared_errors[(d, a, "auroc")] == pytest.approx(gap ** 2)
    mean = np.mean([result.squared_errors[(d, "a", "auroc")]
                    for d in features.dataset_ids])
    assert result.mse[("a", "auroc")] == pytest.approx(float(mean))


def test_loo_constant_target_has_zero_error():
    features, _, portfolio = corpus(n=5)
    table = dense_table(features.dataset_ids, ["a", "b"], ["auroc"],
                        lambda d, a, m: 0.4)
    result = loo_predictions(features, table, portfolio, [AUROC], Mode.STR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID)
    assert all(v == 0.0 for v in result.mse.values())


def test_loo_parallel_matches_serial():
    features, table, portfolio = corpus(n=6)
    metrics = [AUROC, ONE_ERROR]
    cfg = RunConfig(inner_cv_folds=2)
    serial = loo_predictions(features, table, portfolio, metrics, Mode.STR,
                             cfg, grid=SMALL_GRID, jobs=1)
    parallel = loo_predictions(features, table, portfolio, metrics, Mode.STR,
                               cfg, grid=SMALL_GRID, jobs=4)
    for d in features.dataset_ids:
        for a in portfolio.algorithms:
            for m in ("auroc", "one_error"):
                assert serial.predictions.value(d, a, m) == \
                    parallel.predictions.value(d, a, m)


def test_loo_model_lookup_errors():
    features, table, portfolio = corpus(n=5)
    result = loo_predictions(features, table, portfolio, [AUROC], Mode.STR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID,
                             keep_models=True)
    forest, target = result.models.get("a", "d0", "auroc")
    assert target == 0
    assert forest.target_names == ["auroc"]
    with pytest.raises(ModelNotFoundError):
        result.models.get("a", "d0", "one_error")
    with pytest.raises(ModelNotFoundError):
        result.models.get("z", "d0", "auroc")


def test_loo_needs_dense_table():
    features, table, portfolio = corpus(n=4)
    holes = table.restrict()
    full = {(d, a, m) for d in features.dataset_ids
            for a in portfolio.algorithms for m in ("auroc", "one_error")}
    rebuilt = table_from({k: table.value(*k) for k in sorted(full - {("d0", "a", "auroc")})})
    with pytest.raises(MissingCellError):
        loo_predictions(features, rebuilt, portfolio, [AUROC, ONE_ERROR],
                        Mode.STR, RunConfig(inner_cv_folds=2), grid=SMALL_GRID)
    assert holes.is_dense()


# argbest selection and baselines


def test_select_respects_orientation_and_ties():
    registry = two_metric_registry()
    portfolio = AlgorithmPortfolio(["a", "b"])
    pred = PredictionsTable(Mode.STR)
    pred.add("d1", "a", "auroc", 0.6)
    pred.add("d1", "b", "auroc", 0.8)       # higher wins
    pred.add("d1", "a", "one_error", 0.3)
    pred.add("d1", "b", "one_error", 0.2)   # lower wins
    pred.add("d2", "a", "auroc", 0.5)
    pred.add("d2", "b", "auroc", 0.5)       # tie -> earlier portfolio order
    pred.add("d2", "a", "one_error", 0.5)
    pred.add("d2", "b", "one_error", 0.1)
    chosen = select(pred, registry, portfolio)
    assert chosen[("d1", "auroc")] == "b"
    assert chosen[("d1", "one_error")] == "b"
    assert chosen[("d2", "auroc")] == "a"
    assert chosen[("d2", "one_error")] == "b"


def test_vbs_picks_per_dataset_best():
    registry = two_metric_registry()
    table = table_from({
        ("d1", "a", "auroc"): 0.9, ("d1", "b", "auroc"): 0.5,
        ("d2", "a", "auroc"): 0.2, ("d2", "b", "auroc"): 0.7,
    })
    assert vbs(table, "auroc", registry) == {"d1": "a", "d2": "b"}
    low = table_from({
        ("d1", "a", "one_error"): 0.9, ("d1", "b", "one_error"): 0.5,
    })
    assert vbs(low, "one_error", registry) == {"d1": "b"}


def test_vbs_tie_goes_to_earlier_algorithm():
    registry = two_metric_registry()
    table = table_from({
        ("d1", "b", "auroc"): 0.5, ("d1", "a", "auroc"): 0.5,
    })
    assert vbs(table, "auroc", registry) == {"d1": "b"}  # table order, b first


def test_sbs_best_mean_performance():
    registry = two_metric_registry()
    table = table_from({
        ("d1", "a", "auroc"): 0.9, ("d1", "b", "auroc"): 0.6,
        ("d2", "a", "auroc"): 0.1, ("d2", "b", "auroc"): 0.6,
    })
    # means: a 0.5, b 0.6
    assert sbs(table, "auroc", registry) == "b"
    flipped = table_from({
        ("d1", "a", "one_error"): 0.9, ("d1", "b", "one_error"): 0.6,
        ("d2", "a", "one_error"): 0.1, ("d2", "b", "one_error"): 0.6,
    })
    assert sbs(flipped, "one_error", registry) == "a"


# selector-as-classifier macro-F1


def test_macro_f1_perfect_and_hand_value():
    truth = {"d1": "a", "d2": "a", "d3": "b"}
    assert selector_macro_f1(dict(truth), truth) == 1.0
    # selected c never occurs in truth: union convention adds a zero class
    selected = {"d1": "a", "d2": "c", "d3": "b"}
    # per-class F1: a = 2/3, b = 1, c = 0 -> macro 5/9
    assert selector_macro_f1(selected, truth) == pytest.approx(5 / 9)


def test_macro_f1_second_hand_value():
    truth = {"d1": "a", "d2": "a", "d3": "b", "d4": "c"}
    selected = {"d1": "a", "d2": "b", "d3": "b", "d4": "b"}
    # a: P=1, R=1/2 -> 2/3; b: P=1/3, R=1 -> 1/2; c: 0 -> macro 7/18
    assert selector_macro_f1(selected, truth) == pytest.approx(7 / 18)


def test_macro_f1_zero_denominators_count_as_zero():
    truth = {"d1": "a", "d2": "a"}
    selected = {"d1": "b", "d2": "b"}
    assert selector_macro_f1(selected, truth) == 0.0


def test_macro_f1_requires_same_keys():
    with pytest.raises(LengthMismatchError):
        selector_macro_f1({"d1": "a"}, {"d2": "a"})


@given(st.permutations(["a", "b", "c"]))
def test_macro_f1_relabeling_invariance(perm):
    mapping = dict(zip(["a", "b", "c"], perm))
    truth = {"d1": "a", "d2": "a", "d3": "b", "d4": "c", "d5": "b"}
    selected = {"d1": "a", "d2": "b", "d3": "b", "d4": "a", "d5": "c"}
    base = selector_macro_f1(selected, truth)
    renamed = selector_macro_f1({k: mapping[v] for k, v in selected.items()},
                                {k: mapping[v] for k, v in truth.items()})
    assert renamed == pytest.approx(base)


# box stats and regret reports


def test_box_stats_hand_values():
    box = BoxStats.from_values([0.0, 0.1, 0.2, 0.3, 0.4])
    assert box.low == 0.0
    assert box.median == pytest.approx(0.2)
    assert box.high == pytest.approx(0.4)
    quarts = BoxStats.from_values([0.0, 1.0, 2.0, 3.0])
    assert quarts.q1 == pytest.approx(0.75)  # linear interpolation
    assert quarts.q3 == pytest.approx(2.25)


def test_regret_table_hand_example():
    registry = two_metric_registry()
    table = table_from({
        ("d1", "a", "auroc"): 0.9, ("d1", "b", "auroc"): 0.5,
        ("d2", "a", "auroc"): 0.2, ("d2", "b", "auroc"): 0.7,
    })
    portfolio = AlgorithmPortfolio(["a", "b"])
    report = regret_table({"d1": "a", "d2": "a"}, table, "auroc", registry,
                          portfolio)
    assert report.sbs_algorithm == "b"  # means: a 0.55, b 0.6
    by_id = {o.dataset_id: o for o in report.outcomes}
    assert by_id["d1"].regret == 0.0
    assert by_id["d2"].regret == pytest.approx(0.5)
    assert report.mean_regret["AS"] == pytest.approx(0.25)
    assert report.mean_regret["a"] == pytest.approx(0.25)
    assert report.mean_regret["b"] == pytest.approx(0.2)
    assert set(report.regret_box) == {"AS", "a", "b"}
    # the selector always played a, so it scores like the constant a
    assert report.macro_f1 == report.constant_macro_f1["a"]


def test_regret_table_vbs_selection_is_zero_regret():
    registry = two_metric_registry()
    table = table_from({
        ("d1", "a", "auroc"): 0.9, ("d1", "b", "auroc"): 0.5,
        ("d2", "a", "auroc"): 0.2, ("d2", "b", "auroc"): 0.7,
    })
    portfolio = AlgorithmPortfolio(["a", "b"])
    best = vbs(table, "auroc", registry)
    report = regret_table(best, table, "auroc", registry, portfolio)
    assert all(o.regret == 0.0 for o in report.outcomes)
    assert report.mean_regret["AS"] == 0.0
    assert report.macro_f1 == 1.0


def test_evaluate_selection_report_round_trip():
    features, table, portfolio = corpus(n=6)
    registry = two_metric_registry()
    result = loo_predictions(features, table, portfolio, [AUROC, ONE_ERROR],
                             Mode.STR, RunConfig(inner_cv_folds=2),
                             grid=SMALL_GRID)
    report = evaluate_selection(result.predictions, table, [AUROC, ONE_ERROR],
                                registry, portfolio)
    assert report.mode is Mode.STR
    assert report.metrics == ["auroc", "one_error"]
    again = SelectionReport.from_json(report.to_json())
    assert again.to_dict() == report.to_dict()


def test_compare_reports_self_is_zero():
    features, table, portfolio = corpus(n=6)
    registry = two_metric_registry()
    result = loo_predictions(features, table, portfolio, [AUROC], Mode.STR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID)
    report = evaluate_selection(result.predictions, table, [AUROC], registry,
                                portfolio)
    summary = compare_reports(report, report)
    assert summary.macro_f1_delta == {"auroc": 0.0}
    assert summary.selection_changes == {"auroc": []}


def test_compare_reports_detects_changes():
    registry = two_metric_registry()
    table = table_from({
        ("d1", "a", "auroc"): 0.9, ("d1", "b", "auroc"): 0.5,
    })
    portfolio = AlgorithmPortfolio(["a", "b"])
    good = regret_table({"d1": "a"}, table, "auroc", registry, portfolio)
    bad = regret_table({"d1": "b"}, table, "auroc", registry, portfolio)
    ra = SelectionReport(Mode.STR, ["a", "b"], ["auroc"], {"auroc": good})
    rb = SelectionReport(Mode.STR, ["a", "b"], ["auroc"], {"auroc": bad})
    summary = compare_reports(ra, rb)
    assert summary.macro_f1_delta["auroc"] < 0
    assert summary.selection_changes["auroc"] == [("d1", "a", "b")]


def test_compare_reports_metric_mismatch():
    report = SelectionReport(Mode.STR, ["a"], ["auroc"], {})
    other = SelectionReport(Mode.STR, ["a"], ["one_error"], {})
    with pytest.raises(MetricSetMismatchError):
        compare_reports(report, other)


@given(st.integers(0, 10**6))
def test_selection_invariant_under_monotone_transform(seed):
    """Argbest decisions depend only on the ordering of predicted values."""
    rng = np.random.default_rng(seed)
    registry = default_metric_registry()
    portfolio = AlgorithmPortfolio(["a", "b", "c"])
    pred = PredictionsTable(Mode.STR)
    warped = PredictionsTable(Mode.STR)
    for d in ("d1", "d2"):
        for a in portfolio.algorithms:
            v = float(rng.uniform(0.0, 1.0))
            pred.add(d, a, "auroc", v)
            warped.add(d, a, "auroc", float(np.exp(2.0 * v)))  # strictly increasing
    assert select(pred, registry, portfolio) == select(warped, registry, portfolio)