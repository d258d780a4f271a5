"""Exact TreeSHAP against hand values, axioms, and the coalition oracle."""

from __future__ import annotations

import numpy as np
import pytest

from _factories import (
    AUROC,
    ONE_ERROR,
    SMALL_GRID,
    forest_of,
    leaf_tree,
    make_dataset,
    manual_tree,
    random_forest,
    selection_corpus as corpus,
    stump,
    symmetric_tree,
    two_metric_registry,
)
from mlcselect.core import Mode, RunConfig
from mlcselect.errors import (
    DimensionMismatchError,
    MissingNodeStatisticsError,
    ModelNotFoundError,
    TooManyFeaturesError,
)
from mlcselect.explain import (
    ShapExplanation,
    brute_force_shap,
    domain_topk,
    load_explanations_csv,
    save_explanations_csv,
    selector_shap,
    summary_ranking,
    tree_shap,
)
from mlcselect.selection import loo_predictions, select


def explanation(ds_id, phi, values=None, metric="auroc", algorithm="alg",
                base=0.0):
    values = values if values is not None else {k: 0.0 for k in phi}
    return ShapExplanation(ds_id, metric, algorithm, dict(phi), base,
                           dict(values), base + sum(phi.values()))


def test_single_leaf_tree_attributes_nothing():
    forest = forest_of([leaf_tree(value=5.0)], n_features=3)
    phi, base = tree_shap(forest, [1.0, 2.0, 3.0])
    assert base == 5.0
    assert phi.tolist() == [0.0, 0.0, 0.0]
    assert np.array_equal(brute_force_shap(forest, [1.0, 2.0, 3.0]), phi)


def test_stump_hand_shapley_value():
    # leaves 1 (left) and 3 (right), equal mass: base 2, phi = prediction - 2
    forest = forest_of([stump()], n_features=1)
    phi, base = tree_shap(forest, [5.0])
    assert base == 2.0
    assert phi[0] == 1.0
    phi_neg, _ = tree_shap(forest, [-5.0])
    assert phi_neg[0] == -1.0


def test_stump_weighted_base_value():
    # unequal leaf mass: base = (1*1 + 3*3) / 4
    forest = forest_of([stump(n_left=1, n_right=3)], n_features=1)
    phi, base = tree_shap(forest, [5.0])
    assert base == 2.5
    assert phi[0] == 0.5


def test_null_player_is_exactly_zero():
    # feature 1 exists in the forest but no tree ever splits on it
    forest = forest_of([stump(feature=0)], n_features=3)
    x = [5.0, -7.0, 11.0]
    phi, _ = tree_shap(forest, x)
    brute = brute_force_shap(forest, x)
    assert phi[1] == 0.0 and phi[2] == 0.0
    assert brute[1] == 0.0 and brute[2] == 0.0


def test_symmetry_axiom_exact():
    # tree computes [x0 >= 0] + [x1 >= 0]; at x0 == x1 both phi coincide
    forest = forest_of([symmetric_tree()], n_features=2)
    for x in ([1.0, 1.0], [-1.0, -1.0]):
        phi, base = tree_shap(forest, x)
        assert phi[0] == phi[1]
        assert base == 1.0
    phi, _ = tree_shap(forest, [1.0, 1.0])
    assert phi[0] == pytest.approx(0.5, abs=1e-12)
    phi, _ = tree_shap(forest, [-1.0, -1.0])
    assert phi[0] == pytest.approx(-0.5, abs=1e-12)


def test_repeated_feature_on_path_matches_oracle():
    # f0 split twice along the left branch: exercises the unwind path
    tree = manual_tree(
        children_left=[1, 3, -1, -1, -1],
        children_right=[2, 4, -1, -1, -1],
        feature=[0, 0, -1, -1, -1],
        threshold=[0.0, -1.0, 0.0, 0.0, 0.0],
        value=[0.75, 0.5, 2.0, 0.0, 1.0],
        counts=[4, 2, 2, 1, 1],
    )
    forest = forest_of([tree], n_features=2)
    for x0 in (-2.0, -0.5, 0.5):
        phi, base = tree_shap(forest, [x0, 9.0])
        brute = brute_force_shap(forest, [x0, 9.0])
        assert phi == pytest.approx(brute, abs=1e-12)
        assert base + phi.sum() == pytest.approx(
            forest.predict_row([x0, 9.0])[0], abs=1e-12)


def test_linearity_over_trees():
    trees = [stump(left=0.0, right=4.0), symmetric_tree(),
             stump(feature=1, left=-1.0, right=1.0)]
    x = [0.5, -0.5]
    combined, base = tree_shap(forest_of(trees, n_features=2), x)
    singles = [tree_shap(forest_of([t], n_features=2), x) for t in trees]
    mean_phi = np.mean([p for p, _ in singles], axis=0)
    mean_base = np.mean([b for _, b in singles])
    assert combined == pytest.approx(mean_phi, abs=1e-15)
    assert base == pytest.approx(mean_base, abs=1e-15)


def test_local_accuracy_on_fitted_forests():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n_features = int(rng.integers(1, 8))
        forest, X = random_forest(rng, n_features, int(rng.integers(1, 12)))
        x = X[int(rng.integers(0, X.shape[0]))]
        phi, base = tree_shap(forest, x)
        assert base + phi.sum() == pytest.approx(
            forest.predict_row(x)[0], abs=1e-9)


def test_oracle_equivalence_on_fitted_forests():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n_features = int(rng.integers(1, 6))
        forest, X = random_forest(rng, n_features, int(rng.integers(1, 6)),
                                  max_depth=3)
        x = X[0]
        phi, _ = tree_shap(forest, x)
        assert phi == pytest.approx(brute_force_shap(forest, x), abs=1e-12)


def test_multi_target_attribution():
    # two targets moving in opposite directions across the split
    tree = manual_tree([1, -1, -1], [2, -1, -1], [0, -1, -1], [0.0, 0.0, 0.0],
                       [[2.0, 3.0], [1.0, 4.0], [3.0, 2.0]], [4, 2, 2])
    forest = forest_of([tree], n_features=1, n_targets=2)
    phi0, base0 = tree_shap(forest, [5.0], target=0)
    phi1, base1 = tree_shap(forest, [5.0], target=1)
    assert (base0, base1) == (2.0, 3.0)
    assert phi0[0] == 1.0 and phi1[0] == -1.0
    assert brute_force_shap(forest, [5.0], target=1)[0] == -1.0


def test_shap_rejects_bad_inputs():
    forest = forest_of([stump()], n_features=1)
    with pytest.raises(DimensionMismatchError):
        tree_shap(forest, [1.0, 2.0])
    wide = forest_of([leaf_tree()], n_features=16)
    with pytest.raises(TooManyFeaturesError):
        brute_force_shap(wide, [0.0] * 16)


def test_shap_requires_node_counts():
    tree = stump()
    tree.n_node_samples = np.array([4, 0, 4], dtype=np.int64)
    forest = forest_of([tree], n_features=1)
    with pytest.raises(MissingNodeStatisticsError):
        tree_shap(forest, [1.0])


def test_selector_shap_end_to_end():
    features, table, portfolio = corpus(n=6)
    registry = two_metric_registry()
    result = loo_predictions(features, table, portfolio, [AUROC, ONE_ERROR],
                             Mode.STR, RunConfig(inner_cv_folds=2),
                             grid=SMALL_GRID, keep_models=True)
    chosen = select(result.predictions, registry, portfolio)
    explanations = selector_shap(chosen, result.models, features,
                                 ["auroc", "one_error"])
    assert len(explanations) == 6 * 2
    # metric-major order, datasets sorted within a metric
    assert [e.metric for e in explanations] == ["auroc"] * 6 + ["one_error"] * 6
    assert [e.dataset_id for e in explanations[:6]] == sorted(features.dataset_ids)
    for e in explanations:
        assert e.algorithm == chosen[(e.dataset_id, e.metric)]
        assert set(e.phi) == {"signal", "noise"}
        assert e.local_accuracy_gap() < 1e-9


def test_selector_shap_without_models_hints_at_keep_models():
    features, table, portfolio = corpus(n=5)
    registry = two_metric_registry()
    result = loo_predictions(features, table, portfolio, [AUROC], Mode.STR,
                             RunConfig(inner_cv_folds=2), grid=SMALL_GRID)
    chosen = select(result.predictions, registry, portfolio)
    with pytest.raises(ModelNotFoundError, match="keep_models"):
        selector_shap(chosen, result.models, features, ["auroc"])


def test_summary_ranking_orders_by_mean_abs_phi():
    exps = [
        explanation("d1", {"a": 1.0, "b": -2.0, "c": 3.0}),
        explanation("d2", {"a": -1.0, "b": 0.0, "c": -3.0}),
    ]
    ranking = summary_ranking(exps)
    # a and b tie on mean |phi| = 1 and fall back to name order
    assert [fi.feature for fi in ranking] == ["c", "a", "b"]
    assert ranking[0].mean_abs_phi == 3.0
    assert ranking[0].points == [("d1", 3.0, 0.0), ("d2", -3.0, 0.0)]


def test_summary_ranking_breaks_ties_by_name():
    exps = [explanation("d1", {"z": 1.0, "a": -1.0})]
    ranking = summary_ranking(exps)
    assert [fi.feature for fi in ranking] == ["a", "z"]
    with pytest.raises(ValueError):
        summary_ranking([])


def test_domain_topk_intersections():
    datasets = [make_dataset("d1", "audio"), make_dataset("d2", "audio"),
                make_dataset("d3", "image"), make_dataset("d4", "text")]
    exps = [
        explanation("d1", {"f1": 3.0, "f2": 2.0, "f3": 0.0, "f4": 0.0}),
        explanation("d2", {"f1": 3.0, "f2": 2.0, "f3": 0.0, "f4": 0.0}),
        explanation("d3", {"f1": 0.0, "f2": 2.0, "f3": 3.0, "f4": 0.0}),
        explanation("d4", {"f1": 0.0, "f2": 0.0, "f3": 1.0, "f4": 3.0}),
    ]
    analysis = domain_topk(exps, datasets, k=2)
    tops = {g.domain: g.features for g in analysis.groups}
    assert tops == {"audio": ["f1", "f2"], "image": ["f3", "f2"],
                    "text": ["f4", "f3"]}
    assert analysis.intersections[("audio", "image")] == ["f2"]
    assert analysis.intersections[("audio", "text")] == []
    assert analysis.intersections[("image", "text")] == ["f3"]
    assert analysis.intersections[("audio", "image", "text")] == []
    payload = analysis.to_dict()
    assert payload["intersections"]["audio&image"] == ["f2"]
    assert payload["k"] == 2


def test_domain_topk_unknown_dataset():
    exps = [explanation("ghost", {"f1": 1.0})]
    with pytest.raises(ModelNotFoundError):
        domain_topk(exps, [make_dataset("d1", "audio")], k=1)


def test_explanations_csv_round_trip(tmp_path):
    exps = [
        explanation("d1", {"f1": 1 / 3, "f2": -0.25},
                    values={"f1": 10.0, "f2": 0.5}, base=0.75),
        explanation("d2", {"f1": 0.0, "f2": 1e-16},
                    values={"f1": -1.0, "f2": 2.0}, metric="one_error",
                    algorithm="other", base=-2.0),
    ]
    path = tmp_path / "shap.csv"
    save_explanations_csv(exps, path, comment="config_hash=abc")
    again = load_explanations_csv(path)
    assert len(again) == 2
    for orig, back in zip(exps, again):
        assert back.dataset_id == orig.dataset_id
        assert back.metric == orig.metric
        assert back.algorithm == orig.algorithm
        assert back.phi == orig.phi
        assert back.feature_values == orig.feature_values
        assert back.base_value == orig.base_value
        assert back.prediction == pytest.approx(orig.prediction)


def test_explanations_csv_rejects_other_headers(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_explanations_csv(path)
