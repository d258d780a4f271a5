"""Exact Shapley attributions for forest predictions.

The game being attributed is the path-dependent expectation: to evaluate a
coalition S, descend the tree following x on features in S and splitting
proportionally to training sample counts on features outside S. tree_shap
computes exact Shapley values of that game in polynomial time by carrying
permutation weights along each root-leaf path; brute_force_shap evaluates
the same game over every coalition and serves as the oracle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from math import factorial
from pathlib import Path

import numpy as np

from .core import format_float, read_csv_rows
from .errors import (
    DimensionMismatchError,
    MissingNodeStatisticsError,
    ModelNotFoundError,
    TooManyFeaturesError,
)
from .forest import RegressionForest, RegressionTree
from .ingest import MLCDataset
from .metafeatures import MetaFeatureMatrix

__all__ = [
    "ShapExplanation",
    "tree_shap",
    "brute_force_shap",
    "selector_shap",
    "FeatureImportance",
    "summary_ranking",
    "DomainTopK",
    "DomainAnalysis",
    "domain_topk",
    "save_explanations_csv",
    "load_explanations_csv",
]

EXPLANATIONS_HEADER = [
    "dataset", "metric", "algorithm", "feature", "phi", "feature_value", "base_value",
]


def _extend(feats, zf, of, pw, pz, po, pf):
    """Grow the path by one entry, updating permutation weights in place."""
    depth = len(feats)
    feats.append(pf)
    zf.append(pz)
    of.append(po)
    pw.append(1.0 if depth == 0 else 0.0)
    for i in range(depth - 1, -1, -1):
        pw[i + 1] += po * pw[i] * (i + 1) / (depth + 1)
        pw[i] = pz * pw[i] * (depth - i) / (depth + 1)


def _unwind(feats, zf, of, pw, index):
    """Remove path entry ``index``, exactly inverting its _extend."""
    depth = len(feats) - 1
    one = of[index]
    zero = zf[index]
    carried = pw[depth]
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = pw[i]
            pw[i] = carried * (depth + 1) / ((i + 1) * one)
            carried = tmp - pw[i] * zero * (depth - i) / (depth + 1)
        else:
            pw[i] = pw[i] * (depth + 1) / (zero * (depth - i))
    for i in range(index, depth):
        feats[i] = feats[i + 1]
        zf[i] = zf[i + 1]
        of[i] = of[i + 1]
    feats.pop()
    zf.pop()
    of.pop()
    pw.pop()


def _unwound_sum(zf, of, pw, index):
    """Total permutation weight if entry ``index`` were unwound (no mutation)."""
    depth = len(pw) - 1
    one = of[index]
    zero = zf[index]
    carried = pw[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = carried * (depth + 1) / ((i + 1) * one)
            total += tmp
            carried = pw[i] - tmp * zero * (depth - i) / (depth + 1)
        else:
            total += pw[i] * (depth + 1) / (zero * (depth - i))
    return total


def _shap_recurse(left, right, feature, threshold, value, counts, x, phi,
                  node, feats, zf, of, pw, pz, po, pf):
    feats = list(feats)
    zf = list(zf)
    of = list(of)
    pw = list(pw)
    _extend(feats, zf, of, pw, pz, po, pf)

    split = feature[node]
    if split < 0:  # leaf
        leaf_value = value[node]
        for i in range(1, len(feats)):
            w = _unwound_sum(zf, of, pw, i)
            phi[feats[i]] += w * (of[i] - zf[i]) * leaf_value
        return

    if x[split] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    n_here = counts[node]
    hot_zero = counts[hot] / n_here
    cold_zero = counts[cold] / n_here

    # a feature split twice along one path must be unwound and re-extended
    incoming_zero = 1.0
    incoming_one = 1.0
    for k in range(1, len(feats)):
        if feats[k] == split:
            incoming_zero = zf[k]
            incoming_one = of[k]
            _unwind(feats, zf, of, pw, k)
            break

    _shap_recurse(left, right, feature, threshold, value, counts, x, phi,
                  hot, feats, zf, of, pw,
                  hot_zero * incoming_zero, incoming_one, split)
    _shap_recurse(left, right, feature, threshold, value, counts, x, phi,
                  cold, feats, zf, of, pw,
                  cold_zero * incoming_zero, 0.0, split)


def _check_counts(tree: RegressionTree) -> None:
    if tree.n_node_samples.shape[0] != tree.n_nodes or (tree.n_node_samples <= 0).any():
        raise MissingNodeStatisticsError(
            "tree nodes must carry positive training sample counts")


def _tree_base_value(tree: RegressionTree, target: int) -> float:
    leaves = tree.feature < 0
    weights = tree.n_node_samples[leaves].astype(np.float64)
    return float(weights @ tree.value[leaves, target] / tree.n_node_samples[0])


def _check_x(forest: RegressionForest, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != forest.n_features:
        raise DimensionMismatchError(
            f"instance has {x.shape[0]} features, forest expects {forest.n_features}")
    return x


def tree_shap(forest: RegressionForest, x, target: int = 0) -> tuple[np.ndarray, float]:
    """Exact Shapley values of one forest prediction.

    Returns (phi, base_value) with base_value + phi.sum() equal to the
    forest's prediction for ``target``. Forest values are the mean over
    trees, so phi and base are per-tree results averaged in tree order.
    """
    x = _check_x(forest, x)
    phi = np.zeros(forest.n_features, dtype=np.float64)
    base = 0.0
    for tree in forest.trees:
        _check_counts(tree)
        tree_phi = [0.0] * forest.n_features
        _shap_recurse(
            tree.children_left.tolist(), tree.children_right.tolist(),
            tree.feature.tolist(), tree.threshold.tolist(),
            tree.value[:, target].tolist(), tree.n_node_samples.tolist(),
            x.tolist(), tree_phi, 0, [], [], [], [], 1.0, 1.0, -1)
        phi += tree_phi
        base += _tree_base_value(tree, target)
    n = len(forest.trees)
    return phi / n, base / n


def _coalition_value(tree: RegressionTree, x: np.ndarray, mask: int,
                     target: int) -> float:
    """Path-dependent expectation with features in ``mask`` fixed to x."""
    left = tree.children_left
    right = tree.children_right
    feature = tree.feature
    counts = tree.n_node_samples

    def walk(node: int, weight: float) -> float:
        f = feature[node]
        if f < 0:
            return weight * tree.value[node, target]
        if mask >> f & 1:
            child = left[node] if x[f] < tree.threshold[node] else right[node]
            return walk(child, weight)
        n_here = counts[node]
        return (walk(left[node], weight * counts[left[node]] / n_here)
                + walk(right[node], weight * counts[right[node]] / n_here))

    return walk(0, 1.0)


def brute_force_shap(forest: RegressionForest, x, target: int = 0) -> np.ndarray:
    """Shapley values by full coalition enumeration; oracle for tree_shap."""
    x = _check_x(forest, x)
    m = forest.n_features
    if m > 15:
        raise TooManyFeaturesError(
            f"coalition enumeration is capped at 15 features, got {m}")
    weight = [factorial(s) * factorial(m - s - 1) / factorial(m) for s in range(m)]
    phi = np.zeros(m, dtype=np.float64)
    for tree in forest.trees:
        _check_counts(tree)
        values = [_coalition_value(tree, x, mask, target) for mask in range(1 << m)]
        for i in range(m):
            bit = 1 << i
            for mask in range(1 << m):
                if mask & bit:
                    continue
                phi[i] += weight[bin(mask).count("1")] * (values[mask | bit] - values[mask])
    return phi / len(forest.trees)


@dataclass
class ShapExplanation:
    """Attribution of one (dataset, metric) prediction to the meta-features."""

    dataset_id: str
    metric: str
    algorithm: str
    phi: dict[str, float]
    base_value: float
    feature_values: dict[str, float]
    prediction: float

    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + sum(self.phi.values()) - self.prediction)


def selector_shap(selected: dict[tuple[str, str], str], models,
                  features: MetaFeatureMatrix,
                  metrics: list[str]) -> list[ShapExplanation]:
    """One explanation per (dataset, metric), using the selected algorithm's
    held-out-fold model at the dataset's own feature vector."""
    names = features.feature_names
    out: list[ShapExplanation] = []
    for metric in metrics:
        for ds_id in sorted({d for d, m in selected if m == metric}):
            algorithm = selected[(ds_id, metric)]
            try:
                forest, target = models.get(algorithm, ds_id, metric)
            except AttributeError:
                raise ModelNotFoundError(
                    "selector_shap needs the fold models; rerun the harness "
                    "with keep_models=True") from None
            x = features.row(ds_id)
            phi, base = tree_shap(forest, x, target)
            out.append(ShapExplanation(
                dataset_id=ds_id,
                metric=metric,
                algorithm=algorithm,
                phi={n: float(v) for n, v in zip(names, phi)},
                base_value=base,
                feature_values={n: float(v) for n, v in zip(names, x)},
                prediction=float(forest.predict_row(x)[target]),
            ))
    return out


@dataclass
class FeatureImportance:
    feature: str
    mean_abs_phi: float
    points: list[tuple[str, float, float]] = field(default_factory=list)
    # points: (dataset id, phi, raw feature value), beeswarm-ready


def summary_ranking(explanations: list[ShapExplanation]) -> list[FeatureImportance]:
    """Features ranked by mean |phi| (descending; ties by name)."""
    if not explanations:
        raise ValueError("summary_ranking needs at least one explanation")
    names = list(explanations[0].phi)
    ranking = []
    for name in names:
        points = [(e.dataset_id, e.phi[name], e.feature_values[name])
                  for e in explanations]
        mean_abs = float(np.mean([abs(p[1]) for p in points]))
        ranking.append(FeatureImportance(name, mean_abs, points))
    ranking.sort(key=lambda fi: (-fi.mean_abs_phi, fi.feature))
    return ranking


@dataclass
class DomainTopK:
    domain: str
    k: int
    features: list[str]


@dataclass
class DomainAnalysis:
    """Per-domain top-k feature sets and their pair/triple intersections."""

    k: int
    groups: list[DomainTopK]
    intersections: dict[tuple[str, ...], list[str]]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "domains": {g.domain: list(g.features) for g in self.groups},
            "intersections": {
                "&".join(key): list(feats)
                for key, feats in sorted(self.intersections.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def domain_topk(explanations: list[ShapExplanation], datasets: list[MLCDataset],
                k: int = 5) -> DomainAnalysis:
    """Group explanations by dataset domain and rank features within each.

    Emits the top-k feature list per domain plus the intersections of the
    top-k sets over every domain pair and triple.
    """
    domain_of = {ds.id: ds.domain for ds in datasets}
    by_domain: dict[str, list[ShapExplanation]] = {}
    for e in explanations:
        if e.dataset_id not in domain_of:
            raise ModelNotFoundError(f"no domain tag for dataset {e.dataset_id!r}")
        by_domain.setdefault(domain_of[e.dataset_id], []).append(e)
    groups = []
    top_sets: dict[str, set[str]] = {}
    for domain in sorted(by_domain):
        ranked = summary_ranking(by_domain[domain])
        top = [fi.feature for fi in ranked[:k]]
        groups.append(DomainTopK(domain, k, top))
        top_sets[domain] = set(top)
    intersections: dict[tuple[str, ...], list[str]] = {}
    names = sorted(top_sets)
    for size in (2, 3):
        for combo in combinations(names, size):
            shared = set.intersection(*(top_sets[d] for d in combo))
            intersections[combo] = sorted(shared)
    return DomainAnalysis(k, groups, intersections)


def save_explanations_csv(explanations: list[ShapExplanation],
                          path: str | Path, comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(EXPLANATIONS_HEADER)
        for e in explanations:
            for name in e.phi:
                writer.writerow([
                    e.dataset_id, e.metric, e.algorithm, name,
                    format_float(e.phi[name]),
                    format_float(e.feature_values[name]),
                    format_float(e.base_value),
                ])


def load_explanations_csv(path: str | Path) -> list[ShapExplanation]:
    """Rebuild explanations from the CSV export (prediction = base + sum phi)."""
    rows: dict[tuple[str, str, str], dict] = {}
    order: list[tuple[str, str, str]] = []
    content = read_csv_rows(path)
    if not content or content[0] != EXPLANATIONS_HEADER:
        raise ValueError(f"{path}: unexpected explanations header")
    for ds, metric, alg, feature, phi, fval, base in content[1:]:
        key = (ds, metric, alg)
        if key not in rows:
            rows[key] = {"phi": {}, "values": {}, "base": float(base)}
            order.append(key)
        rows[key]["phi"][feature] = float(phi)
        rows[key]["values"][feature] = float(fval)
    out = []
    for ds, metric, alg in order:
        row = rows[(ds, metric, alg)]
        out.append(ShapExplanation(
            dataset_id=ds, metric=metric, algorithm=alg,
            phi=row["phi"], base_value=row["base"],
            feature_values=row["values"],
            prediction=row["base"] + sum(row["phi"].values()),
        ))
    return out
