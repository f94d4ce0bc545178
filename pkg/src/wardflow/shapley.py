"""Exact per-prediction Shapley attributions for boosted tree ensembles.

The value function of a coalition S is the classic conditional-expectation
tree walk: splits on features in S follow the input, splits on other
features average both children weighted by background cover. Attributions
are computed per tree by enumerating subsets of the features that actually
appear in that tree (features absent from a tree are null players), then
summed across trees; the result equals full-ensemble subset enumeration.

Values are computed on the margin scale and, for display, rescaled
proportionally to the probability scale so additivity holds there exactly.
The calibration step is not attributed: explanations describe the
uncalibrated model.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .gbdt import Ensemble, Tree, _sigmoid, _softmax

_MAX_SUBSET_CELLS = 2_000_000  # chunk rows so 2^a * chunk stays bounded


@dataclass
class Attribution:
    """Signed per-feature decomposition of one prediction around a base value.

    base_value + contributions.sum() == prediction (within 1e-9) on the
    declared scale.
    """

    base_value: float
    contributions: np.ndarray
    prediction: float
    scale: str
    feature_names: list[str]

    def check_additivity(self, tol: float = 1e-9) -> None:
        gap = abs(self.base_value + float(self.contributions.sum()) - self.prediction)
        if gap > tol:
            raise AssertionError(f"additivity violated by {gap:.3e}")

    def to_dict(self) -> dict:
        return {
            "base_value": self.base_value,
            "prediction": self.prediction,
            "scale": self.scale,
            "contributions": {
                name: float(c) for name, c in zip(self.feature_names, self.contributions)
            },
        }


def tree_covers(tree: Tree, background: np.ndarray) -> np.ndarray:
    """Background row count reaching each node under normal routing."""
    counts = np.zeros(tree.n_nodes, dtype=float)
    stack = [(0, np.arange(len(background)))]
    while stack:
        node, rows = stack.pop()
        counts[node] = len(rows)
        f = tree.feature[node]
        if f >= 0:
            go = background[rows, f] <= tree.threshold[node]
            stack.append((int(tree.left[node]), rows[go]))
            stack.append((int(tree.right[node]), rows[~go]))
    return counts


def _coalition_values(
    tree: Tree, X: np.ndarray, covers: np.ndarray, leaf_values: np.ndarray, in_subset: np.ndarray
):
    """Value of the coalition for every row: follow in-subset splits, average
    the rest by cover. Children precede parents in reverse node order."""
    vals: list = [None] * tree.n_nodes
    for node in range(tree.n_nodes - 1, -1, -1):
        f = tree.feature[node]
        if f < 0:
            vals[node] = leaf_values[node]
            continue
        l, r = int(tree.left[node]), int(tree.right[node])
        if in_subset[f]:
            go = X[:, f] <= tree.threshold[node]
            vals[node] = np.where(go, vals[l], vals[r])
        else:
            total = covers[l] + covers[r]
            wl = covers[l] / total if total > 0 else 0.5
            vals[node] = wl * vals[l] + (1.0 - wl) * vals[r]
    return vals[0]


def _tree_shapley(
    tree: Tree, X: np.ndarray, covers: np.ndarray, leaf_values: np.ndarray
) -> tuple[np.ndarray, float]:
    """Exact margin-scale Shapley for one tree: (phi of shape (n, p), v_empty)."""
    n, p = X.shape
    active = np.unique(tree.feature[tree.feature >= 0])
    phi = np.zeros((n, p))
    in_subset = np.zeros(p, dtype=bool)
    v_empty = float(_coalition_values(tree, X[:1], covers, leaf_values, in_subset))
    a = len(active)
    if a == 0:
        return phi, v_empty

    fact = [factorial(i) for i in range(a + 1)]
    weights = [fact[s] * fact[a - s - 1] / fact[a] for s in range(a)]
    chunk = max(1, _MAX_SUBSET_CELLS // (1 << a))
    for start in range(0, n, chunk):
        Xc = X[start : start + chunk]
        nc = len(Xc)
        V = np.empty((1 << a, nc))
        for mask in range(1 << a):
            in_subset[:] = False
            in_subset[active[[bool(mask >> j & 1) for j in range(a)]]] = True
            V[mask] = _coalition_values(tree, Xc, covers, leaf_values, in_subset)
        for j in range(a):
            bit = 1 << j
            acc = np.zeros(nc)
            for mask in range(1 << a):
                if mask & bit:
                    continue
                s = bin(mask).count("1")
                acc += weights[s] * (V[mask | bit] - V[mask])
            phi[start : start + chunk, active[j]] = acc
    return phi, v_empty


def margin_attributions(
    ensemble: Ensemble, X: np.ndarray, background: np.ndarray, class_index: int = 0
) -> tuple[np.ndarray, float]:
    """Margin-scale Shapley matrix (n, p) plus the margin base value for one
    class (class 0 is the single logistic margin)."""
    X = np.asarray(X, dtype=float)
    background = np.asarray(background, dtype=float)
    if len(background) == 0:
        raise ValueError("empty background set")
    if X.shape[1] != len(ensemble.feature_names) or background.shape[1] != X.shape[1]:
        raise ValueError("schema mismatch between input, background, and ensemble")

    lr = ensemble.hp.learning_rate
    base = (
        float(ensemble.base_score)
        if ensemble.hp.loss == "logistic"
        else float(ensemble.base_score[class_index])
    )
    phi = np.zeros_like(X, dtype=float)
    for tree in ensemble.trees[class_index if ensemble.hp.loss == "softmax" else 0]:
        covers = tree_covers(tree, background)
        t_phi, v_empty = _tree_shapley(tree, X, covers, tree.weight * lr)
        phi += t_phi
        base += v_empty
    return phi, base


def margin_bases(ensemble: Ensemble, background: np.ndarray) -> np.ndarray:
    """Background-expected margin per class (length 1 for logistic)."""
    background = np.asarray(background, dtype=float)
    if len(background) == 0:
        raise ValueError("empty background set")
    lr = ensemble.hp.learning_rate
    if ensemble.hp.loss == "logistic":
        bases = np.array([float(ensemble.base_score)])
    else:
        bases = np.asarray(ensemble.base_score, dtype=float).copy()
    for c, class_trees in enumerate(ensemble.trees):
        for tree in class_trees:
            covers = tree_covers(tree, background)
            leaf_values = tree.weight * lr
            bases[c] += float(
                _coalition_values(
                    tree, background[:1], covers, leaf_values,
                    np.zeros(len(ensemble.feature_names), dtype=bool),
                )
            )
    return bases


def _rescale_to_probability(phi_row, margin_base, margin_pred, prob_base, prob_pred):
    denom = margin_pred - margin_base
    if abs(denom) < 1e-300:
        return np.zeros_like(phi_row)
    return phi_row * ((prob_pred - prob_base) / denom)


def attribute(
    ensemble: Ensemble,
    X,
    background,
    scale: str = "probability",
    class_index: int = 0,
) -> list[Attribution]:
    """Attributions for each row of X against a background expectation.

    ``scale="margin"`` returns raw Shapley values of the margin function;
    ``scale="probability"`` rescales each row's contributions proportionally
    so they sum exactly to sigmoid/softmax(prediction) - base probability.
    """
    if scale not in ("margin", "probability"):
        raise ValueError(f"unknown scale {scale!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi, margin_base = margin_attributions(ensemble, X, background, class_index)
    margins = ensemble.predict_margin(X)

    out = []
    if ensemble.hp.loss == "logistic":
        margin_preds = margins
        prob_base = float(_sigmoid(np.array([margin_base]))[0])
        prob_preds = _sigmoid(margins)
    else:
        margin_preds = margins[:, class_index]
        # softmax needs every class's background-expected margin
        base_margin_vec = margin_bases(ensemble, np.asarray(background, dtype=float))
        prob_base = float(_softmax(base_margin_vec[None, :])[0, class_index])
        prob_preds = _softmax(margins)[:, class_index]

    for i in range(len(X)):
        if scale == "margin":
            att = Attribution(
                base_value=margin_base,
                contributions=phi[i],
                prediction=float(margin_preds[i]),
                scale="margin",
                feature_names=ensemble.feature_names,
            )
        else:
            contrib = _rescale_to_probability(
                phi[i], margin_base, float(margin_preds[i]), prob_base, float(prob_preds[i])
            )
            att = Attribution(
                base_value=prob_base,
                contributions=contrib,
                prediction=float(prob_preds[i]),
                scale="probability",
                feature_names=ensemble.feature_names,
            )
        out.append(att)
    return out


def waterfall(attribution: Attribution, top_k: int = 10, feature_values=None) -> dict:
    """Ordered waterfall payload: top contributions by magnitude plus the
    aggregated remainder so displayed parts sum exactly to the prediction."""
    order = sorted(
        range(len(attribution.contributions)),
        key=lambda j: (-abs(attribution.contributions[j]), attribution.feature_names[j]),
    )
    shown = order[:top_k]
    items = []
    for j in shown:
        items.append(
            {
                "feature": attribution.feature_names[j],
                "value": None if feature_values is None else float(feature_values[j]),
                "contribution": float(attribution.contributions[j]),
            }
        )
    shown_sum = sum(it["contribution"] for it in items)
    remainder = attribution.prediction - attribution.base_value - shown_sum
    return {
        "base_value": attribution.base_value,
        "prediction": attribution.prediction,
        "scale": attribution.scale,
        "items": items,
        "remainder": remainder,
        "n_features": len(attribution.contributions),
    }


@dataclass
class SummaryRanking:
    """Per-feature mean |contribution| ranking with beeswarm-ready points."""

    feature_names: list[str]
    mean_abs_contribution: np.ndarray
    order: list[int]  # descending mean |contribution|, ties by name
    points: dict[str, tuple[np.ndarray, np.ndarray]]  # feature -> (values, contributions)

    def top(self, k: int = 30) -> list[tuple[str, float]]:
        return [
            (self.feature_names[j], float(self.mean_abs_contribution[j]))
            for j in self.order[:k]
        ]


def summarize(
    ensemble: Ensemble, X, background, scale: str = "probability", class_index: int = 0
) -> SummaryRanking:
    """Rank features by mean |contribution| over a dataset."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ValueError("empty dataset")
    atts = attribute(ensemble, X, background, scale=scale, class_index=class_index)
    phi = np.vstack([a.contributions for a in atts])
    mean_abs = np.abs(phi).mean(axis=0)
    names = ensemble.feature_names
    order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], names[j]))
    points = {names[j]: (X[:, j].copy(), phi[:, j].copy()) for j in order}
    return SummaryRanking(
        feature_names=list(names), mean_abs_contribution=mean_abs, order=order, points=points
    )
