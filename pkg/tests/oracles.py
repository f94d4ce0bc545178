"""Independent reference implementations used to check the fast paths.

Each oracle deliberately takes a different computational route than the code
under test: pairwise enumeration for AUC, non-negative least squares for
isotonic regression, and full-subset enumeration for Shapley values.
"""

from itertools import combinations
from math import factorial

import numpy as np
from scipy.optimize import nnls


def pairwise_auc(scores, labels) -> float:
    """O(n_pos * n_neg) win/tie counting."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def isotonic_oracle(y, w) -> np.ndarray:
    """Isotonic least squares via NNLS on the increments.

    Parameterize v_i = c + sum_{k<=i} d_k with d_k >= 0 (c split into +/-
    parts) and solve the weighted least squares exactly.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(y)
    sw = np.sqrt(w)
    lower = np.tril(np.ones((n, n)), k=0)
    lower[:, 0] = 0.0
    A = np.column_stack([np.ones(n), -np.ones(n), lower[:, 1:]])
    coef, _ = nnls(sw[:, None] * A, sw * y, maxiter=10 * n * n)
    return A @ coef


def _oracle_covers(tree, background):
    counts = {}

    def route(node, rows):
        counts[node] = len(rows)
        f = tree.feature[node]
        if f >= 0:
            go = background[rows, f] <= tree.threshold[node]
            route(int(tree.left[node]), rows[go])
            route(int(tree.right[node]), rows[~go])

    route(0, np.arange(len(background)))
    return counts


def _oracle_value(tree, node, x, subset, covers, lr):
    f = tree.feature[node]
    if f < 0:
        return lr * tree.weight[node]
    l, r = int(tree.left[node]), int(tree.right[node])
    if f in subset:
        child = l if x[f] <= tree.threshold[node] else r
        return _oracle_value(tree, child, x, subset, covers, lr)
    total = covers[l] + covers[r]
    wl = covers[l] / total if total > 0 else 0.5
    return wl * _oracle_value(tree, l, x, subset, covers, lr) + (1 - wl) * _oracle_value(
        tree, r, x, subset, covers, lr
    )


def brute_force_shapley(ensemble, x, background, class_index=0):
    """Exact Shapley over all 2^M subsets of the full feature set, using the
    cover-weighted conditional-expectation value function."""
    p = len(ensemble.feature_names)
    lr = ensemble.hp.learning_rate
    trees = ensemble.trees[class_index if ensemble.hp.loss == "softmax" else 0]
    covers = [_oracle_covers(t, background) for t in trees]
    cache = {}

    def value(subset):
        if subset not in cache:
            cache[subset] = sum(
                _oracle_value(t, 0, x, subset, c, lr) for t, c in zip(trees, covers)
            )
        return cache[subset]

    phi = np.zeros(p)
    for j in range(p):
        rest = [f for f in range(p) if f != j]
        for size in range(p):
            w = factorial(size) * factorial(p - size - 1) / factorial(p)
            for combo in combinations(rest, size):
                s = frozenset(combo)
                phi[j] += w * (value(s | {j}) - value(s))
    return phi, value(frozenset())
