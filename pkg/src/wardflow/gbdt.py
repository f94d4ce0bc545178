"""Gradient-boosted decision trees with second-order (Newton) leaf fitting.

Binary logistic and multiclass softmax losses, exact split enumeration over
sorted unique feature values, L2-regularized leaf weights, and a versioned
JSON artifact format. No subsampling, so runs are fully deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int = 3
    learning_rate: float = 0.3
    n_estimators: int = 50
    loss: str = "logistic"  # "logistic" | "softmax"
    reg_lambda: float = 1.0
    min_child_hessian: float = 0.0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be positive")
        if self.loss not in ("logistic", "softmax"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")
        if self.min_child_hessian < 0:
            raise ValueError("min_child_hessian must be >= 0")


class Tree:
    """Flat-array decision tree.

    ``feature[i] == -1`` marks a leaf; equal-to-threshold values route left.
    ``g_sum``/``h_sum`` hold the node's gradient/hessian totals so executed
    split gains can be recomputed exactly from stored state.
    """

    __slots__ = ("feature", "threshold", "left", "right", "weight", "g_sum", "h_sum", "gain")

    def __init__(self, feature, threshold, left, right, weight, g_sum, h_sum, gain):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.weight = np.asarray(weight, dtype=float)
        self.g_sum = np.asarray(g_sum, dtype=float)
        self.h_sum = np.asarray(h_sum, dtype=float)
        self.gain = np.asarray(gain, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        """Route rows to leaves; returns the leaf node index per row."""
        idx = np.zeros(len(X), dtype=np.int32)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                return idx
            r = np.nonzero(active)[0]
            go_left = X[r, feat[r]] <= self.threshold[idx[r]]
            idx[r] = np.where(go_left, self.left[idx[r]], self.right[idx[r]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.weight[self.leaf_index(X)]

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return int(d.max()) if self.n_nodes else 0

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "weight": self.weight.tolist(),
            "g_sum": self.g_sum.tolist(),
            "h_sum": self.h_sum.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(**d)


class _TreeBuilder:
    def __init__(self, X_cols, g, h, hp: Hyperparams):
        self.X_cols = X_cols  # list of contiguous per-feature value arrays
        self.g = g
        self.h = h
        self.hp = hp
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.weight = []
        self.g_sum = []
        self.h_sum = []
        self.gain = []

    def _new_node(self, G, H):
        i = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.weight.append(-G / (H + self.hp.reg_lambda))
        self.g_sum.append(G)
        self.h_sum.append(H)
        self.gain.append(0.0)
        return i

    def build(self, sorted_rows: list[np.ndarray], depth: int) -> int:
        rows = sorted_rows[0]
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        node = self._new_node(G, H)
        if depth >= self.hp.max_depth or len(rows) < 2:
            return node

        lam = self.hp.reg_lambda
        mch = self.hp.min_child_hessian
        parent_score = G * G / (H + lam)
        best_gain, best_f, best_thr = -np.inf, -1, 0.0
        for f, rs in enumerate(sorted_rows):
            vals = self.X_cols[f][rs]
            boundary = vals[:-1] < vals[1:]
            if not boundary.any():
                continue
            GL = np.cumsum(self.g[rs])[:-1]
            HL = np.cumsum(self.h[rs])[:-1]
            GR = G - GL
            HR = H - HL
            ok = boundary & (HL >= mch) & (HR >= mch)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gains = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent_score)
            gains = np.where(ok, gains, -np.inf)
            i = int(np.argmax(gains))
            if gains[i] > best_gain:
                best_gain, best_f, best_thr = float(gains[i]), f, float(vals[i])

        # only strictly negative-gain splits are pruned; a zero-gain split
        # still executes (its children can expose gain at deeper levels)
        if best_f < 0 or best_gain < 0:
            return node

        go_left = self.X_cols[best_f] <= best_thr
        left_sorted = [rs[go_left[rs]] for rs in sorted_rows]
        right_sorted = [rs[~go_left[rs]] for rs in sorted_rows]
        left = self.build(left_sorted, depth + 1)
        right = self.build(right_sorted, depth + 1)
        self.feature[node] = best_f
        self.threshold[node] = best_thr
        self.left[node] = left
        self.right[node] = right
        # stored gain is recomputed from the children's stored sums so it is
        # reproducible bit-exactly from the persisted tree
        self.gain[node] = split_gain(
            self.g_sum[left], self.h_sum[left], self.g_sum[right], self.h_sum[right], lam
        )
        return node

    def tree(self) -> Tree:
        return Tree(
            self.feature, self.threshold, self.left, self.right,
            self.weight, self.g_sum, self.h_sum, self.gain,
        )


def split_gain(g_left, h_left, g_right, h_right, reg_lambda) -> float:
    """Newton gain of a split given the child gradient/hessian sums."""
    G, H = g_left + g_right, h_left + h_right
    return 0.5 * (
        g_left**2 / (h_left + reg_lambda)
        + g_right**2 / (h_right + reg_lambda)
        - G**2 / (H + reg_lambda)
    )


def _sigmoid(m):
    out = np.empty_like(m, dtype=float)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(margins):
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _logloss_binary(y, p):
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _logloss_multi(y, probs):
    p = np.clip(probs[np.arange(len(y)), y], 1e-15, 1.0)
    return float(-np.mean(np.log(p)))


@dataclass
class TrainReport:
    train_logloss: list[float]
    n_rounds: int
    base_score: float | list[float]


def schema_hash(feature_names: list[str]) -> str:
    return hashlib.sha256("\n".join(feature_names).encode("utf-8")).hexdigest()[:16]


@dataclass
class Ensemble:
    """A fitted boosted ensemble: base score plus per-class tree lists.

    For the logistic loss there is a single class list and a scalar
    ``base_score`` (log-odds); for softmax, one tree list and one base score
    per class. Margins are ``base + learning_rate * sum(leaf weights)``.
    """

    hp: Hyperparams
    base_score: float | list[float]
    trees: list[list[Tree]]
    feature_names: list[str]
    n_classes: int = 2
    hospital: str = ""
    task: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"schema mismatch: expected {len(self.feature_names)} features, got {X.shape}"
            )
        return X

    def predict_margin(self, X) -> np.ndarray:
        """Raw margin(s): (n,) for logistic, (n, k) for softmax."""
        X = self._check(X)
        lr = self.hp.learning_rate
        if self.hp.loss == "logistic":
            m = np.full(len(X), float(self.base_score))
            for t in self.trees[0]:
                m += lr * t.predict(X)
            return m
        margins = np.tile(np.asarray(self.base_score, dtype=float), (len(X), 1))
        for c, class_trees in enumerate(self.trees):
            for t in class_trees:
                margins[:, c] += lr * t.predict(X)
        return margins

    def predict_proba(self, X) -> np.ndarray:
        """Probabilities: (n,) positive-class for logistic, (n, k) rows
        summing to 1 for softmax."""
        m = self.predict_margin(X)
        if self.hp.loss == "logistic":
            return _sigmoid(m)
        return _softmax(m)

    def to_dict(self) -> dict:
        return {
            "format_version": ARTIFACT_VERSION,
            "metadata": {
                "hospital": self.hospital,
                "task": self.task,
                **self.metadata,
            },
            "hyperparams": asdict(self.hp),
            "base_score": self.base_score,
            "n_classes": self.n_classes,
            "feature_names": self.feature_names,
            "schema_hash": self.schema_hash,
            "trees": [[t.to_dict() for t in class_trees] for class_trees in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        if d.get("format_version") != ARTIFACT_VERSION:
            raise ValueError(f"unsupported artifact version {d.get('format_version')!r}")
        meta = dict(d["metadata"])
        return cls(
            hp=Hyperparams(**d["hyperparams"]),
            base_score=d["base_score"],
            trees=[[Tree.from_dict(td) for td in class_trees] for class_trees in d["trees"]],
            feature_names=list(d["feature_names"]),
            n_classes=d["n_classes"],
            hospital=meta.pop("hospital", ""),
            task=meta.pop("task", ""),
            metadata=meta,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Ensemble":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _presort(X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    cols = [np.ascontiguousarray(X[:, f]) for f in range(X.shape[1])]
    sorted_rows = [np.argsort(c, kind="stable").astype(np.int64) for c in cols]
    return cols, sorted_rows


def fit(
    X,
    y,
    hp: Hyperparams,
    *,
    feature_names: list[str] | None = None,
    base_score: float | list[float] | None = None,
    hospital: str = "",
    task: str = "",
) -> tuple[Ensemble, TrainReport]:
    """Fit a boosted ensemble by Newton steps.

    Per round the per-row gradients are p - y and hessians p(1-p) (per class
    for softmax); splits maximize the L2-regularized Newton gain and
    non-positive-gain splits are pruned. ``base_score`` defaults to the
    log-odds of the training base rate (per-class log priors for softmax).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D and aligned with y")
    if len(X) == 0:
        raise ValueError("empty training set")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names must match X width")

    cols, sorted_rows = _presort(X)

    if hp.loss == "logistic":
        if y.min() < 0 or y.max() > 1:
            raise ValueError("logistic loss requires binary labels")
        if base_score is None:
            rate = float(np.clip(y.mean(), 1e-9, 1 - 1e-9))
            base_score = float(np.log(rate / (1 - rate)))
        margins = np.full(len(y), float(base_score))
        trees: list[list[Tree]] = [[]]
        losses = []
        for _ in range(hp.n_estimators):
            p = _sigmoid(margins)
            g = p - y
            h = np.clip(p * (1 - p), 1e-16, None)
            builder = _TreeBuilder(cols, g, h, hp)
            builder.build(sorted_rows, 0)
            tree = builder.tree()
            trees[0].append(tree)
            margins += hp.learning_rate * tree.weight[tree.leaf_index(X)]
            losses.append(_logloss_binary(y, _sigmoid(margins)))
        ens = Ensemble(
            hp=hp, base_score=base_score, trees=trees,
            feature_names=list(feature_names), n_classes=2,
            hospital=hospital, task=task,
        )
        return ens, TrainReport(train_logloss=losses, n_rounds=hp.n_estimators, base_score=base_score)

    # softmax
    k = int(y.max()) + 1
    if k < 2:
        raise ValueError("softmax needs at least 2 observed classes")
    Y = np.zeros((len(y), k))
    Y[np.arange(len(y)), y] = 1.0
    if base_score is None:
        priors = np.clip(Y.mean(axis=0), 1e-9, None)
        base_score = np.log(priors).tolist()
    margins = np.tile(np.asarray(base_score, dtype=float), (len(y), 1))
    trees = [[] for _ in range(k)]
    losses = []
    for _ in range(hp.n_estimators):
        P = _softmax(margins)
        for c in range(k):
            g = P[:, c] - Y[:, c]
            h = np.clip(P[:, c] * (1 - P[:, c]), 1e-16, None)
            builder = _TreeBuilder(cols, g, h, hp)
            builder.build(sorted_rows, 0)
            tree = builder.tree()
            trees[c].append(tree)
            margins[:, c] += hp.learning_rate * tree.weight[tree.leaf_index(X)]
        losses.append(_logloss_multi(y, _softmax(margins)))
    ens = Ensemble(
        hp=hp, base_score=base_score, trees=trees,
        feature_names=list(feature_names), n_classes=k,
        hospital=hospital, task=task,
    )
    return ens, TrainReport(train_logloss=losses, n_rounds=hp.n_estimators, base_score=base_score)


def tune(
    X_train, y_train, X_valid, y_valid, grid: list[Hyperparams], **fit_kwargs
) -> tuple[Hyperparams, list[dict]]:
    """Pick the grid point with the best validation AUC (macro one-vs-rest
    for softmax); ties break toward fewer estimators, then shallower trees."""
    from .evalmetrics import auc as _auc, ovr_auc as _ovr

    if not grid:
        raise ValueError("empty grid")
    results = []
    for i, hp in enumerate(grid):
        ens, _ = fit(X_train, y_train, hp, **fit_kwargs)
        p = ens.predict_proba(X_valid)
        if hp.loss == "logistic":
            score = _auc(p, y_valid).auc
        else:
            score = _ovr(p, y_valid)["macro"]
        results.append({"hp": hp, "valid_auc": score, "order": i})
    ranked = sorted(
        results,
        key=lambda r: (
            -(r["valid_auc"] if r["valid_auc"] is not None else -1.0),
            r["hp"].n_estimators,
            r["hp"].max_depth,
            r["order"],
        ),
    )
    return ranked[0]["hp"], results
