"""Isotonic probability calibration via pool-adjacent-violators, plus the
binned calibration-curve assessment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


@dataclass
class IsotonicModel:
    """Monotone step function: breakpoints (strictly ascending scores) and
    their fitted non-decreasing probabilities."""

    breakpoints: np.ndarray
    values: np.ndarray
    interpolation: str = "step"

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.breakpoints) != len(self.values) or len(self.values) == 0:
            raise ValueError("breakpoints and values must align and be non-empty")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly ascending")
        if np.any(np.diff(self.values) < -1e-12):
            raise ValueError("values must be non-decreasing")

    def apply(self, scores) -> np.ndarray:
        """Evaluate the step function; out-of-range scores clamp to the ends."""
        scores = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.breakpoints, scores, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return self.values[idx]

    def to_dict(self) -> dict:
        return {
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "interpolation": self.interpolation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsotonicModel":
        return cls(
            breakpoints=np.array(d["breakpoints"], dtype=float),
            values=np.array(d["values"], dtype=float),
            interpolation=d.get("interpolation", "step"),
        )


def pav(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted isotonic least squares via pool-adjacent-violators.

    Returns the non-decreasing fit, expanded back to input length.
    """
    n = len(values)
    # block representation: running (mean, weight, count) stacks
    means = np.empty(n)
    wsum = np.empty(n)
    counts = np.empty(n, dtype=int)
    top = 0
    for i in range(n):
        means[top] = values[i]
        wsum[top] = weights[i]
        counts[top] = 1
        top += 1
        while top > 1 and means[top - 2] >= means[top - 1]:
            w = wsum[top - 2] + wsum[top - 1]
            means[top - 2] = (
                means[top - 2] * wsum[top - 2] + means[top - 1] * wsum[top - 1]
            ) / w
            wsum[top - 2] = w
            counts[top - 2] += counts[top - 1]
            top -= 1
    return np.repeat(means[:top], counts[:top])


def fit_isotonic(scores, labels) -> IsotonicModel:
    """Fit the isotonic calibrator mapping raw scores to probabilities.

    Equal scores are pooled into one weighted point before PAV so the fitted
    function is single-valued per score. All-one-class labels yield a
    constant model at the class rate.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be aligned 1-D arrays")
    if len(scores) < 2:
        raise ValueError("need at least 2 observations")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")

    rate = labels.mean()
    if rate in (0.0, 1.0):
        return IsotonicModel(breakpoints=np.array([0.0]), values=np.array([rate]))

    order = np.argsort(scores, kind="stable")
    s, y = scores[order], labels[order]
    uniq, start = np.unique(s, return_index=True)
    # pooled mean label and weight per distinct score
    sums = np.add.reduceat(y, start)
    counts = np.diff(np.append(start, len(y)))
    fitted = pav(sums / counts, counts.astype(float))
    return IsotonicModel(breakpoints=uniq, values=np.clip(fitted, 0.0, 1.0))


def split_test_halves(dates) -> tuple[np.ndarray, np.ndarray]:
    """Chronological halves of a test set by distinct date.

    Returns boolean masks (calibration_half, assessment_half) over the input
    rows. Odd date counts round toward the calibration half.
    """
    dates = np.asarray(dates)
    uniq = np.unique(dates)
    if len(uniq) < 2:
        raise ValueError("need at least 2 distinct dates to split")
    n_cal = int(np.ceil(len(uniq) / 2))
    cutoff = uniq[n_cal - 1]
    cal_mask = dates <= cutoff
    return cal_mask, ~cal_mask


@dataclass
class CalibrationCurve:
    bin_edges: np.ndarray
    counts: np.ndarray
    mean_predicted: np.ndarray
    empirical_rate: np.ndarray
    included: np.ndarray
    min_count: int = 10

    def points(self) -> pd.DataFrame:
        """Plot-ready points for the included bins only."""
        return pd.DataFrame(
            {
                "mean_predicted": self.mean_predicted[self.included],
                "empirical_rate": self.empirical_rate[self.included],
                "count": self.counts[self.included],
            }
        )


def assess(predictions, labels, n_bins: int = 10, min_count: int = 10):
    """Calibration curve over uniform bins plus its mean squared error.

    Only bins holding at least ``min_count`` observations enter the curve and
    the MSE; if none qualify the MSE is None.
    """
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if np.any(predictions < 0) or np.any(predictions > 1):
        raise ValueError("predictions must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.minimum((predictions * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    mean_pred = np.full(n_bins, np.nan)
    emp = np.full(n_bins, np.nan)
    for b in range(n_bins):
        mask = idx == b
        if counts[b]:
            mean_pred[b] = predictions[mask].mean()
            emp[b] = labels[mask].mean()
    included = counts >= min_count
    curve = CalibrationCurve(
        bin_edges=edges,
        counts=counts,
        mean_predicted=mean_pred,
        empirical_rate=emp,
        included=included,
        min_count=min_count,
    )
    if not included.any():
        return curve, None
    mse = float(np.mean((mean_pred[included] - emp[included]) ** 2))
    return curve, mse


def fit_isotonic_ovr(class_scores, labels) -> list[IsotonicModel]:
    """One-vs-rest isotonic calibrators, one per class column."""
    class_scores = np.asarray(class_scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    return [
        fit_isotonic(class_scores[:, c], (labels == c).astype(int))
        for c in range(class_scores.shape[1])
    ]


def apply_isotonic_ovr(models: list[IsotonicModel], class_scores) -> np.ndarray:
    """Apply per-class calibrators and renormalize rows to sum to 1."""
    class_scores = np.asarray(class_scores, dtype=float)
    cal = np.column_stack([m.apply(class_scores[:, c]) for c, m in enumerate(models)])
    totals = cal.sum(axis=1, keepdims=True)
    # a degenerate all-zero row falls back to uniform
    uniform = np.full_like(cal, 1.0 / cal.shape[1])
    return np.where(totals > 0, cal / np.where(totals == 0, 1.0, totals), uniform)
