"""Ranking and classification metrics plus the clinician-comparison and
readmission association analyses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass
class RocResult:
    auc: float | None
    n_pos: int
    n_neg: int
    note: str = "ties count 1/2 (Mann-Whitney)"


def auc(scores, labels) -> RocResult:
    """AUC as the probability a random positive outscores a random negative.

    Rank-based Mann-Whitney form; tied scores contribute 1/2. Undefined
    (auc=None) when either class is absent.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        return RocResult(auc=None, n_pos=n_pos, n_neg=n_neg, note="single-class labels")
    ranks = stats.rankdata(scores)  # average ranks handle ties
    rank_sum_pos = ranks[labels == 1].sum()
    value = (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return RocResult(auc=float(value), n_pos=n_pos, n_neg=n_neg)


def ovr_auc(class_scores, labels) -> dict:
    """One-vs-rest AUC per class plus the macro mean over defined classes.

    ``class_scores`` is (n, k); ``labels`` holds class indices 0..k-1.
    A class absent from the labels gets auc None and is skipped in the macro.
    """
    class_scores = np.asarray(class_scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if class_scores.ndim != 2:
        raise ValueError("class_scores must be 2-D (rows, classes)")
    k = class_scores.shape[1]
    if k < 2:
        raise ValueError("need at least 2 classes")
    per_class = {}
    defined = []
    for c in range(k):
        res = auc(class_scores[:, c], (labels == c).astype(int))
        per_class[c] = res.auc
        if res.auc is not None:
            defined.append(res.auc)
    macro = float(np.mean(defined)) if defined else None
    return {"per_class": per_class, "macro": macro}


def doctor_score(edd, record_date) -> np.ndarray:
    """Convert an expected discharge date into a ranking score.

    Score is minus the days-to-discharge, so a sooner EDD ranks higher.
    Stale EDDs (before the record date) yield positive scores and still rank
    above same-day entries.
    """
    edd = np.asarray(edd, dtype="datetime64[D]")
    record_date = np.asarray(record_date, dtype="datetime64[D]")
    return -((edd - record_date) / np.timedelta64(1, "D")).astype(float)


@dataclass
class CombinationResult:
    doctor_precision: float | None
    doctor_recall: float
    and_precision: float | None
    and_recall: float
    or_precision: float | None
    or_recall: float
    precision_increment: float | None
    recall_increment: float


def _precision_recall(pred: np.ndarray, labels: np.ndarray) -> tuple[float | None, float]:
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return precision, recall


def combine_doctor_green(doctor_positive, green, labels) -> CombinationResult:
    """Precision/recall of the doctor signal, its AND with the green alert,
    and its OR with the green alert, over aligned rows."""
    doctor_positive = np.asarray(doctor_positive, dtype=bool)
    green = np.asarray(green, dtype=bool)
    labels = np.asarray(labels).astype(int)
    d_prec, d_rec = _precision_recall(doctor_positive, labels)
    and_prec, and_rec = _precision_recall(doctor_positive & green, labels)
    or_prec, or_rec = _precision_recall(doctor_positive | green, labels)
    return CombinationResult(
        doctor_precision=d_prec,
        doctor_recall=d_rec,
        and_precision=and_prec,
        and_recall=and_rec,
        or_precision=or_prec,
        or_recall=or_rec,
        precision_increment=None
        if (and_prec is None or d_prec is None)
        else and_prec - d_prec,
        recall_increment=or_rec - d_rec,
    )


@dataclass
class WelchResult:
    t: float
    dof: float
    p_one_sided: float
    mean_a: float
    mean_b: float


def welch_one_sided(a, b) -> WelchResult:
    """One-sided Welch t-test of H1: mean(a) > mean(b), unequal variances.

    Degenerate zero-variance/zero-dof cases report t=0, p=0.5 when the means
    agree and p in {0, 1} otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least 2 observations")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    if se2 == 0:
        if ma == mb:
            return WelchResult(t=0.0, dof=float("nan"), p_one_sided=0.5, mean_a=ma, mean_b=mb)
        return WelchResult(
            t=math.copysign(float("inf"), ma - mb),
            dof=float("nan"),
            p_one_sided=0.0 if ma > mb else 1.0,
            mean_a=ma,
            mean_b=mb,
        )
    t = (ma - mb) / math.sqrt(se2)
    dof = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = float(stats.t.sf(t, dof))
    return WelchResult(t=float(t), dof=float(dof), p_one_sided=p, mean_a=float(ma), mean_b=float(mb))


def odds_ratio(
    exposed_events: int, exposed_total: int, reference_events: int, reference_total: int
) -> tuple[float, bool]:
    """Odds of the event in the exposed group relative to the reference group.

    Returns (OR, haldane_corrected). A zero cell triggers the Haldane 0.5
    continuity correction and sets the flag.
    """
    a = exposed_events
    b = exposed_total - exposed_events
    c = reference_events
    d = reference_total - reference_events
    if min(a, b, c, d) < 0:
        raise ValueError("negative cell count")
    corrected = 0 in (a, b, c, d)
    if corrected:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    return (a / b) / (c / d), corrected


@dataclass
class ReadmissionReport:
    bucket_edges: list[float]
    bucket_counts: list[int]
    bucket_rate_7d: list[float | None]
    bucket_rate_30d: list[float | None]
    n_green: int
    n_no_green: int
    rate_7d_green: float | None
    rate_7d_no_green: float | None
    rate_30d_green: float | None
    rate_30d_no_green: float | None
    welch_7d: WelchResult | None
    welch_30d: WelchResult | None
    or_7d: float | None
    or_30d: float | None
    or_corrected_7d: bool = False
    or_corrected_30d: bool = False
    excluded_no_green_flag: int = 0
    notes: list[str] = field(default_factory=list)


def readmission_analysis(
    p48,
    discharged_within_48,
    readmit7,
    readmit30,
    green_at_48h_before=None,
    bucket_width: float = 0.05,
) -> ReadmissionReport:
    """Associate 48-hr discharge scores and green alerts with readmissions.

    Bucket curves use rows realized as 48-hr discharges, bucketing the
    predicted probability into fixed ``bucket_width`` intervals. The
    green/no-green comparison (one observation per row) uses rows whose
    ``green_at_48h_before`` flag is known; pass one row per discharged
    admission for that part. Readmit flags must satisfy 7d => 30d.
    """
    p48 = np.asarray(p48, dtype=float)
    discharged = np.asarray(discharged_within_48, dtype=bool)
    r7 = np.asarray(readmit7, dtype=float)
    r30 = np.asarray(readmit30, dtype=float)
    if np.any((r7 == 1) & (r30 == 0)):
        raise ValueError("readmit7 implies readmit30")

    n_buckets = int(round(1.0 / bucket_width))
    edges = [i * bucket_width for i in range(n_buckets + 1)]
    idx = np.minimum((p48 / bucket_width).astype(int), n_buckets - 1)
    counts, rates7, rates30 = [], [], []
    for b in range(n_buckets):
        mask = discharged & (idx == b)
        n = int(mask.sum())
        counts.append(n)
        rates7.append(float(r7[mask].mean()) if n else None)
        rates30.append(float(r30[mask].mean()) if n else None)

    report = ReadmissionReport(
        bucket_edges=edges,
        bucket_counts=counts,
        bucket_rate_7d=rates7,
        bucket_rate_30d=rates30,
        n_green=0,
        n_no_green=0,
        rate_7d_green=None,
        rate_7d_no_green=None,
        rate_30d_green=None,
        rate_30d_no_green=None,
        welch_7d=None,
        welch_30d=None,
        or_7d=None,
        or_30d=None,
    )

    if green_at_48h_before is None:
        report.notes.append("green comparison skipped (no flags provided)")
        return report

    green = np.asarray(green_at_48h_before, dtype=object)
    known = np.array([g is not None and g == g for g in green])  # g == g filters NaN
    report.excluded_no_green_flag = int((~known).sum())
    gmask = known & (green == True)  # noqa: E712  (object-array comparison)
    nmask = known & (green == False)  # noqa: E712
    report.n_green = int(gmask.sum())
    report.n_no_green = int(nmask.sum())
    if report.n_green >= 2 and report.n_no_green >= 2:
        report.rate_7d_green = float(r7[gmask].mean())
        report.rate_7d_no_green = float(r7[nmask].mean())
        report.rate_30d_green = float(r30[gmask].mean())
        report.rate_30d_no_green = float(r30[nmask].mean())
        report.welch_7d = welch_one_sided(r7[nmask], r7[gmask])
        report.welch_30d = welch_one_sided(r30[nmask], r30[gmask])
        report.or_7d, report.or_corrected_7d = odds_ratio(
            int(r7[nmask].sum()), report.n_no_green, int(r7[gmask].sum()), report.n_green
        )
        report.or_30d, report.or_corrected_30d = odds_ratio(
            int(r30[nmask].sum()), report.n_no_green, int(r30[gmask].sum()), report.n_green
        )
        if report.or_corrected_7d or report.or_corrected_30d:
            report.notes.append("odds ratio used Haldane 0.5 correction")
    else:
        report.notes.append("green comparison skipped (a group is too small)")
    return report
