"""Inclusion/exclusion, the eight prediction targets, and chronological
train/validation/test splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from .extracts import BundleHistory, assemble_stays, icu_intervals_from_events
from .hospitals import ICU_DEPARTMENT_NAMES


class TargetTask(str, Enum):
    MORTALITY = "mortality"
    DISPOSITION = "disposition"
    DISCHARGE_24 = "discharge_24"
    DISCHARGE_48 = "discharge_48"
    ENTER_ICU_24 = "enter_icu_24"
    ENTER_ICU_48 = "enter_icu_48"
    LEAVE_ICU_24 = "leave_icu_24"
    LEAVE_ICU_48 = "leave_icu_48"


ALL_TASKS = tuple(TargetTask)
ICU_TASKS = (
    TargetTask.ENTER_ICU_24,
    TargetTask.ENTER_ICU_48,
    TargetTask.LEAVE_ICU_24,
    TargetTask.LEAVE_ICU_48,
)
DISPOSITION_CLASSES = ("expired_or_hospice", "home_without_service", "with_service")

SPECIAL_DISPOSITIONS = frozenset(
    {
        "left against medical advice/ama",
        "still a patient",
        "admitted as an inpatient",
        "court/law enforcement",
        "ed dismiss/diverted elsewhere",
    }
)

_EXPIRED = {"expired", "hospice"}
_HOME = {"home"}


def disposition_class(raw: str | float | None) -> str | None:
    """Map a raw disposition string to its class; None when missing,
    "special" for administrative exits. Matching is case-insensitive."""
    if raw is None or (isinstance(raw, float) and np.isnan(raw)):
        return None
    text = str(raw).strip().lower()
    if not text:
        return None
    if text in SPECIAL_DISPOSITIONS:
        return "special"
    if text in _EXPIRED:
        return "expired_or_hospice"
    if text in _HOME:
        return "home_without_service"
    return "with_service"


@dataclass
class LabeledDataset:
    task: TargetTask
    index: pd.DataFrame  # columns: patient_id, record_date
    labels: np.ndarray
    n_candidates: int
    exclusions: dict[str, int] = field(default_factory=dict)
    split: np.ndarray | None = None  # "train" | "valid" | "test"

    def __post_init__(self):
        if len(self.index) != len(self.labels):
            raise ValueError("index and labels must align")
        included = len(self.index)
        if included + sum(self.exclusions.values()) != self.n_candidates:
            raise ValueError("exclusion accounting does not close")

    def rows(self, split: str) -> np.ndarray:
        if self.split is None:
            raise ValueError("dataset not split yet")
        return self.split == split

    def manifest(self) -> pd.DataFrame:
        """Counts by split and class, for the audit CSV."""
        rows = []
        if self.split is None:
            splits = {"all": np.ones(len(self.labels), dtype=bool)}
        else:
            splits = {s: self.split == s for s in ("train", "valid", "test")}
        for split_name, mask in splits.items():
            for cls in np.unique(self.labels):
                rows.append(
                    {
                        "task": self.task.value,
                        "split": split_name,
                        "label": int(cls),
                        "count": int((self.labels[mask] == cls).sum()),
                    }
                )
        for reason, count in sorted(self.exclusions.items()):
            rows.append({"task": self.task.value, "split": "excluded:" + reason,
                         "label": -1, "count": count})
        return pd.DataFrame(rows)


@dataclass
class CohortContext:
    """Everything label construction needs about one hospital's history."""

    patient_days: pd.DataFrame  # patient_id, record_date (census rows)
    stays: pd.DataFrame  # patient_id -> admission/discharge/disposition
    icu_intervals: dict
    has_icu: bool
    history_end: pd.Timestamp


def build_context(
    history: BundleHistory,
    icu_departments: tuple[str, ...] = ICU_DEPARTMENT_NAMES,
    has_icu: bool | None = None,
) -> CohortContext:
    t5 = history.tables[5]
    census = t5[t5["discharge_time"].isna()][["patient_id", "record_date"]].copy()
    census["record_date"] = pd.to_datetime(census["record_date"])
    census = census.sort_values(["patient_id", "record_date"], kind="stable").reset_index(drop=True)
    stays = assemble_stays(history)
    intervals = icu_intervals_from_events(history.tables[1], icu_departments)
    if has_icu is None:
        has_icu = bool(intervals)
    return CohortContext(
        patient_days=census,
        stays=stays,
        icu_intervals=intervals,
        has_icu=has_icu,
        history_end=pd.Timestamp(max(history.dates)),
    )


def _icu_membership(ctx: CohortContext, pids: np.ndarray, at: pd.Series) -> np.ndarray:
    out = np.zeros(len(pids), dtype=bool)
    if not ctx.icu_intervals:
        return out
    at_np = at.to_numpy()
    for i, pid in enumerate(pids):
        spans = ctx.icu_intervals.get(pid)
        if not spans:
            continue
        t = at_np[i]
        for entry, exit_ in spans:
            if np.datetime64(entry) <= t and (pd.isna(exit_) or t < np.datetime64(exit_)):
                out[i] = True
                break
    return out


def build_labels(task: TargetTask | str, ctx: CohortContext) -> LabeledDataset:
    """Construct one task's labeled patient-day dataset with exclusion
    accounting (|included| + excluded-by-reason = |candidate days|)."""
    task = TargetTask(task)
    if task in ICU_TASKS and not ctx.has_icu:
        raise ValueError(f"{task.value} undefined for a hospital without an ICU")

    days = ctx.patient_days.reset_index(drop=True)
    n_candidates = len(days)
    stays = ctx.stays.set_index("patient_id")
    stay = stays.reindex(days["patient_id"])
    cut = days["record_date"]
    discharge = pd.to_datetime(stay["discharge_time"]).reset_index(drop=True)
    dclass = pd.Series(
        [disposition_class(v) for v in stay["disposition"]], index=days.index
    )
    exclusions: dict[str, int] = {}

    def finish(keep: pd.Series, labels: np.ndarray) -> LabeledDataset:
        return LabeledDataset(
            task=task,
            index=days[keep][["patient_id", "record_date"]].reset_index(drop=True),
            labels=labels[keep.to_numpy()],
            n_candidates=n_candidates,
            exclusions=exclusions,
        )

    if task in (TargetTask.MORTALITY, TargetTask.DISPOSITION):
        missing = dclass.isna()
        special = dclass == "special"
        exclusions["disposition_missing"] = int(missing.sum())
        exclusions["special_disposition"] = int(special.sum())
        keep = ~missing & ~special
        if task is TargetTask.MORTALITY:
            labels = (dclass == "expired_or_hospice").to_numpy().astype(int)
        else:
            labels = dclass.map(
                {c: i for i, c in enumerate(DISPOSITION_CLASSES)}
            ).to_numpy()
            labels = np.where(np.isnan(labels.astype(float)), -1, labels).astype(int)
        return finish(keep, labels)

    if task in (TargetTask.DISCHARGE_24, TargetTask.DISCHARGE_48):
        horizon = pd.Timedelta(hours=24 if task is TargetTask.DISCHARGE_24 else 48)
        missing = dclass.isna() | discharge.isna()
        exclusions["disposition_or_discharge_time_missing"] = int(missing.sum())
        within = discharge.notna() & (discharge <= cut + horizon)
        special_within = ~missing & within & (dclass == "special")
        exclusions["special_disposition_within_horizon"] = int(special_within.sum())
        keep = ~missing & ~special_within
        labels = (within & (dclass != "expired_or_hospice") & (dclass != "special")) \
            .to_numpy().astype(int)
        return finish(keep, labels)

    # ICU tasks
    horizon = pd.Timedelta(hours=24 if task.value.endswith("_24") else 48)
    horizon_end = cut + horizon
    in_icu_now = _icu_membership(ctx, days["patient_id"].to_numpy(), cut)
    # hospitalized at horizon end: not discharged by then, and the data
    # actually extends that far
    discharged_by_horizon = discharge.notna() & (discharge <= horizon_end)
    beyond_data = horizon_end > ctx.history_end
    exclusions["discharged_before_horizon"] = int(
        (discharged_by_horizon & ~beyond_data).sum()
    )
    exclusions["horizon_beyond_data"] = int(beyond_data.sum())
    hospitalized = ~discharged_by_horizon & ~beyond_data

    if task in (TargetTask.ENTER_ICU_24, TargetTask.ENTER_ICU_48):
        wrong_side = in_icu_now
        exclusions["currently_in_icu"] = int((hospitalized & wrong_side).sum())
    else:
        wrong_side = ~in_icu_now
        exclusions["currently_outside_icu"] = int((hospitalized & wrong_side).sum())
    keep = pd.Series(hospitalized & ~wrong_side, index=days.index)

    at_horizon = _icu_membership(ctx, days["patient_id"].to_numpy(), horizon_end)
    if task in (TargetTask.ENTER_ICU_24, TargetTask.ENTER_ICU_48):
        labels = at_horizon.astype(int)
    else:
        labels = (~at_horizon).astype(int)
    return finish(keep, labels)


def chronological_split(
    ds: LabeledDataset, fractions: tuple[float, float, float] = (0.5, 0.2, 0.3)
) -> LabeledDataset:
    """Sort by (record_date, patient_id); earliest rows train, then valid,
    then test, with boundaries snapped forward so no calendar date straddles
    two splits."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    order = np.lexsort(
        (ds.index["patient_id"].to_numpy(), ds.index["record_date"].to_numpy())
    )
    dates = ds.index["record_date"].to_numpy()[order]
    uniq = np.unique(dates)
    if len(uniq) < 3:
        raise ValueError("need at least 3 distinct dates to split")
    n = len(order)

    def snap(k: int) -> int:
        # advance k until it sits on a date boundary
        while 0 < k < n and dates[k] == dates[k - 1]:
            k += 1
        return k

    k1 = snap(int(round(n * fractions[0])))
    k2 = snap(int(round(n * (fractions[0] + fractions[1]))))
    if k1 == 0 or k2 <= k1 or k2 >= n:
        raise ValueError("split fractions leave an empty split after date snapping")
    split_sorted = np.empty(n, dtype=object)
    split_sorted[:k1] = "train"
    split_sorted[k1:k2] = "valid"
    split_sorted[k2:] = "test"
    split = np.empty(n, dtype=object)
    split[order] = split_sorted
    return LabeledDataset(
        task=ds.task,
        index=ds.index,
        labels=ds.labels,
        n_candidates=ds.n_candidates,
        exclusions=ds.exclusions,
        split=split,
    )


def split_date_masks(
    record_dates: pd.Series, fractions: tuple[float, float, float] = (0.5, 0.2, 0.3)
) -> dict[str, np.ndarray]:
    """Hospital-level chronological masks over arbitrary rows, used to fit
    the per-hospital feature pipeline on its earliest dates."""
    fake = LabeledDataset(
        task=TargetTask.MORTALITY,
        index=pd.DataFrame(
            {"patient_id": np.arange(len(record_dates)).astype(str),
             "record_date": pd.to_datetime(record_dates).to_numpy()}
        ),
        labels=np.zeros(len(record_dates), dtype=int),
        n_candidates=len(record_dates),
    )
    out = chronological_split(fake, fractions)
    return {s: out.split == s for s in ("train", "valid", "test")}
