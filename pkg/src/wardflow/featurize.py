"""Patient-day feature matrix construction and the per-hospital
rule-impute / drop-sparse / kNN-impute / label-encode pipeline.

Raw features come straight from a bundle history; lab deltas, normal-range
indicators, and range distances are derived only after imputation, on the
imputed lab values. Pipeline parameters (modal ranges, dropped columns,
imputer statistics and reference rows, encoders) fit on training rows only
and persist as versioned JSON per hospital.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .extracts import (
    LAB_NAMES,
    MEASUREMENT_NAMES,
    BundleHistory,
    assemble_stays,
    icu_intervals_from_events,
)
from .gbdt import schema_hash as _schema_hash
from .hospitals import ICU_DEPARTMENT_NAMES

PIPELINE_VERSION = 1
NA_VALUE = "NA Value"
BOUND_SENTINEL = 1e6  # stands in for an unbounded side of a normal range
FAR_PAST_DAYS = 9999.0
UNSCHEDULED = -1.0
UNMEASURED = -1.0

CATEGORICAL_COLUMNS = (
    "department", "service", "level_of_care", "o2_device", "diagnosis", "patient_type",
)
FLAG_COLUMNS = ("dnr", "npo", "iv", "dialysis")
COUNT_COLUMNS = (
    "pending_mri", "pending_ct", "pending_echo", "pending_labs",
    "notes_24h", "notes_total", "orders_24h", "orders_total",
    "medications_24h", "medications_total", "attending_count_24h",
    "total_surgery_hours",
)

# clinical critical ranges; stand-in for the clinician-provided table
DEFAULT_CRITICAL_RANGES = {
    "heart_rate": (40.0, 130.0),
    "respiratory_rate": (8.0, 30.0),
    "temperature": (35.0, 39.2),
    "spo2": (90.0, 100.0),
    "o2_concentration": (0.0, 70.0),
    "systolic_bp": (85.0, 185.0),
    "rass": (-4.0, 3.0),
    "pain_score": (0.0, 9.0),
    "inverse_flow": (0.0, 3.2),
    "fall_risk_score": (0.0, 95.0),
}


def feature_groups() -> dict[str, int]:
    """Canonical column -> group map (1 conditions, 2 labs, 3 measurements,
    4 operational time series, 5 prior info, 6 auxiliary)."""
    groups: dict[str, int] = {}
    for c in ("department", "service", "level_of_care", "o2_device", "diagnosis",
              "in_icu", "dnr", "npo", "iv", "dialysis"):
        groups[c] = 1
    for lab in LAB_NAMES:
        for suffix in ("", "_range_lower", "_range_upper", "_delta", "_norm_ind", "_range_dist"):
            groups[f"lab_{lab}{suffix}"] = 2
    groups["abnormal_labs_24h"] = 2
    for m in MEASUREMENT_NAMES:
        for suffix in ("_latest", "_max_24h", "_mean_24h", "_critical"):
            groups[f"{m}{suffix}"] = 3
    for c in ("days_in_icu", "days_since_admission", "days_until_next_surgery",
              "days_since_last_surgery", "total_surgery_hours",
              "pending_mri", "pending_ct", "pending_echo", "pending_labs",
              "notes_24h", "notes_total", "orders_24h", "orders_total",
              "medications_24h", "medications_total", "attending_count_24h"):
        groups[c] = 4
    for c in ("age", "patient_type", "days_since_previous_admission", "previous_los"):
        groups[c] = 5
    for c in ("day_of_week", "is_weekend", "ward_census", "ward_utilization",
              "ward_daily_discharges", "hospital_admissions_24h"):
        groups[c] = 6
    return groups


@dataclass
class FeatureMatrix:
    hospital_id: str
    frame: pd.DataFrame  # index: MultiIndex (patient_id, record_date)
    groups: dict[str, int]
    categorical: list[str]
    missing_mask: pd.DataFrame | None = None  # pre-imputation missingness

    def __post_init__(self):
        if self.frame.index.duplicated().any():
            raise ValueError("(patient_id, record_date) rows must be unique")
        unknown = [c for c in self.frame.columns if c not in self.groups]
        if unknown:
            raise ValueError(f"columns without a feature group: {unknown}")

    def copy(self) -> "FeatureMatrix":
        return FeatureMatrix(
            hospital_id=self.hospital_id,
            frame=self.frame.copy(),
            groups=dict(self.groups),
            categorical=list(self.categorical),
            missing_mask=None if self.missing_mask is None else self.missing_mask.copy(),
        )

    @property
    def numeric_columns(self) -> list[str]:
        return [c for c in self.frame.columns if c not in self.categorical]


def _asof_join(census: pd.DataFrame, right: pd.DataFrame, time_col: str, cols: list[str]):
    """Latest `right` row strictly before each census cut, per patient."""
    left = census[["patient_id", "cut"]].copy()
    left["__row"] = np.arange(len(left))
    left = left.sort_values("cut", kind="stable")
    r = right.dropna(subset=[time_col]).sort_values(time_col, kind="stable")
    merged = pd.merge_asof(
        left,
        r[["patient_id", time_col] + cols],
        left_on="cut",
        right_on=time_col,
        by="patient_id",
        direction="backward",
        allow_exact_matches=False,
    )
    merged = merged.sort_values("__row", kind="stable")
    return {c: merged[c].to_numpy() for c in cols + [time_col]}


def build_features(
    history: BundleHistory,
    as_of=None,
    dates=None,
    icu_departments: tuple[str, ...] = ICU_DEPARTMENT_NAMES,
) -> FeatureMatrix:
    """Raw patient-day feature matrix for the given extract dates.

    ``as_of`` restricts to a single date; ``dates`` to a list; default is
    every date in the history. Derived lab features (delta, normal-range
    indicator, range distance) and critical flags are *not* built here: they
    are computed by the pipeline after imputation, on imputed values.
    """
    t5 = history.tables[5]
    census = t5[t5["discharge_time"].isna()].copy()
    census["record_date"] = pd.to_datetime(census["record_date"])
    if as_of is not None:
        lo = pd.Timestamp(min(history.dates))
        hi = pd.Timestamp(max(history.dates))
        if not lo <= pd.Timestamp(as_of) <= hi:
            raise ValueError("as_of outside the loaded history range")
        dates = [as_of]
    # stay-cumulative columns (lab carry-forward, totals) need every stay day,
    # so the requested dates are sliced only after the full computation
    wanted = None if dates is None else set(pd.to_datetime(pd.Series(list(dates))))
    census = census.sort_values(["patient_id", "record_date"], kind="stable").reset_index(drop=True)
    census["cut"] = census["record_date"]  # record cut is midnight of the record date
    n = len(census)

    stays = assemble_stays(history).set_index("patient_id")
    stay = stays.reindex(census["patient_id"])

    cols: dict[str, np.ndarray] = {}

    # ---- group 1: current conditions ----
    events = history.tables[1]
    adt = _asof_join(census, events, "event_time", ["department", "unit", "bed"])
    department = pd.Series(adt["department"], dtype=object).fillna(np.nan)
    cols["department"] = department.to_numpy()
    unit = pd.Series(adt["unit"], dtype=object)
    icu_set = {d.upper() for d in icu_departments}
    cols["in_icu"] = np.array(
        [1.0 if isinstance(d, str) and d.upper() in icu_set else 0.0 for d in department]
    )
    orders = history.tables[2]
    svc = _asof_join(census, orders, "order_time", ["service", "level_of_care"])
    cols["service"] = pd.Series(svc["service"], dtype=object).to_numpy()
    cols["level_of_care"] = pd.Series(svc["level_of_care"], dtype=object).to_numpy()

    key = pd.MultiIndex.from_arrays([census["patient_id"], census["record_date"]])

    def day_table(number: int, columns: list[str]) -> pd.DataFrame:
        t = history.tables[number]
        t = t.copy()
        t["record_date"] = pd.to_datetime(t["record_date"])
        t = t.drop_duplicates(subset=["patient_id", "record_date"], keep="last")
        t = t.set_index(["patient_id", "record_date"])
        return t.reindex(key)[columns]

    t6 = day_table(6, ["dnr_status"])
    cols["dnr"] = np.where(
        t6["dnr_status"].fillna("").str.strip() != "", 1.0, np.nan
    )
    for flag, col in (("npo", "npo_status"), ("iv", "iv_status"), ("dialysis", "dialysis")):
        raw = census[col].fillna("").astype(str).str.strip()
        cols[flag] = np.where(raw == "Y", 1.0, np.nan)
    o2 = census["o2_device"].fillna("").astype(str).str.strip()
    cols["o2_device"] = np.where(o2 == "", None, o2).astype(object)

    t8 = day_table(8, ["diagnosis", "notes_24h", "notes_total", "attending_count_24h"])
    diag = t8["diagnosis"].fillna("").astype(str).str.strip()
    cols["diagnosis"] = np.where(diag == "", None, diag).astype(object)

    # ---- group 2: labs ----
    lab_raw_cols = [c for lab in LAB_NAMES for c in (lab, f"{lab}_range")]
    t3 = day_table(3, lab_raw_cols)
    pid_codes = pd.factorize(census["patient_id"])[0]
    abnormal = np.zeros(n)
    for lab in LAB_NAMES:
        values = t3[lab].to_numpy(dtype=float)
        ranges = t3[f"{lab}_range"].to_numpy(dtype=object)
        lower = np.array(
            [np.nan if r is None or (isinstance(r, float)) else r.lower for r in ranges]
        )
        upper = np.array(
            [np.nan if r is None or (isinstance(r, float)) else r.upper for r in ranges]
        )
        lower = np.where(np.isneginf(lower), -BOUND_SENTINEL, lower)
        upper = np.where(np.isposinf(upper), BOUND_SENTINEL, upper)
        measured_today = ~np.isnan(values)
        has_range = ~np.isnan(lower)
        out_of_range = measured_today & has_range & (
            (values < lower) | (values > upper)
        )
        abnormal += out_of_range
        # latest observed value so far in the stay
        latest = (
            pd.Series(values).groupby(pid_codes).ffill().to_numpy()
        )
        cols[f"lab_{lab}"] = latest
        cols[f"lab_{lab}_range_lower"] = lower
        cols[f"lab_{lab}_range_upper"] = upper
    cols["abnormal_labs_24h"] = abnormal

    # ---- group 3: clinical measurements ----
    meas_cols = [f"{m}{s}" for m in MEASUREMENT_NAMES for s in ("_latest", "_max_24h", "_mean_24h")]
    t4 = day_table(4, meas_cols)
    for c in meas_cols:
        cols[c] = t4[c].to_numpy(dtype=float)

    # ---- group 4: operational time series ----
    admission_time = pd.to_datetime(stay["admission_time"]).to_numpy()
    cut_np = census["cut"].to_numpy()
    cols["days_since_admission"] = np.round(
        (cut_np - admission_time) / np.timedelta64(1, "s") / 86400.0, 3
    )

    intervals = icu_intervals_from_events(events, tuple(icu_set))
    days_in_icu = np.zeros(n)
    if intervals:
        by_pid: dict[str, list[int]] = {}
        for i, p in enumerate(census["patient_id"]):
            by_pid.setdefault(p, []).append(i)
        for pid, spans in intervals.items():
            rows = by_pid.get(pid)
            if not rows:
                continue
            for i in rows:
                cut = census["cut"].iloc[i]
                total = 0.0
                for entry, exit_ in spans:
                    if entry < cut:
                        end = cut if pd.isna(exit_) else min(exit_, cut)
                        total += max(0.0, (end - entry).total_seconds() / 86400.0)
                days_in_icu[i] = round(total, 3)
    cols["days_in_icu"] = days_in_icu

    fsd = pd.to_datetime(census["future_surgery_date"])
    cols["days_until_next_surgery"] = (
        (fsd - census["record_date"]).dt.total_seconds() / 86400.0
    ).to_numpy()

    t9 = history.tables[9]
    surg = _asof_join(census, t9.assign(
        hours=(pd.to_datetime(t9["end_time"]) - pd.to_datetime(t9["start_time"]))
        .dt.total_seconds() / 3600.0
    ), "end_time", ["hours"])
    last_end = pd.to_datetime(pd.Series(surg["end_time"]))
    cols["days_since_last_surgery"] = (
        (census["cut"] - last_end).dt.total_seconds() / 86400.0
    ).round(3).to_numpy()
    # cumulative operative hours before the cut
    if len(t9):
        t9s = t9.sort_values("end_time", kind="stable").copy()
        t9s["cum_hours"] = (
            (pd.to_datetime(t9s["end_time"]) - pd.to_datetime(t9s["start_time"]))
            .dt.total_seconds() / 3600.0
        ).groupby(t9s["patient_id"].to_numpy()).cumsum()
        cum = _asof_join(census, t9s, "end_time", ["cum_hours"])
        cols["total_surgery_hours"] = np.round(np.nan_to_num(cum["cum_hours"], nan=np.nan), 3)
    else:
        cols["total_surgery_hours"] = np.full(n, np.nan)

    t10 = day_table(
        10,
        ["orders_24h", "orders_total", "medications_24h", "medications_total",
         "pending_labs", "pending_mri", "pending_ct", "pending_echo"],
    )
    for c in t10.columns:
        cols[c] = t10[c].to_numpy(dtype=float)
    for c in ("notes_24h", "notes_total", "attending_count_24h"):
        cols[c] = t8[c].to_numpy(dtype=float)

    # ---- group 5: prior information ----
    cols["age"] = stay["age"].to_numpy(dtype=float)
    pt = stay["patient_type"].fillna("").astype(str).str.strip()
    cols["patient_type"] = np.where(pt == "", None, pt).astype(object)
    prev_dis = pd.to_datetime(stay["previous_discharge_time"]).to_numpy()
    cols["days_since_previous_admission"] = np.round(
        (admission_time - prev_dis) / np.timedelta64(1, "s") / 86400.0, 3
    )
    cols["previous_los"] = stay["previous_los"].to_numpy(dtype=float)

    # ---- group 6: auxiliary operational ----
    dow = census["record_date"].dt.dayofweek.to_numpy(dtype=float)
    cols["day_of_week"] = dow
    cols["is_weekend"] = (dow >= 5).astype(float)
    unit_series = pd.Series(unit.to_numpy(), dtype=object).fillna("?")
    ward_key = pd.MultiIndex.from_arrays([unit_series, census["record_date"]])
    ward_census = pd.Series(1.0, index=ward_key).groupby(level=[0, 1]).transform("sum")
    cols["ward_census"] = ward_census.to_numpy()
    # utilization against the ward's running peak census
    wc = pd.DataFrame({"unit": unit_series.to_numpy(), "date": census["record_date"].to_numpy(),
                       "census": ward_census.to_numpy()})
    peak = wc.drop_duplicates(["unit", "date"]).sort_values(["unit", "date"], kind="stable")
    peak["peak"] = peak.groupby("unit")["census"].cummax()
    wc = wc.merge(peak[["unit", "date", "peak"]], on=["unit", "date"], how="left")
    cols["ward_utilization"] = np.round((wc["census"] / wc["peak"]).to_numpy(), 4)

    discharges = events[events["event_type"] == "discharge"]
    if len(discharges):
        ddf = pd.DataFrame(
            {
                "unit": discharges["unit"].to_numpy(),
                "date": pd.to_datetime(discharges["event_time"]).dt.normalize().to_numpy()
                + np.timedelta64(1, "D"),
            }
        )
        dcount = ddf.groupby(["unit", "date"]).size()
        lookup = pd.MultiIndex.from_arrays([unit_series, census["record_date"]])
        cols["ward_daily_discharges"] = dcount.reindex(lookup).fillna(0.0).to_numpy()
    else:
        cols["ward_daily_discharges"] = np.zeros(n)

    admissions = events[events["event_type"] == "admission"]
    if len(admissions):
        adates = (
            pd.to_datetime(admissions["event_time"]).dt.normalize() + pd.Timedelta(days=1)
        )
        acount = adates.value_counts()
        cols["hospital_admissions_24h"] = (
            acount.reindex(census["record_date"]).fillna(0.0).to_numpy()
        )
    else:
        cols["hospital_admissions_24h"] = np.zeros(n)

    groups = feature_groups()
    raw_columns = [
        c for c in groups
        if not c.endswith(("_delta", "_norm_ind", "_range_dist", "_critical"))
    ]
    frame = pd.DataFrame({c: cols[c] for c in raw_columns}, index=key)
    frame.index.names = ["patient_id", "record_date"]
    if wanted is not None:
        frame = frame[frame.index.get_level_values("record_date").isin(wanted)]
    categorical = [c for c in CATEGORICAL_COLUMNS if c in frame.columns]
    mask = frame.isna()
    return FeatureMatrix(
        hospital_id=history.hospital_id,
        frame=frame,
        groups={c: groups[c] for c in frame.columns},
        categorical=categorical,
        missing_mask=mask,
    )


def census_info(history: BundleHistory, as_of=None) -> pd.DataFrame:
    """Display metadata per census patient-day: department, unit, bed,
    service, level of care, and the charted expected discharge date."""
    t5 = history.tables[5]
    census = t5[t5["discharge_time"].isna()].copy()
    census["record_date"] = pd.to_datetime(census["record_date"])
    if as_of is not None:
        census = census[census["record_date"] == pd.Timestamp(as_of)]
    census = census.sort_values(["patient_id", "record_date"], kind="stable").reset_index(drop=True)
    census["cut"] = census["record_date"]
    adt = _asof_join(census, history.tables[1], "event_time", ["department", "unit", "bed"])
    svc = _asof_join(census, history.tables[2], "order_time", ["service", "level_of_care"])
    return pd.DataFrame(
        {
            "patient_id": census["patient_id"].to_numpy(),
            "record_date": census["record_date"].to_numpy(),
            "department": pd.Series(adt["department"], dtype=object).fillna("").to_numpy(),
            "unit": pd.Series(adt["unit"], dtype=object).fillna("").to_numpy(),
            "bed": pd.Series(adt["bed"], dtype=object).fillna("").to_numpy(),
            "service": pd.Series(svc["service"], dtype=object).fillna("").to_numpy(),
            "level_of_care": pd.Series(svc["level_of_care"], dtype=object).fillna("").to_numpy(),
            "edd": pd.to_datetime(census["expected_discharge_date"]).to_numpy(),
        }
    )


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


def _range_mode(lower: pd.Series, upper: pd.Series) -> tuple[float, float]:
    pairs = pd.Series(list(zip(lower, upper)))
    pairs = pairs[[not (np.isnan(a) or np.isnan(b)) for a, b in pairs]]
    if pairs.empty:
        return (-BOUND_SENTINEL, BOUND_SENTINEL)
    counts = pairs.value_counts()
    return counts.index[0]


def rule_impute(
    fm: FeatureMatrix, modal_ranges: dict[str, tuple[float, float]] | None = None
) -> tuple[FeatureMatrix, dict[str, tuple[float, float]]]:
    """Deterministic clinical-rule imputation.

    Missing binary status flags mean "condition absent" (0); missing
    categoricals become the reserved NA category; normal ranges backfill
    within the admission then fall back to the modal range; unmeasured
    vitals take a -1 sentinel; counts fill with 0; missing future-surgery
    dates take -1; days since last surgery / previous admission take 9999.
    Lab latests stay missing for the neighbor imputer.
    """
    out = fm.copy()
    f = out.frame
    fitted_modal: dict[str, tuple[float, float]] = {}

    for c in FLAG_COLUMNS:
        if c in f.columns:
            f[c] = f[c].fillna(0.0)
    for c in out.categorical:
        f[c] = f[c].astype(object).where(f[c].notna(), NA_VALUE)

    pid = f.index.get_level_values("patient_id")
    for lab in LAB_NAMES:
        lc, uc = f"lab_{lab}_range_lower", f"lab_{lab}_range_upper"
        if lc not in f.columns:
            continue
        grouped_l = f[lc].groupby(pid)
        grouped_u = f[uc].groupby(pid)
        f[lc] = grouped_l.ffill().groupby(pid).bfill()
        f[uc] = grouped_u.ffill().groupby(pid).bfill()
        if modal_ranges is not None and lc in modal_ranges:
            mode = modal_ranges[lc]
        else:
            mode = _range_mode(f[lc], f[uc])
        fitted_modal[lc] = (float(mode[0]), float(mode[1]))
        still = f[lc].isna()
        f.loc[still, lc] = mode[0]
        f.loc[still, uc] = mode[1]

    for m in MEASUREMENT_NAMES:
        for suffix in ("_latest", "_max_24h", "_mean_24h"):
            c = f"{m}{suffix}"
            if c in f.columns:
                f[c] = f[c].fillna(UNMEASURED)

    for c in COUNT_COLUMNS:
        if c in f.columns:
            f[c] = f[c].fillna(0.0)
    sentinel_fills = {
        "days_until_next_surgery": UNSCHEDULED,
        "days_since_last_surgery": FAR_PAST_DAYS,
        "days_since_previous_admission": FAR_PAST_DAYS,
        # no prior stay on record: sentinel, consistent with unmeasured vitals
        "previous_los": UNMEASURED,
    }
    for c, v in sentinel_fills.items():
        if c in f.columns:
            f[c] = f[c].fillna(v)
    for c in ("ward_census", "ward_utilization", "ward_daily_discharges",
              "hospital_admissions_24h", "in_icu", "abnormal_labs_24h"):
        if c in f.columns:
            f[c] = f[c].fillna(0.0)

    return out, (modal_ranges if modal_ranges is not None else fitted_modal)


def drop_sparse(
    fm: FeatureMatrix,
    train_mask: np.ndarray | None = None,
    threshold: float = 0.5,
    dropped: list[str] | None = None,
) -> tuple[FeatureMatrix, list[str]]:
    """Drop columns whose missing fraction on training rows exceeds the
    threshold (strict >). Pass ``dropped`` to replay a fitted decision."""
    out = fm.copy()
    if dropped is None:
        rows = out.frame if train_mask is None else out.frame[train_mask]
        if len(rows) == 0:
            raise ValueError("no training rows to fit the drop decision")
        frac = rows.isna().mean()
        dropped = [c for c in out.frame.columns if frac[c] > threshold]
    if set(dropped) == set(out.frame.columns):
        raise ValueError("all columns would be dropped")
    out.frame = out.frame.drop(columns=[c for c in dropped if c in out.frame.columns])
    out.groups = {c: g for c, g in out.groups.items() if c in out.frame.columns}
    out.categorical = [c for c in out.categorical if c in out.frame.columns]
    if out.missing_mask is not None:
        out.missing_mask = out.missing_mask[out.frame.columns]
    return out, list(dropped)


@dataclass
class ImputerModel:
    """k-nearest-neighbor mean imputer over z-scored numeric columns."""

    k: int
    columns: list[str]
    means: np.ndarray
    stds: np.ndarray
    reference: np.ndarray  # complete training rows, original scale
    fitted_on: str = ""

    MAX_REFERENCE_ROWS = 4000

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "columns": self.columns,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "reference": self.reference.tolist(),
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImputerModel":
        return cls(
            k=d["k"],
            columns=list(d["columns"]),
            means=np.array(d["means"], dtype=float),
            stds=np.array(d["stds"], dtype=float),
            reference=np.array(d["reference"], dtype=float),
            fitted_on=d.get("fitted_on", ""),
        )


def fit_imputer(fm: FeatureMatrix, train_mask: np.ndarray, k: int = 10,
                fitted_on: str = "") -> ImputerModel:
    cols = fm.numeric_columns
    train = fm.frame.loc[train_mask, cols].to_numpy(dtype=float)
    if len(train) == 0:
        raise ValueError("no training rows for the imputer")
    means = np.nanmean(train, axis=0)
    means = np.where(np.isnan(means), 0.0, means)
    stds = np.nanstd(train, axis=0)
    stds = np.where((stds == 0) | np.isnan(stds), 1.0, stds)
    complete = ~np.isnan(train).any(axis=1)
    reference = train[complete][: ImputerModel.MAX_REFERENCE_ROWS]
    if len(reference) == 0:
        raise ValueError("no complete training rows available as imputer references")
    if k > len(reference):
        warnings.warn(
            f"k={k} exceeds {len(reference)} reference rows; clamping", stacklevel=2
        )
        k = len(reference)
    return ImputerModel(
        k=k, columns=list(cols), means=means, stds=stds, reference=reference,
        fitted_on=fitted_on,
    )


def apply_imputer(model: ImputerModel, fm: FeatureMatrix) -> FeatureMatrix:
    """Fill remaining numeric holes with the mean of the k nearest complete
    training rows under z-scored Euclidean distance on the row's observed
    numeric columns. Ties break by reference-row ordinal (stable sort)."""
    out = fm.copy()
    cols = model.columns
    if [c for c in cols if c not in out.frame.columns]:
        raise ValueError("imputer columns missing from the matrix")
    X = out.frame[cols].to_numpy(dtype=float)
    holes = np.isnan(X)
    rows_with_holes = np.nonzero(holes.any(axis=1))[0]
    if len(rows_with_holes) == 0:
        return out
    Rz = (model.reference - model.means) / model.stds
    R2 = Rz**2
    k = min(model.k, len(model.reference))

    chunk = max(1, 2_000_000 // max(1, len(model.reference)))
    for start in range(0, len(rows_with_holes), chunk):
        rows = rows_with_holes[start : start + chunk]
        Xc = (X[rows] - model.means) / model.stds
        W = ~np.isnan(Xc)
        X0 = np.where(W, Xc, 0.0)
        d2 = (
            (X0**2).sum(axis=1, keepdims=True)
            - 2.0 * X0 @ Rz.T
            + W.astype(float) @ R2.T
        )
        neighbors = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for j, row in enumerate(rows):
            missing_cols = np.nonzero(holes[row])[0]
            ref_vals = model.reference[neighbors[j]][:, missing_cols]
            X[row, missing_cols] = ref_vals.mean(axis=0)
    out.frame.loc[:, cols] = X
    return out


@dataclass
class EncoderMap:
    """Per-hospital label encoders; code 0 is reserved for NA/unseen."""

    hospital_id: str
    mapping: dict[str, dict[str, int]]

    def encode_column(self, col: str, values: pd.Series) -> np.ndarray:
        m = self.mapping[col]
        return np.array([m.get(v, 0) for v in values], dtype=float)

    def decode(self, col: str, code: int) -> str:
        for value, c in self.mapping[col].items():
            if c == code:
                return value
        return NA_VALUE

    def to_dict(self) -> dict:
        return {"hospital_id": self.hospital_id, "mapping": self.mapping}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderMap":
        return cls(hospital_id=d["hospital_id"], mapping={
            c: dict(m) for c, m in d["mapping"].items()
        })


def fit_encoders(fm: FeatureMatrix, train_mask: np.ndarray | None = None) -> EncoderMap:
    mapping: dict[str, dict[str, int]] = {}
    rows = fm.frame if train_mask is None else fm.frame[train_mask]
    for col in fm.categorical:
        codes = {NA_VALUE: 0}
        for v in rows[col]:
            if v not in codes:
                codes[v] = len(codes)
        mapping[col] = codes
    return EncoderMap(hospital_id=fm.hospital_id, mapping=mapping)


def encode(enc: EncoderMap, fm: FeatureMatrix) -> FeatureMatrix:
    if enc.hospital_id != fm.hospital_id:
        raise ValueError(
            f"encoder fitted for hospital {enc.hospital_id!r} cannot apply to "
            f"{fm.hospital_id!r}: encoders are per-hospital"
        )
    out = fm.copy()
    for col in list(out.categorical):
        out.frame[col] = enc.encode_column(col, out.frame[col])
    out.categorical = []
    return out


def compute_derived(
    fm: FeatureMatrix,
    critical_ranges: dict[str, tuple[float, float]] | None = None,
) -> FeatureMatrix:
    """Lab deltas, normal-range indicators, range distances, and critical
    flags, computed on imputed values (indicators use pre-imputation
    missingness from the matrix mask)."""
    critical_ranges = critical_ranges or DEFAULT_CRITICAL_RANGES
    out = fm.copy()
    f = out.frame
    mask = out.missing_mask
    groups = feature_groups()
    pid = f.index.get_level_values("patient_id")

    for lab in LAB_NAMES:
        base = f"lab_{lab}"
        if base not in f.columns:
            continue
        values = f[base].to_numpy(dtype=float)
        lower = f[f"{base}_range_lower"].to_numpy(dtype=float)
        upper = f[f"{base}_range_upper"].to_numpy(dtype=float)
        delta = f[base].groupby(pid).diff().fillna(0.0).to_numpy()
        was_missing = (
            mask[base].to_numpy() if mask is not None and base in mask else np.zeros(len(f), bool)
        )
        ind = np.where(
            was_missing, 0.0, np.where((values >= lower) & (values <= upper), 1.0, 2.0)
        )
        dist = np.minimum(values - lower, 0.0) + np.maximum(values - upper, 0.0)
        f[f"{base}_delta"] = delta
        f[f"{base}_norm_ind"] = ind
        f[f"{base}_range_dist"] = dist
        for suffix in ("_delta", "_norm_ind", "_range_dist"):
            out.groups[f"{base}{suffix}"] = groups[f"{base}{suffix}"]

    for m in MEASUREMENT_NAMES:
        c = f"{m}_latest"
        if c not in f.columns or m not in critical_ranges:
            continue
        lo, hi = critical_ranges[m]
        values = f[c].to_numpy(dtype=float)
        was_missing = (
            mask[c].to_numpy() if mask is not None and c in mask else np.zeros(len(f), bool)
        )
        f[f"{m}_critical"] = np.where(
            was_missing, 0.0, ((values < lo) | (values > hi)).astype(float)
        )
        out.groups[f"{m}_critical"] = groups[f"{m}_critical"]
    return out


@dataclass
class FeaturePipeline:
    """Persisted per-hospital pipeline: rule-impute -> drop-sparse ->
    kNN-impute -> derive -> encode, fit on training rows only."""

    hospital_id: str
    modal_ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    dropped: list[str] = field(default_factory=list)
    imputer: ImputerModel | None = None
    encoders: EncoderMap | None = None
    feature_columns: list[str] = field(default_factory=list)
    critical_ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_CRITICAL_RANGES)
    )
    k: int = 10
    drop_threshold: float = 0.5
    fitted_on: str = ""

    @property
    def schema_hash(self) -> str:
        return _schema_hash(self.feature_columns)

    def fit_transform(self, raw: FeatureMatrix, train_mask: np.ndarray) -> FeatureMatrix:
        if raw.hospital_id != self.hospital_id:
            raise ValueError("pipeline hospital mismatch")
        ruled, self.modal_ranges = rule_impute(raw)
        ruled2, self.dropped = drop_sparse(ruled, train_mask, self.drop_threshold)
        self.imputer = fit_imputer(ruled2, train_mask, k=self.k, fitted_on=self.fitted_on)
        imputed = apply_imputer(self.imputer, ruled2)
        derived = compute_derived(imputed, self.critical_ranges)
        self.encoders = fit_encoders(derived, train_mask)
        encoded = encode(self.encoders, derived)
        self.feature_columns = list(encoded.frame.columns)
        return encoded

    def transform(self, raw: FeatureMatrix) -> FeatureMatrix:
        if self.imputer is None or self.encoders is None:
            raise ValueError("pipeline not fitted")
        ruled, _ = rule_impute(raw, self.modal_ranges)
        ruled2, _ = drop_sparse(ruled, dropped=self.dropped)
        imputed = apply_imputer(self.imputer, ruled2)
        derived = compute_derived(imputed, self.critical_ranges)
        encoded = encode(self.encoders, derived)
        if list(encoded.frame.columns) != self.feature_columns:
            raise ValueError("transformed columns do not match the fitted schema")
        return encoded

    def to_dict(self) -> dict:
        return {
            "version": PIPELINE_VERSION,
            "hospital_id": self.hospital_id,
            "k": self.k,
            "drop_threshold": self.drop_threshold,
            "fitted_on": self.fitted_on,
            "modal_ranges": {c: list(v) for c, v in self.modal_ranges.items()},
            "dropped": self.dropped,
            "imputer": None if self.imputer is None else self.imputer.to_dict(),
            "encoders": None if self.encoders is None else self.encoders.to_dict(),
            "feature_columns": self.feature_columns,
            "critical_ranges": {c: list(v) for c, v in self.critical_ranges.items()},
            "schema_hash": self.schema_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturePipeline":
        if d.get("version") != PIPELINE_VERSION:
            raise ValueError(f"unsupported pipeline version {d.get('version')!r}")
        pipe = cls(
            hospital_id=d["hospital_id"],
            k=d["k"],
            drop_threshold=d["drop_threshold"],
            fitted_on=d.get("fitted_on", ""),
            modal_ranges={c: tuple(v) for c, v in d["modal_ranges"].items()},
            dropped=list(d["dropped"]),
            imputer=None if d["imputer"] is None else ImputerModel.from_dict(d["imputer"]),
            encoders=None if d["encoders"] is None else EncoderMap.from_dict(d["encoders"]),
            feature_columns=list(d["feature_columns"]),
            critical_ranges={c: tuple(v) for c, v in d["critical_ranges"].items()},
        )
        return pipe

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FeaturePipeline":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
