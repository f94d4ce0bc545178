"""Deterministic synthetic EMR extract generator.

A latent daily-acuity process drives every observable: labs and vitals
deviate from their normal ranges as acuity rises, ICU episodes open when it
spikes, discharge arrives as it falls, and the end-of-stay disposition,
readmission risk, and clinician expected-discharge dates all derive from it.
Survivor length of stay is calibrated by bisection so the observed 48-hr
discharge rate lands on the per-hospital target.

Output is one directory of 10 CSV extracts per (hospital, extract date),
plus a ``latent.csv`` ground-truth table per hospital used only by tests.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .extracts import (
    DATE_FORMAT,
    EXTRACT_SCHEMAS,
    LAB_NAMES,
    MEASUREMENT_NAMES,
    TIMESTAMP_FORMAT,
    bundle_dir,
)
from .hospitals import DEFAULT_TARGETS, HospitalProfile, default_roster

DAY = np.timedelta64(1, "D")

SPECIAL_DISPOSITION_STRINGS = (
    "Left Against Medical Advice/AMA",
    "Still a Patient",
    "Admitted as an Inpatient",
    "Court/Law Enforcement",
    "ED Dismiss/Diverted Elsewhere",
)

SPECIAL_RATE = 0.02
MISSING_DISPOSITION_RATE = 0.004

# lab name -> (low, high, direction, gain, [range string variants], daily draw prob)
LAB_SPECS = {
    "albumin": (3.5, 5.0, -1.0, 0.65, ["3.5 - 5.0", "3.4 - 5.0"], 0.60),
    "wbc": (4.5, 11.0, 1.0, 0.70, ["4.5 - 11.0", "4.0 - 11.0"], 0.75),
    "platelet": (150.0, 400.0, -1.0, 0.55, ["150 - 400", "140 - 400"], 0.70),
    "hemoglobin": (12.0, 17.5, -1.0, 0.50, ["12.0 - 17.5", "11.6 - 17.5"], 0.75),
    "sodium": (135.0, 145.0, 0.8, 0.55, ["135 - 145", "136 - 146"], 0.80),
    "creatinine": (0.6, 1.3, 1.0, 0.75, ["0.6 - 1.3", "0.5 - 1.2"], 0.75),
    "bilirubin": (0.0, 1.2, 1.0, 0.70, ["<1.2", "<1.0"], 0.55),
    # drawn rarely outside sepsis workups; sparse enough to be dropped
    "lactate": (0.0, 2.2, 1.0, 0.85, ["<2.2", "<2.0"], 0.035),
}

# measurement -> (baseline, acuity slope, noise sd, critical low, critical high)
MEASUREMENT_SPECS = {
    "heart_rate": (72.0, 48.0, 6.0, 40.0, 130.0),
    "respiratory_rate": (15.0, 12.0, 2.0, 8.0, 30.0),
    "temperature": (36.7, 1.8, 0.3, 35.0, 39.2),
    "spo2": (98.0, -12.0, 1.5, 90.0, 100.0),
    "o2_concentration": (21.0, 58.0, 5.0, 0.0, 70.0),
    "systolic_bp": (122.0, -28.0, 9.0, 85.0, 185.0),
    "rass": (0.0, 4.5, 0.9, -4.0, 3.0),
    "pain_score": (2.0, 7.0, 1.4, 0.0, 9.0),
    "inverse_flow": (1.2, 2.6, 0.25, 0.0, 3.2),
    "fall_risk_score": (22.0, 78.0, 9.0, 0.0, 95.0),
}

RASS_DESCRIPTIONS = {
    -5: "unarousable", -4: "deep sedation", -3: "moderate sedation",
    -2: "light sedation", -1: "drowsy", 0: "alert and calm",
    1: "restless", 2: "agitated", 3: "very agitated", 4: "combative",
}

PAIN_DESCRIPTIONS = {
    0: "no pain", 1: "minimal", 2: "mild", 3: "uncomfortable", 4: "moderate",
    5: "distracting", 6: "distressing", 7: "unmanageable", 8: "intense",
    9: "severe", 10: "hurts worst",
}

O2_DEVICES = ("Room Air", "Nasal Cannula", "High Flow", "Ventilator")

DIAGNOSES = (
    "Pneumonia", "Heart Failure", "Sepsis", "COPD Exacerbation", "Stroke",
    "GI Bleed", "Cellulitis", "Renal Failure", "Arrhythmia", "Hip Fracture",
)

SERVICE_DISPOSITIONS = (
    "Home with Health Care Services",
    "Skilled Nursing Facility",
    "Rehab Facility",
)


@dataclass
class GeneratorConfig:
    seed: int
    hospitals: list[HospitalProfile] = field(default_factory=default_roster)
    date_range: tuple[date, date] = (date(2023, 1, 2), date(2023, 6, 1))
    target_prevalences: dict = field(default_factory=lambda: dict(DEFAULT_TARGETS))
    doctor_noise: float = 7.8  # days of EDD error; ~0.644 doctor 48-hr AUC

    def __post_init__(self):
        start, end = self.date_range
        if start >= end:
            raise ValueError("date_range start must precede end")
        if not self.hospitals:
            raise ValueError("need at least one hospital")
        if self.doctor_noise < 0:
            raise ValueError("doctor_noise must be >= 0")
        for targets in self._all_targets().values():
            for task, p in targets.items():
                if not 0 < p < 1:
                    raise ValueError(f"target prevalence {task}={p} outside (0,1)")

    def _all_targets(self) -> dict[str, dict[str, float]]:
        """Normalize to {hospital_id: {task: rate}}."""
        if self.target_prevalences and all(
            isinstance(v, dict) for v in self.target_prevalences.values()
        ):
            out = {}
            for h in self.hospitals:
                out[h.hospital_id] = dict(
                    self.target_prevalences.get(
                        h.hospital_id, DEFAULT_TARGETS.get(h.hospital_id, DEFAULT_TARGETS["HA"])
                    )
                )
            return out
        return {h.hospital_id: dict(self.target_prevalences) for h in self.hospitals}

    def targets_for(self, hospital_id: str) -> dict[str, float]:
        return self._all_targets()[hospital_id]


def _hospital_rng(seed: int, hospital_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(hospital_id.encode("utf-8"))])
    )


def _ceil_to_midnight(ts: pd.Series) -> pd.Series:
    floor = ts.dt.normalize()
    return floor.where(ts == floor, floor + pd.Timedelta(days=1))


@dataclass
class _StayCohort:
    """All per-stay and per-day arrays for one hospital."""

    profile: HospitalProfile
    patient_id: np.ndarray
    admit: pd.Series
    discharge: pd.Series
    dispo_class: np.ndarray  # 0 expired/hospice, 1 home, 2 service, 3 special, 4 missing
    dispo_string: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    patient_type: np.ndarray
    department: np.ndarray
    unit: np.ndarray
    service: np.ndarray
    completed: np.ndarray  # discharge observed within the data window
    # per-day arrays
    stay_idx: np.ndarray
    day_idx: np.ndarray
    cut: pd.Series  # midnight of each record date
    acuity: np.ndarray
    in_icu_day: np.ndarray
    icu_entry: pd.Series  # per stay, NaT if none
    icu_exit: pd.Series
    readmit7: np.ndarray
    readmit30: np.ndarray


def _day_grid(cuts_per_stay: np.ndarray, first_cut: pd.Series):
    stay_idx = np.repeat(np.arange(len(cuts_per_stay)), cuts_per_stay)
    offsets = np.concatenate([[0], np.cumsum(cuts_per_stay)[:-1]])
    day_idx = np.arange(cuts_per_stay.sum()) - np.repeat(offsets, cuts_per_stay)
    cut = pd.Series(first_cut.to_numpy()[stay_idx] + day_idx * DAY)
    return stay_idx, day_idx, cut


def _count_cuts(admit: pd.Series, discharge: pd.Series, end_cut: pd.Timestamp) -> np.ndarray:
    """Number of midnight cuts in (admit, min(discharge, end_cut)]."""
    first = _ceil_to_midnight(admit)
    last = pd.Series(np.minimum(discharge.to_numpy(), end_cut.to_numpy()
                                if hasattr(end_cut, "to_numpy") else np.datetime64(end_cut))).dt.normalize()
    n = ((last - first) / DAY).astype(float) + 1
    return np.maximum(0, n.fillna(0).astype(int).to_numpy())


def _estimate_d48_rate(
    admit: pd.Series, alive_T: np.ndarray, scale: float, death_mask, special_mask,
    missing_mask, death_T: np.ndarray, end_cut: pd.Timestamp,
) -> float:
    """Observed 48-hr-discharge rate implied by a candidate LOS scale."""
    T = np.where(death_mask, death_T, alive_T * scale)
    T = np.maximum(T, 0.45)
    discharge = admit + pd.to_timedelta(T, unit="D")
    completed = (discharge < end_cut).to_numpy()
    cuts = _count_cuts(admit, discharge, end_cut)
    eligible = completed & ~missing_mask
    pos_mask = eligible & ~death_mask & ~special_mask
    positives = np.minimum(2, cuts[pos_mask]).sum()
    denom = cuts[eligible & ~special_mask].sum() + (
        cuts[eligible & special_mask] - np.minimum(2, cuts[eligible & special_mask])
    ).sum()
    return positives / denom if denom else 0.0


def _build_cohort(profile: HospitalProfile, targets, start, end, rng) -> _StayCohort:
    n = profile.n_patients
    start_ts = pd.Timestamp(start)
    end_cut = pd.Timestamp(end)  # last emitted extract cut
    horizon_days = (end_cut - start_ts).days

    ids = np.array([f"{profile.hospital_id}-P{i:05d}" for i in range(n)])
    admit_minutes = rng.uniform(2, (horizon_days - 1.0) * 1440, size=n)
    admit = start_ts + pd.to_timedelta(np.round(admit_minutes), unit="m")
    admit = pd.Series(admit)

    # outcomes
    death = rng.uniform(size=n) < targets["mortality"]
    u = rng.uniform(size=n)
    special = ~death & (u < SPECIAL_RATE)
    missing = ~death & ~special & (u < SPECIAL_RATE + MISSING_DISPOSITION_RATE)
    p_home = targets["home_without_service"] / (
        targets["home_without_service"] + targets["with_service"]
    )
    home = ~death & ~special & ~missing & (rng.uniform(size=n) < p_home)
    service = ~death & ~special & ~missing & ~home

    dispo_class = np.select([death, home, service, special], [0, 1, 2, 3], default=4)
    dispo_string = np.empty(n, dtype=object)
    dispo_string[death] = rng.choice(["Expired", "Hospice"], p=[0.6, 0.4], size=death.sum())
    dispo_string[home] = "Home"
    dispo_string[service] = rng.choice(SERVICE_DISPOSITIONS, size=service.sum())
    dispo_string[special] = rng.choice(SPECIAL_DISPOSITION_STRINGS, size=special.sum())
    dispo_string[missing] = ""

    # LOS: deaths drawn directly; survivor scale bisected onto the 48-hr target
    death_T = np.clip(rng.lognormal(np.log(6.2), 0.45, size=n), 1.6, 28.0)
    alive_T = rng.gamma(1.7, 1.0, size=n) + rng.uniform(0.55, 0.95, size=n)
    lo, hi = 0.25, 9.0
    for _ in range(45):
        mid = (lo + hi) / 2
        rate = _estimate_d48_rate(
            admit, alive_T, mid, death, special, missing, death_T, end_cut
        )
        if rate > targets["discharge_48"]:
            lo = mid
        else:
            hi = mid
    scale = (lo + hi) / 2
    T = np.where(death, death_T, alive_T * scale)
    T = np.maximum(T, 0.45)
    discharge = admit + pd.to_timedelta(np.round(T * 1440), unit="m")
    # keep discharges off the exact midnight cut boundary
    at_midnight = discharge == discharge.dt.normalize()
    discharge = discharge.where(~at_midnight, discharge + pd.Timedelta(minutes=7))
    completed = (discharge < end_cut).to_numpy()

    # demographics, correlated with outcome
    age = np.clip(
        np.select(
            [death, service],
            [rng.normal(77, 11, size=n), rng.normal(73, 12, size=n)],
            default=rng.normal(61, 16, size=n),
        ),
        18, 99,
    ).round()
    sex = rng.choice(["F", "M"], size=n)
    patient_type = rng.choice(
        ["Inpatient", "Inpatient Surgical", "Observation-Converted"], p=[0.78, 0.14, 0.08], size=n
    )
    department = rng.choice(profile.department_names, size=n)
    units_per_dept = max(1, profile.bed_count // (34 * len(profile.department_names)))
    unit_no = rng.integers(1, units_per_dept + 1, size=n)
    unit = np.array([f"{d} {k}" for d, k in zip(department, unit_no)])
    service_line = rng.choice(profile.service_names, size=n)

    # per-day grid
    cuts = _count_cuts(admit, discharge, end_cut)
    first_cut = _ceil_to_midnight(admit)
    stay_idx, day_idx, cut = _day_grid(cuts, first_cut)
    T_days = np.maximum(cuts, 1)

    # acuity path
    a0 = rng.normal(0.48, 0.09, size=n)
    a_end = np.select(
        [death, home, service],
        [rng.normal(0.93, 0.03, size=n), rng.normal(0.10, 0.04, size=n),
         rng.normal(0.22, 0.05, size=n)],
        default=rng.normal(0.30, 0.10, size=n),
    )
    expo = np.where(death, 1.5, 1.1)
    progress = (day_idx + 1) / T_days[stay_idx]
    acuity = a0[stay_idx] + (a_end[stay_idx] - a0[stay_idx]) * progress ** expo[stay_idx]
    acuity = acuity + rng.normal(0, 0.05, size=len(acuity))

    # ICU episodes
    in_icu_day = np.zeros(len(stay_idx), dtype=bool)
    icu_entry = pd.Series(pd.NaT, index=range(n), dtype="datetime64[ns]")
    icu_exit = pd.Series(pd.NaT, index=range(n), dtype="datetime64[ns]")
    if profile.has_icu:
        p_icu = np.where(death, 0.52, 0.055)
        k = rng.choice([1, 2, 3], p=[0.78, 0.16, 0.06], size=n)
        eligible = (cuts >= k + 1) & (rng.uniform(size=n) < p_icu)
        start_day = np.where(
            death,
            np.maximum(1, cuts - k),
            1 + (rng.uniform(size=n) * np.maximum(1, cuts - k - 1)).astype(int),
        )
        episode = (
            eligible[stay_idx]
            & (day_idx >= start_day[stay_idx])
            & (day_idx < (start_day + k)[stay_idx])
        )
        in_icu_day = episode
        acuity = np.where(episode, acuity + 0.22, acuity)
        # deterioration ramps up ahead of the transfer so entering the ICU
        # is foreseeable from the prior day's observables
        ramp1 = eligible[stay_idx] & (day_idx == start_day[stay_idx] - 1)
        ramp2 = eligible[stay_idx] & (day_idx == start_day[stay_idx] - 2)
        acuity = np.where(ramp1, acuity + 0.17, acuity)
        acuity = np.where(ramp2, acuity + 0.08, acuity)
        entry_offset = pd.to_timedelta(np.round(rng.uniform(2 * 60, 10 * 60, size=n)), unit="m")
        exit_offset = pd.to_timedelta(np.round(rng.uniform(6 * 60, 14 * 60, size=n)), unit="m")
        fc = first_cut.to_numpy()
        entries = pd.Series(fc + start_day * DAY) - entry_offset
        exits = pd.Series(fc + (start_day + k - 1) * DAY) + exit_offset
        entries = pd.Series(np.maximum(entries.to_numpy(), (admit + pd.Timedelta(minutes=30)).to_numpy()))
        exits = pd.Series(np.minimum(exits.to_numpy(), (discharge - pd.Timedelta(minutes=20)).to_numpy()))
        icu_entry = entries.where(eligible, pd.NaT)
        icu_exit = exits.where(eligible, pd.NaT)

    acuity = np.clip(acuity, 0.02, 0.98)

    # readmission hazard keys off acuity two days before discharge: sicker
    # near-discharge patients (the ones a green alert would not flag) carry
    # more readmission risk
    flag_day_acuity = np.full(n, np.nan)
    if len(stay_idx):
        ends = np.cumsum(cuts)
        has_days = cuts > 0
        flag_rows = ends[has_days] - 1 - np.minimum(2, cuts[has_days] - 1)
        flag_day_acuity[has_days] = acuity[flag_rows]
    a_flag = np.nan_to_num(flag_day_acuity, nan=0.3)
    base_readmit = np.clip(0.01 + 0.75 * np.maximum(0.0, a_flag - 0.04), 0.005, 0.9)
    can_readmit = completed & (dispo_class != 0) & (dispo_class != 3) & (dispo_class != 4)
    readmit30 = can_readmit & (rng.uniform(size=n) < base_readmit)
    p7_given_30 = np.clip(0.20 + 0.6 * a_flag, 0.05, 0.95)
    readmit7 = readmit30 & (rng.uniform(size=n) < p7_given_30)

    return _StayCohort(
        profile=profile, patient_id=ids, admit=admit, discharge=pd.Series(discharge),
        dispo_class=dispo_class, dispo_string=dispo_string, age=age, sex=sex,
        patient_type=patient_type, department=department, unit=unit, service=service_line,
        completed=completed, stay_idx=stay_idx, day_idx=day_idx, cut=cut,
        acuity=acuity, in_icu_day=in_icu_day, icu_entry=icu_entry, icu_exit=icu_exit,
        readmit7=readmit7, readmit30=readmit30,
    )


def generate_doctor_edd(
    trajectories: pd.DataFrame, doctor_noise: float, rng: np.random.Generator | None = None
) -> pd.DataFrame:
    """One expected-discharge-date row per inpatient-day.

    The EDD is the true discharge date perturbed by an integer-day noise term;
    zero noise reproduces the true discharge date exactly.
    """
    if doctor_noise < 0:
        raise ValueError("doctor_noise must be >= 0")
    if rng is None:
        rng = np.random.default_rng(0)
    true_date = pd.to_datetime(trajectories["true_discharge_time"]).dt.normalize()
    n = len(trajectories)
    offset = np.zeros(n)
    if doctor_noise > 0:
        offset = np.round(rng.normal(0.0, doctor_noise, size=n))
    edd = true_date + pd.to_timedelta(offset, unit="D")
    return pd.DataFrame(
        {
            "patient_id": trajectories["patient_id"].to_numpy(),
            "record_date": pd.to_datetime(trajectories["record_date"]).to_numpy(),
            "expected_discharge_date": edd.to_numpy(),
        }
    )


def _per_day_tables(c: _StayCohort, rng, doctor_noise: float) -> dict[int, pd.DataFrame]:
    """Build the long-form content of every extract from the cohort arrays."""
    si, a = c.stay_idx, c.acuity
    m = len(si)
    pid = c.patient_id[si]
    record_date = c.cut.dt.normalize()
    dev = a - 0.35  # deviation from a comfortable baseline

    # ---- extract 3: labs -------------------------------------------------
    lab_cols: dict[str, object] = {"patient_id": pid, "record_date": record_date}
    range_variant = {lab: rng.integers(0, 2, size=len(c.patient_id)) for lab in LAB_NAMES}
    range_never = {lab: rng.uniform(size=len(c.patient_id)) < 0.03 for lab in LAB_NAMES}
    for lab in LAB_NAMES:
        lo, hi, direction, gain, variants, p_measure = LAB_SPECS[lab]
        width = hi - lo if np.isfinite(hi - lo) and hi > lo else max(hi, 2.2)
        mid = (lo + hi) / 2 if lo > 0 or lab not in ("bilirubin", "lactate") else hi * 0.45
        p = np.where(c.day_idx == 0, min(0.95, p_measure + 0.3), p_measure)
        if lab == "lactate":
            p = np.where(a > 0.62, 0.5, p)  # drawn when patients look septic
        measured = rng.uniform(size=m) < p
        value = mid + direction * dev * gain * width + rng.normal(0, 0.13 * width, size=m)
        value = np.round(np.maximum(value, 0.01), 2)
        show_range = measured & (rng.uniform(size=m) < 0.9) & ~range_never[lab][si]
        strings = np.array(variants, dtype=object)[range_variant[lab][si]]
        lab_cols[lab] = np.where(measured, value, np.nan)
        lab_cols[f"{lab}_range"] = np.where(show_range, strings, "")
    t3 = pd.DataFrame(lab_cols)

    # ---- extract 4: clinical measurements --------------------------------
    meas_cols: dict[str, object] = {"patient_id": pid, "record_date": record_date}
    for name in MEASUREMENT_NAMES:
        base, slope, sd, crit_lo, crit_hi = MEASUREMENT_SPECS[name]
        mean_v = base + slope * dev + rng.normal(0, sd, size=m)
        latest = mean_v + rng.normal(0, sd * 0.4, size=m)
        max_v = np.maximum(latest, mean_v) + np.abs(rng.normal(0, sd * 0.5, size=m))
        p_measured = 0.95
        if name == "inverse_flow":
            measured = np.where(c.in_icu_day, rng.uniform(size=m) < 0.9,
                                rng.uniform(size=m) < 0.04)
        else:
            measured = rng.uniform(size=m) < p_measured
        if name == "rass":
            score = np.clip(np.round(latest), -5, 4).astype(int)
            latest_out = np.array(
                [f"{s} → {RASS_DESCRIPTIONS[int(s)]}" for s in score], dtype=object
            )
            mean_v, max_v = score + rng.normal(0, 0.3, size=m), score + 0.4
        elif name == "pain_score":
            score = np.clip(np.round(latest), 0, 10).astype(int)
            latest_out = np.array(
                [f"{s} → {PAIN_DESCRIPTIONS[int(s)]}" for s in score], dtype=object
            )
            mean_v, max_v = score + rng.normal(0, 0.4, size=m), score + 0.6
        if name in ("rass", "pain_score"):
            meas_cols[f"{name}_latest"] = np.where(measured, latest_out, "")
        else:
            meas_cols[f"{name}_latest"] = np.where(measured, np.round(latest, 1), np.nan)
        meas_cols[f"{name}_max_24h"] = np.where(measured, np.round(max_v, 1), np.nan)
        meas_cols[f"{name}_mean_24h"] = np.where(measured, np.round(mean_v, 1), np.nan)
    t4 = pd.DataFrame(meas_cols)

    # ---- surgery schedule (feeds extracts 5 and 9) ------------------------
    n = len(c.patient_id)
    cuts_per_stay = np.bincount(si, minlength=n)
    has_surgery = (rng.uniform(size=n) < 0.20) & (cuts_per_stay >= 2)
    sched_day = 1 + (rng.uniform(size=n) * np.minimum(np.maximum(cuts_per_stay - 1, 1), 6)).astype(int)
    sched_day = np.minimum(sched_day, np.maximum(cuts_per_stay - 1, 1))
    first_cut_np = _ceil_to_midnight(c.admit).to_numpy()
    surg_start = pd.Series(first_cut_np + sched_day * DAY) + pd.to_timedelta(
        np.round(rng.uniform(8 * 60, 14 * 60, size=n)), unit="m"
    )
    surg_minutes = np.round(rng.uniform(45, 240, size=n))
    surg_end = surg_start + pd.to_timedelta(surg_minutes, unit="m")
    procedure = rng.choice(
        ["Laparoscopic Cholecystectomy", "Hip Arthroplasty", "CABG", "Appendectomy", "PCI"],
        size=n,
    )

    # ---- extract 5: discharge preparation ---------------------------------
    edd = generate_doctor_edd(
        pd.DataFrame(
            {
                "patient_id": pid,
                "record_date": record_date,
                "true_discharge_time": c.discharge.to_numpy()[si],
            }
        ),
        doctor_noise,
        rng,
    )
    future_date = pd.Series(first_cut_np + sched_day * DAY).dt.normalize()
    pending_surgery = has_surgery[si] & (c.cut.to_numpy() <= surg_start.to_numpy()[si])
    npo = (rng.uniform(size=m) < 0.06 + 0.18 * a) | pending_surgery
    iv = rng.uniform(size=m) < 0.25 + 0.55 * a
    dialysis = rng.uniform(size=m) < 0.02 + 0.06 * a
    o2_idx = np.clip(((a - 0.30) * 5.2).astype(int), 0, 3)
    o2_idx = np.where(rng.uniform(size=m) < 0.9, o2_idx, 0)
    t5 = pd.DataFrame(
        {
            "patient_id": pid,
            "record_date": record_date,
            "discharge_time": pd.Series(pd.NaT, index=range(m), dtype="datetime64[ns]"),
            "expected_discharge_date": edd["expected_discharge_date"].to_numpy(),
            "future_surgery_date": pd.Series(
                np.where(pending_surgery, future_date.to_numpy()[si], np.datetime64("NaT"))
            ),
            "npo_status": np.where(npo, "Y", ""),
            "iv_status": np.where(iv, "Y", ""),
            "dialysis": np.where(dialysis, "Y", ""),
            "o2_device": np.array(O2_DEVICES, dtype=object)[o2_idx],
        }
    )

    # ---- extract 6: DNR ----------------------------------------------------
    dying = c.dispo_class[si] == 0
    progress = (c.day_idx + 1) / np.maximum(cuts_per_stay[si], 1)
    p_dnr = np.where(dying, 0.12 + 0.55 * progress, 0.035)
    dnr_raw = rng.uniform(size=m) < p_dnr
    dnr_frame = pd.DataFrame({"s": si, "v": dnr_raw})
    dnr_sticky = dnr_frame.groupby("s")["v"].cummax().to_numpy()
    t6 = pd.DataFrame(
        {
            "patient_id": pid,
            "record_date": record_date,
            "dnr_status": np.where(dnr_sticky, "DNR (DO NOT RESUSCITATE)", ""),
        }
    )

    # ---- extract 8: note stats ----------------------------------------------
    notes24 = rng.poisson(1.4 + 3.2 * a)
    t8 = pd.DataFrame(
        {
            "patient_id": pid,
            "record_date": record_date,
            "diagnosis": rng.choice(DIAGNOSES, size=n)[si],
            "notes_24h": notes24,
            "notes_total": pd.DataFrame({"s": si, "v": notes24}).groupby("s")["v"].cumsum().to_numpy(),
            "attending_count_24h": 1 + rng.poisson(0.35 + 1.3 * a),
        }
    )

    # ---- extract 10: order stats ----------------------------------------------
    orders24 = rng.poisson(2.2 + 6.5 * a)
    meds24 = rng.poisson(3.0 + 5.0 * a)
    t10 = pd.DataFrame(
        {
            "patient_id": pid,
            "record_date": record_date,
            "orders_24h": orders24,
            "orders_total": pd.DataFrame({"s": si, "v": orders24}).groupby("s")["v"].cumsum().to_numpy(),
            "medications_24h": meds24,
            "medications_total": pd.DataFrame({"s": si, "v": meds24}).groupby("s")["v"].cumsum().to_numpy(),
            "pending_labs": rng.poisson(0.6 + 2.6 * a),
            "pending_mri": (rng.uniform(size=m) < 0.04 + 0.15 * a).astype(int),
            "pending_ct": (rng.uniform(size=m) < 0.05 + 0.17 * a).astype(int),
            "pending_echo": (rng.uniform(size=m) < 0.03 + 0.12 * a).astype(int),
        }
    )

    # ---- extract 1: ADT events --------------------------------------------
    beds = rng.integers(1, 40, size=n)
    ev_frames = [
        pd.DataFrame(
            {
                "patient_id": c.patient_id,
                "event_time": c.admit,
                "event_type": "admission",
                "department": c.department,
                "unit": c.unit,
                "bed": [f"{u}-{b:02d}" for u, b in zip(c.unit, beds)],
            }
        )
    ]
    icu_mask = c.icu_entry.notna().to_numpy()
    if icu_mask.any():
        icu_dept = c.profile.icu_department or "ICU"
        ev_frames.append(
            pd.DataFrame(
                {
                    "patient_id": c.patient_id[icu_mask],
                    "event_time": c.icu_entry[icu_mask],
                    "event_type": "transfer",
                    "department": icu_dept,
                    "unit": f"{icu_dept} 1",
                    "bed": [f"{icu_dept}-{b:02d}" for b in beds[icu_mask]],
                }
            )
        )
        ev_frames.append(
            pd.DataFrame(
                {
                    "patient_id": c.patient_id[icu_mask],
                    "event_time": c.icu_exit[icu_mask],
                    "event_type": "transfer",
                    "department": c.department[icu_mask],
                    "unit": c.unit[icu_mask],
                    "bed": [f"{u}-{b:02d}" for u, b in zip(c.unit[icu_mask], beds[icu_mask])],
                }
            )
        )
    ev_frames.append(
        pd.DataFrame(
            {
                "patient_id": c.patient_id[c.completed],
                "event_time": c.discharge[c.completed],
                "event_type": "discharge",
                "department": c.department[c.completed],
                "unit": c.unit[c.completed],
                "bed": [f"{u}-{b:02d}" for u, b in zip(c.unit[c.completed], beds[c.completed])],
            }
        )
    )
    t1 = pd.concat(ev_frames, ignore_index=True)

    # ---- extract 2: ADT orders -----------------------------------------------
    # the admit order lands minutes after the arrival event so both always
    # fall in the same or a later extract window (census covers later ones)
    order_frames = [
        pd.DataFrame(
            {
                "patient_id": c.patient_id,
                "order_time": c.admit + pd.to_timedelta(np.round(rng.uniform(3, 25, size=n)), unit="m"),
                "order_type": "admit",
                "service": c.service,
                "level_of_care": "General",
            }
        )
    ]
    if icu_mask.any():
        order_frames.append(
            pd.DataFrame(
                {
                    "patient_id": c.patient_id[icu_mask],
                    "order_time": c.icu_entry[icu_mask] - pd.Timedelta(minutes=25),
                    "order_type": "transfer",
                    "service": c.service[icu_mask],
                    "level_of_care": "Intensive",
                }
            )
        )
        order_frames.append(
            pd.DataFrame(
                {
                    "patient_id": c.patient_id[icu_mask],
                    "order_time": c.icu_exit[icu_mask] - pd.Timedelta(minutes=20),
                    "order_type": "transfer",
                    "service": c.service[icu_mask],
                    "level_of_care": "General",
                }
            )
        )
    order_frames.append(
        pd.DataFrame(
            {
                "patient_id": c.patient_id[c.completed],
                "order_time": c.discharge[c.completed]
                - pd.to_timedelta(np.round(rng.uniform(40, 240, size=int(c.completed.sum()))), unit="m"),
                "order_type": "discharge",
                "service": c.service[c.completed],
                "level_of_care": "General",
            }
        )
    )
    t2 = pd.concat(order_frames, ignore_index=True)

    # ---- extract 9: surgery cases ---------------------------------------------
    done = has_surgery & (surg_end.to_numpy() < c.discharge.to_numpy())
    t9 = pd.DataFrame(
        {
            "patient_id": c.patient_id[done],
            "procedure_name": procedure[done],
            "start_time": surg_start[done],
            "end_time": surg_end[done],
        }
    )

    # ---- extract 7: patient info (census rows; exit rows added later) -------
    prev_gap_days = rng.exponential(90, size=n)
    has_prev = rng.uniform(size=n) < 0.32
    prev_dis = c.admit - pd.to_timedelta(np.round(prev_gap_days * 1440), unit="m")
    prev_los = np.round(rng.lognormal(np.log(4.5), 0.5, size=n), 2)
    t7_per_stay = pd.DataFrame(
        {
            "patient_id": c.patient_id,
            "age": c.age,
            "sex": c.sex,
            "patient_type": c.patient_type,
            "admission_time": c.admit,
            "discharge_disposition": "",
            "previous_discharge_time": prev_dis.where(has_prev, pd.NaT),
            "previous_los": np.where(has_prev, prev_los, np.nan),
        }
    )

    return {1: t1, 2: t2, 3: t3, 4: t4, 5: t5, 6: t6, 7: t7_per_stay, 8: t8, 9: t9, 10: t10}


_FORMATTERS = {
    "datetime": lambda v: "" if pd.isna(v) else pd.Timestamp(v).strftime(TIMESTAMP_FORMAT),
    "date": lambda v: "" if pd.isna(v) else pd.Timestamp(v).strftime(DATE_FORMAT),
    "float": lambda v: "" if (v is None or (isinstance(v, float) and np.isnan(v))) else (
        str(int(v)) if float(v) == int(v) else f"{float(v):g}"
    ),
    "str": lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else str(v),
    "range": lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else str(v),
    "scored": lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else str(v),
}


def _write_csv(path: Path, schema, table: pd.DataFrame) -> None:
    cols = schema.column_names
    lines = [",".join(cols)]
    if len(table):
        rendered = []
        for col, kind in schema.columns:
            fmt = _FORMATTERS[kind]
            rendered.append([fmt(v) for v in table[col].tolist()])
        for row in zip(*rendered):
            cells = []
            for cell in row:
                if "," in cell or '"' in cell:
                    cell = '"' + cell.replace('"', '""') + '"'
                cells.append(cell)
            lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class GenerationResult:
    root: Path
    hospitals: list[str]
    extract_dates: list[date]
    latent: dict[str, pd.DataFrame]
    rows_written: dict[str, int]


def _latent_frame(c: _StayCohort) -> pd.DataFrame:
    n = len(c.patient_id)
    class_names = np.array(
        ["expired_or_hospice", "home_without_service", "with_service", "", ""], dtype=object
    )
    dispo = class_names[c.dispo_class].copy()
    special_mask = c.dispo_class == 3
    dispo[special_mask] = [f"special:{s}" for s in c.dispo_string[special_mask]]
    dispo[c.dispo_class == 4] = "missing"

    acuity_str = np.empty(n, dtype=object)
    acuity_str[:] = ""
    if len(c.stay_idx):
        df = pd.DataFrame({"s": c.stay_idx, "a": np.round(c.acuity, 4).astype(str)})
        joined = df.groupby("s")["a"].agg("|".join)
        acuity_str[joined.index.to_numpy()] = joined.to_numpy()

    icu_str = np.empty(n, dtype=object)
    icu_str[:] = ""
    has_icu = c.icu_entry.notna().to_numpy()
    for i in np.nonzero(has_icu)[0]:
        icu_str[i] = (
            c.icu_entry.iloc[i].strftime(TIMESTAMP_FORMAT)
            + "~"
            + c.icu_exit.iloc[i].strftime(TIMESTAMP_FORMAT)
        )

    return pd.DataFrame(
        {
            "patient_id": c.patient_id,
            "admission_time": c.admit.dt.strftime(TIMESTAMP_FORMAT),
            "true_discharge_time": c.discharge.dt.strftime(TIMESTAMP_FORMAT),
            "disposition": dispo,
            "completed": c.completed.astype(int),
            "daily_acuity": acuity_str,
            "icu_intervals": icu_str,
            "readmission_within_7d": c.readmit7.astype(int),
            "readmission_within_30d": c.readmit30.astype(int),
        }
    )


def generate(config: GeneratorConfig, root: str | Path) -> GenerationResult:
    """Generate extract bundles for every (hospital, date) plus latent truth.

    Identical configs produce byte-identical output; hospitals draw from
    independent RNG streams derived from (seed, hospital_id).
    """
    root = Path(root)
    start, end = config.date_range
    extract_dates = [start + timedelta(days=i) for i in range((end - start).days + 1)]
    latent: dict[str, pd.DataFrame] = {}
    rows_written: dict[str, int] = {}

    for profile in config.hospitals:
        rng = _hospital_rng(config.seed, profile.hospital_id)
        targets = config.targets_for(profile.hospital_id)
        if profile.n_patients == 0:
            tables = {
                n: pd.DataFrame(columns=EXTRACT_SCHEMAS[n].column_names)
                for n in EXTRACT_SCHEMAS
            }
            cohort = None
        else:
            cohort = _build_cohort(profile, targets, start, end, rng)
            tables = _per_day_tables(cohort, rng, config.doctor_noise)

        # split tables into per-extract-date bundles
        by_date: dict[date, dict[int, pd.DataFrame]] = {
            d: {} for d in extract_dates
        }
        total_rows = 0
        for number, table in tables.items():
            schema = EXTRACT_SCHEMAS[number]
            if table.empty:
                for d in extract_dates:
                    by_date[d][number] = table
                continue
            if number in (1, 2, 9):
                time_col = {1: "event_time", 2: "order_time", 9: "end_time"}[number]
                bundle_day = pd.to_datetime(table[time_col]).dt.normalize() + pd.Timedelta(days=1)
            elif number == 7:
                bundle_day = None  # handled below
            else:
                bundle_day = pd.to_datetime(table["record_date"])

            if number == 7 and cohort is not None:
                # census row each day the patient is in, exit row the day after
                census_days = cohort.cut.dt.normalize()
                census = table.iloc[cohort.stay_idx].copy()
                census["bundle_day"] = census_days.to_numpy()
                exits = table[cohort.completed].copy()
                exits["discharge_disposition"] = cohort.dispo_string[cohort.completed]
                exits["bundle_day"] = (
                    pd.to_datetime(cohort.discharge[cohort.completed]).dt.normalize()
                    + pd.Timedelta(days=1)
                ).to_numpy()
                merged = pd.concat([census, exits], ignore_index=True)
                merged = merged[merged["bundle_day"].isin(pd.to_datetime(extract_dates))]
                for d, group in merged.groupby(merged["bundle_day"].dt.date):
                    by_date[d][number] = group.drop(columns=["bundle_day"])
                total_rows += len(merged)
                continue

            keep = bundle_day.isin(pd.to_datetime(extract_dates))
            kept = table[keep]
            total_rows += len(kept)
            for d, group in kept.groupby(bundle_day[keep].dt.date):
                by_date[d][number] = group

        # exit discharge rows for table 5 (discharge_time filled)
        if cohort is not None and cohort.completed.any():
            exits5 = pd.DataFrame(
                {
                    "patient_id": cohort.patient_id[cohort.completed],
                    "record_date": (
                        pd.to_datetime(cohort.discharge[cohort.completed]).dt.normalize()
                        + pd.Timedelta(days=1)
                    ).to_numpy(),
                    "discharge_time": cohort.discharge[cohort.completed].to_numpy(),
                    "expected_discharge_date": pd.NaT,
                    "future_surgery_date": pd.NaT,
                    "npo_status": "",
                    "iv_status": "",
                    "dialysis": "",
                    "o2_device": "",
                }
            )
            exits5 = exits5[exits5["record_date"].isin(pd.to_datetime(extract_dates))]
            for d, group in exits5.groupby(exits5["record_date"].dt.date):
                existing = by_date[d].get(5)
                by_date[d][5] = (
                    pd.concat([existing, group], ignore_index=True)
                    if existing is not None
                    else group
                )
            total_rows += len(exits5)

        for d in extract_dates:
            directory = bundle_dir(root, profile.hospital_id, d)
            directory.mkdir(parents=True, exist_ok=True)
            for number, schema in EXTRACT_SCHEMAS.items():
                table = by_date[d].get(number)
                if table is None:
                    table = pd.DataFrame(columns=schema.column_names)
                if number in (1, 2, 9):
                    sort_cols = [schema.columns[1][0], "patient_id"]
                elif number == 7:
                    sort_cols = ["patient_id"]
                else:
                    sort_cols = ["patient_id"]
                if len(table):
                    table = table.sort_values(sort_cols, kind="stable")
                _write_csv(directory / schema.filename, schema, table)

        lf = (
            _latent_frame(cohort)
            if cohort is not None
            else pd.DataFrame(
                columns=[
                    "patient_id", "admission_time", "true_discharge_time", "disposition",
                    "completed", "daily_acuity", "icu_intervals",
                    "readmission_within_7d", "readmission_within_30d",
                ]
            )
        )
        (root / profile.hospital_id).mkdir(parents=True, exist_ok=True)
        lf.to_csv(root / profile.hospital_id / "latent.csv", index=False, lineterminator="\n")
        latent[profile.hospital_id] = lf
        rows_written[profile.hospital_id] = total_rows

    return GenerationResult(
        root=root,
        hospitals=[h.hospital_id for h in config.hospitals],
        extract_dates=extract_dates,
        latent=latent,
        rows_written=rows_written,
    )
