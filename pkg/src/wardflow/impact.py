"""Length-of-stay impact estimation and financial projections.

Difference-in-differences over treatment/control unit groups, plus the
downstream projections of cost savings and contribution-margin uplift
from a LOS reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

EXCLUDED_EXIT_STATUSES = {"expired", "hospice"}

# Staggered rollout of the tool across eligible medicine/cardiology units.
# Units with a start date form the treatment group of the LOS analysis;
# units still pending (start None) form the control group.
ROLLOUT_UNITS: tuple[tuple[str, str, str | None, str, int], ...] = (
    ("HA", "HA CONKLIN 2", None, "Medicine/Oncology", 27),
    ("HA", "HA CONKLIN 4", "2022-09-13", "Medicine", 25),
    ("HA", "HA CONKLIN 5", "2022-07-11", "Medicine", 47),
    ("HA", "HA BLISS 7 EAST", "2022-08-23", "Medicine", 17),
    ("HA", "HA BLISS 10 EAST", None, "Cardiology", 14),
    ("HA", "HA CENTER 10", None, "Cardiology", 26),
    ("HA", "HA CENTER 12", "2022-07-11", "Medicine", 26),
    ("HA", "HA NORTH 10", None, "Cardiology", 27),
    ("HA", "HA NORTH 12", "2022-07-11", "Medicine", 20),
    ("HB", "HB A3 MEDSURG", "2022-08-23", "Medicine/Surgical", 30),
    ("HB", "HB E4 Cardiology", "2022-08-23", "Cardiology", 28),
    ("HC", "HC FOURTH FLOOR", "2022-08-23", "Medicine/Surgical", 28),
    ("HC", "HC FIFTH FLOOR", "2022-08-23", "Medicine/Surgical", 29),
    ("HD", "HD EAST 2", None, "Medicine/Observation", 12),
    ("HD", "HD WEST 2", None, "Medicine", 15),
    ("HD", "HD NORTH 3", "2023-01-15", "Medicine", 24),
    ("HD", "HD NORTH 4", "2022-10-22", "Medicine/Cardiology", 28),
    ("HD", "HD NORTH 5", "2022-08-23", "Medicine/Stroke", 30),
    ("HE", "HE PAVILION D", None, "Medicine", 28),
    ("HE", "HE PAVILION E", "2023-01-15", "Medicine", 28),
    ("HF", "HF 6 NORTH", None, "Cardiology", 20),
    ("HF", "HF 6 SOUTH", None, "Cardiology", 20),
    ("HF", "HF 9 NORTH", None, "Medicine", 22),
    ("HF", "HF 10 NORTH", None, "Medicine", 29),
    ("HG", "HG 4 SHEA EAST", "2023-01-15", "Medicine/Surgical", 30),
    ("HG", "HG 4 SHEA NORTH", "2023-01-15", "Medicine/Surgical", 12),
    ("HG", "HG GREER", None, "Medicine/Surgical", 23),
)


def rollout_unit_groups() -> tuple[set[str], set[str]]:
    """(treatment units, control units) from the rollout table."""
    treatment = {unit for _, unit, start, _, _ in ROLLOUT_UNITS if start is not None}
    control = {unit for _, unit, start, _, _ in ROLLOUT_UNITS if start is None}
    return treatment, control


@dataclass
class DidInput:
    """Group mean LOS (days) per period for the two-group DiD estimator."""

    control_means: list[float]
    treatment_means: list[float]
    periods: list[str | int]
    baseline_period: int = 0
    treatment_period: int = -1

    def __post_init__(self):
        if len(self.control_means) != len(self.treatment_means):
            raise ValueError("control and treatment series must align")
        if len(self.control_means) != len(self.periods):
            raise ValueError("period labels must align with the series")
        n = len(self.periods)
        self.baseline_period %= n
        self.treatment_period %= n
        if self.baseline_period >= self.treatment_period:
            raise ValueError("baseline period must precede treatment period")
        if any(m <= 0 for m in self.control_means + self.treatment_means):
            raise ValueError("group mean LOS must be positive")


@dataclass
class DidResult:
    effect_days: float
    counterfactual: list[float]
    actual_treatment: list[float]
    control: list[float]
    periods: list[str | int]


def did_estimate(inp: DidInput) -> DidResult:
    """Two-group/two-period difference-in-differences on group means.

    The counterfactual treatment series shifts the treatment baseline by the
    control group's change; the effect is counterfactual minus actual at the
    treatment period.
    """
    b, t = inp.baseline_period, inp.treatment_period
    counterfactual = [
        inp.treatment_means[b] + (inp.control_means[i] - inp.control_means[b])
        for i in range(len(inp.periods))
    ]
    effect = counterfactual[t] - inp.treatment_means[t]
    return DidResult(
        effect_days=effect,
        counterfactual=counterfactual,
        actual_treatment=list(inp.treatment_means),
        control=list(inp.control_means),
        periods=list(inp.periods),
    )


def stay_los_days(admission_time: pd.Series, discharge_time: pd.Series) -> pd.Series:
    """LOS in fractional days from admission-order time to discharge time."""
    return (discharge_time - admission_time).dt.total_seconds() / 86400.0


def did_from_microdata(
    stays: pd.DataFrame,
    treatment_units: set[str],
    control_units: set[str],
    period_ranges: dict[str | int, tuple[str, str]],
    baseline_period: int = 0,
    treatment_period: int = -1,
) -> DidResult:
    """Patient-level DiD variant: mean LOS per (group, period) from stay rows.

    Expects columns: unit, admission_time, discharge_time, disposition.
    Stays whose exit status is expired or hospice are excluded, as are stays
    with admission recorded after discharge. Patients are assigned to the
    unit and period of their discharge.
    """
    df = stays.copy()
    df["admission_time"] = pd.to_datetime(df["admission_time"])
    df["discharge_time"] = pd.to_datetime(df["discharge_time"])
    dispo = df["disposition"].fillna("").str.strip().str.lower()
    df = df[~dispo.isin(EXCLUDED_EXIT_STATUSES)]
    df = df[df["admission_time"] <= df["discharge_time"]]
    df["los"] = stay_los_days(df["admission_time"], df["discharge_time"])

    periods = list(period_ranges)
    control_means, treatment_means = [], []
    for p in periods:
        lo, hi = (pd.Timestamp(x) for x in period_ranges[p])
        in_period = df[(df["discharge_time"] >= lo) & (df["discharge_time"] < hi)]
        ctrl = in_period[in_period["unit"].isin(control_units)]["los"]
        trt = in_period[in_period["unit"].isin(treatment_units)]["los"]
        if ctrl.empty or trt.empty:
            raise ValueError(f"period {p!r} has an empty group")
        control_means.append(float(ctrl.mean()))
        treatment_means.append(float(trt.mean()))
    return did_estimate(
        DidInput(
            control_means=control_means,
            treatment_means=treatment_means,
            periods=periods,
            baseline_period=baseline_period,
            treatment_period=treatment_period,
        )
    )


@dataclass
class FinancialInput:
    """Inputs for the annual financial projection of a LOS reduction."""

    los_reduction_days: float
    patients_per_year: float
    avg_new_los_days: float
    cost_per_patient_day: float
    cm_per_patient: float

    def __post_init__(self):
        for name in (
            "los_reduction_days",
            "patients_per_year",
            "avg_new_los_days",
            "cost_per_patient_day",
            "cm_per_patient",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.avg_new_los_days == 0:
            raise ValueError("avg_new_los_days must be positive")


def project_financials(inp: FinancialInput) -> dict[str, float]:
    """Patient days saved and the no-backfill / full-backfill benefit scenarios."""
    patient_days_saved = inp.los_reduction_days * inp.patients_per_year
    cost_saving_per_patient = inp.los_reduction_days * inp.cost_per_patient_day
    total_cost_saving = inp.patients_per_year * cost_saving_per_patient
    additional_patients = patient_days_saved / inp.avg_new_los_days
    total_cm_increase = additional_patients * inp.cm_per_patient
    return {
        "patient_days_saved": patient_days_saved,
        "cost_saving_per_patient": cost_saving_per_patient,
        "total_cost_saving": total_cost_saving,
        "additional_patients": additional_patients,
        "total_cm_increase": total_cm_increase,
    }


@dataclass
class PilotInput:
    """Inputs for the single-site pilot before/after benefit estimate.

    ``patients_divisor`` is the LOS figure used to convert saved patient days
    into additional patients. The published estimate is only consistent with
    a divisor of 5.885, not with the before-period LOS itself; both choices
    are therefore accepted here and the literal one is flagged in the result.
    """

    n_patients: int
    los_before: float
    los_after: float
    cm_per_patient: float
    patients_divisor: float
    quarters_per_year: int = 4

    def __post_init__(self):
        if self.n_patients < 0:
            raise ValueError("n_patients must be non-negative")
        if self.patients_divisor == 0:
            raise ValueError("patients_divisor must be nonzero")


def pilot_estimate(inp: PilotInput) -> dict[str, float | str]:
    quarter_days_saved = inp.n_patients * (inp.los_before - inp.los_after)
    annual_days_saved = quarter_days_saved * inp.quarters_per_year
    additional_patients = annual_days_saved / inp.patients_divisor
    annual_cm_increase = additional_patients * inp.cm_per_patient
    result: dict[str, float | str] = {
        "quarter_days_saved": quarter_days_saved,
        "annual_days_saved": annual_days_saved,
        "additional_patients": additional_patients,
        "annual_cm_increase": annual_cm_increase,
        "divisor": inp.patients_divisor,
    }
    if inp.patients_divisor == inp.los_before:
        result["note"] = "literal-formula divisor (before-period LOS)"
    return result


@dataclass
class ImpactReport:
    """Combined DiD + projection bundle emitted by the impact CLI."""

    did: DidResult
    financials: dict[str, float]
    pilot: dict[str, float | str] | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "did": {
                "effect_days": self.did.effect_days,
                "periods": self.did.periods,
                "control": self.did.control,
                "treatment": self.did.actual_treatment,
                "counterfactual": self.did.counterfactual,
            },
            "financials": self.financials,
            "notes": self.notes,
        }
        if self.pilot is not None:
            out["pilot"] = self.pilot
        return out

    def to_table(self) -> str:
        lines = ["LOS impact report", "=" * 40]
        lines.append(f"DiD effect (days): {self.did.effect_days:.2f}")
        for p, c, t, cf in zip(
            self.did.periods, self.did.control, self.did.actual_treatment, self.did.counterfactual
        ):
            lines.append(f"  {p}: control {c:.2f}  treatment {t:.2f}  counterfactual {cf:.2f}")
        lines.append("-" * 40)
        f = self.financials
        lines.append(f"Patient days saved:       {f['patient_days_saved']:,.2f}")
        lines.append(f"Cost saving per patient:  ${f['cost_saving_per_patient']:,.2f}")
        lines.append(f"Total cost saving:        ${f['total_cost_saving']:,.2f}")
        lines.append(f"Additional patients:      {f['additional_patients']:,.2f}")
        lines.append(f"Total CM increase:        ${f['total_cm_increase']:,.2f}")
        if self.pilot is not None:
            p = self.pilot
            lines.append("-" * 40)
            lines.append(f"Pilot quarter days saved: {p['quarter_days_saved']:,.2f}")
            lines.append(f"Pilot annual days saved:  {p['annual_days_saved']:,.2f}")
            lines.append(f"Pilot additional patients: {p['additional_patients']:,.2f}")
            lines.append(f"Pilot annual CM increase: ${p['annual_cm_increase']:,.2f}")
        return "\n".join(lines)
