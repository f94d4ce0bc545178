"""Hospital roster: profiles of the seven-network hospitals at desk scale,
plus per-hospital outcome-rate targets used by the synthetic generator."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class HospitalProfile:
    hospital_id: str
    bed_count: int
    has_icu: bool
    n_patients: int  # admissions to simulate
    department_names: tuple[str, ...] = ("MED", "SURG", "CARD", "TELE")
    service_names: tuple[str, ...] = (
        "Hospital Medicine",
        "Cardiology",
        "General Surgery",
        "Pulmonology",
        "Neurology",
    )
    icu_department: str | None = "ICU"

    def __post_init__(self):
        if self.bed_count < 1:
            raise ValueError("bed_count must be >= 1")
        if self.n_patients < 0:
            raise ValueError("n_patients must be >= 0")
        if not self.has_icu and self.icu_department is not None:
            object.__setattr__(self, "icu_department", None)


# department names housing intensive-care beds differ across the network
ICU_DEPARTMENT_NAMES = ("ICU", "CCU", "CRITICAL CARE", "MICU")


def default_roster() -> list[HospitalProfile]:
    """Seven hospitals, bed counts from the network's published statistics,
    admission volumes scaled to a ~50k patient-day desk run."""
    return [
        HospitalProfile("HA", bed_count=867, has_icu=True, n_patients=4300,
                        icu_department="ICU"),
        HospitalProfile("HB", bed_count=233, has_icu=True, n_patients=1250,
                        icu_department="CCU"),
        HospitalProfile("HC", bed_count=122, has_icu=True, n_patients=650,
                        icu_department="ICU"),
        HospitalProfile("HD", bed_count=446, has_icu=True, n_patients=1550,
                        icu_department="CRITICAL CARE"),
        HospitalProfile("HE", bed_count=156, has_icu=True, n_patients=980,
                        icu_department="ICU"),
        HospitalProfile("HF", bed_count=520, has_icu=True, n_patients=870,
                        icu_department="MICU"),
        HospitalProfile("HG", bed_count=130, has_icu=False, n_patients=380,
                        icu_department=None),
    ]


# Outcome-rate targets per hospital. Disposition shares are per admission;
# discharge and ICU rates are per patient-day.
DEFAULT_TARGETS: dict[str, dict[str, float]] = {
    "HA": {
        "mortality": 0.0563, "home_without_service": 0.5004, "with_service": 0.4433,
        "discharge_24": 0.1794, "discharge_48": 0.3295,
        "enter_icu_24": 0.0162, "enter_icu_48": 0.0278,
        "leave_icu_24": 0.8104, "leave_icu_48": 0.6989,
    },
    "HB": {
        "mortality": 0.0608, "home_without_service": 0.6044, "with_service": 0.3348,
        "discharge_24": 0.1981, "discharge_48": 0.3654,
        "enter_icu_24": 0.0093, "enter_icu_48": 0.0162,
        "leave_icu_24": 0.8334, "leave_icu_48": 0.7316,
    },
    "HC": {
        "mortality": 0.0747, "home_without_service": 0.4526, "with_service": 0.4727,
        "discharge_24": 0.2056, "discharge_48": 0.3760,
        "enter_icu_24": 0.0135, "enter_icu_48": 0.0252,
        "leave_icu_24": 0.8892, "leave_icu_48": 0.8060,
    },
    "HD": {
        "mortality": 0.0717, "home_without_service": 0.5016, "with_service": 0.4267,
        "discharge_24": 0.1861, "discharge_48": 0.3449,
        "enter_icu_24": 0.0153, "enter_icu_48": 0.0248,
        "leave_icu_24": 0.8406, "leave_icu_48": 0.7435,
    },
    "HE": {
        "mortality": 0.0631, "home_without_service": 0.5251, "with_service": 0.4118,
        "discharge_24": 0.2108, "discharge_48": 0.3805,
        "enter_icu_24": 0.0069, "enter_icu_48": 0.0123,
        "leave_icu_24": 0.8569, "leave_icu_48": 0.7640,
    },
    "HF": {
        "mortality": 0.0741, "home_without_service": 0.5208, "with_service": 0.4051,
        "discharge_24": 0.1744, "discharge_48": 0.3158,
        "enter_icu_24": 0.0090, "enter_icu_48": 0.0146,
        "leave_icu_24": 0.7741, "leave_icu_48": 0.6419,
    },
    "HG": {
        "mortality": 0.0512, "home_without_service": 0.6197, "with_service": 0.3291,
        "discharge_24": 0.2575, "discharge_48": 0.4612,
    },
}
