import numpy as np
import pandas as pd
import pytest

from wardflow.impact import (
    ROLLOUT_UNITS,
    DidInput,
    FinancialInput,
    PilotInput,
    did_estimate,
    did_from_microdata,
    pilot_estimate,
    project_financials,
    rollout_unit_groups,
)


class TestDidEstimate:
    def test_published_series(self):
        res = did_estimate(
            DidInput(
                control_means=[4.96, 5.4, 5.85],
                treatment_means=[4.76, 5.1, 4.98],
                periods=[2021, 2022, 2023],
                baseline_period=0,
                treatment_period=2,
            )
        )
        assert res.counterfactual[2] == pytest.approx(5.65, abs=1e-12)
        assert res.effect_days == pytest.approx(0.67, abs=1e-12)

    def test_identical_series_zero_effect(self):
        res = did_estimate(
            DidInput(
                control_means=[5.0, 5.5],
                treatment_means=[5.0, 5.5],
                periods=[1, 2],
            )
        )
        assert res.effect_days == pytest.approx(0.0, abs=1e-12)

    def test_flat_control_drop_treatment(self):
        res = did_estimate(
            DidInput(
                control_means=[5.0, 5.0],
                treatment_means=[5.0, 4.5],
                periods=[1, 2],
            )
        )
        assert res.effect_days == pytest.approx(0.5, abs=1e-12)

    def test_shift_invariance(self):
        base = DidInput(
            control_means=[4.0, 4.5, 5.0],
            treatment_means=[3.5, 4.0, 3.8],
            periods=[1, 2, 3],
        )
        shifted = DidInput(
            control_means=[6.0, 6.5, 7.0],
            treatment_means=[5.5, 6.0, 5.8],
            periods=[1, 2, 3],
        )
        assert did_estimate(base).effect_days == pytest.approx(
            did_estimate(shifted).effect_days, abs=1e-12
        )

    def test_baseline_after_treatment_rejected(self):
        with pytest.raises(ValueError):
            DidInput(
                control_means=[1.0, 2.0],
                treatment_means=[1.0, 2.0],
                periods=[1, 2],
                baseline_period=1,
                treatment_period=0,
            )


class TestMicrodataDid:
    def test_excludes_expired_and_inverted_stays(self):
        treatment_units, control_units = rollout_unit_groups()
        t_unit, c_unit = "HA CONKLIN 5", "HG GREER"
        assert t_unit in treatment_units and c_unit in control_units
        rows = []
        # two periods, one treatment unit, one control unit, 3 clean stays each
        for period, (t_los, c_los) in enumerate([(4.0, 4.0), (3.0, 5.0)]):
            year = 2022 + period
            for i in range(3):
                rows.append(
                    {
                        "unit": t_unit,
                        "admission_time": f"{year}-02-01T08:00",
                        "discharge_time": pd.Timestamp(f"{year}-02-01T08:00")
                        + pd.Timedelta(days=t_los),
                        "disposition": "Home",
                    }
                )
                rows.append(
                    {
                        "unit": c_unit,
                        "admission_time": f"{year}-02-01T08:00",
                        "discharge_time": pd.Timestamp(f"{year}-02-01T08:00")
                        + pd.Timedelta(days=c_los),
                        "disposition": "Home",
                    }
                )
            # noise rows that the filters must drop
            rows.append(
                {
                    "unit": t_unit,
                    "admission_time": f"{year}-02-10T08:00",
                    "discharge_time": f"{year}-02-28T08:00",
                    "disposition": "Expired",
                }
            )
            rows.append(
                {
                    "unit": t_unit,
                    "admission_time": f"{year}-02-20T08:00",
                    "discharge_time": f"{year}-02-10T08:00",
                    "disposition": "Home",
                }
            )
        stays = pd.DataFrame(rows)
        res = did_from_microdata(
            stays,
            treatment_units=treatment_units,
            control_units=control_units,
            period_ranges={2022: ("2022-01-15", "2022-04-15"), 2023: ("2023-01-15", "2023-04-15")},
        )
        # counterfactual 4.0 + (5.0 - 4.0) = 5.0; actual 3.0
        assert res.effect_days == pytest.approx(2.0, abs=1e-9)


class TestRolloutUnits:
    def test_fifteen_treatment_twelve_control(self):
        treatment, control = rollout_unit_groups()
        assert len(treatment) == 15
        assert len(control) == 12
        assert treatment.isdisjoint(control)
        assert len(ROLLOUT_UNITS) == 27

    def test_known_memberships(self):
        treatment, control = rollout_unit_groups()
        assert "HA CONKLIN 5" in treatment
        assert "HA BLISS 7 EAST" in treatment
        assert "HG GREER" in control
        assert "HF 6 NORTH" in control

    def test_start_dates_within_rollout_window(self):
        starts = [s for _, _, s, _, _ in ROLLOUT_UNITS if s is not None]
        assert min(starts) == "2022-07-11"
        assert max(starts) == "2023-01-15"


class TestProjectFinancials:
    def test_published_table(self):
        out = project_financials(
            FinancialInput(
                los_reduction_days=0.67,
                patients_per_year=49424,
                avg_new_los_days=4.98,
                cost_per_patient_day=1661,
                cm_per_patient=10796,
            )
        )
        assert out["patient_days_saved"] == pytest.approx(33114.08, abs=1e-6)
        assert out["cost_saving_per_patient"] == pytest.approx(1112.87, abs=1e-6)
        assert out["total_cost_saving"] == pytest.approx(55002486.88, abs=0.01)
        assert out["additional_patients"] == pytest.approx(6649.41, abs=0.005)
        assert out["total_cm_increase"] == pytest.approx(71787030.36, rel=1e-3)

    def test_zero_reduction(self):
        out = project_financials(
            FinancialInput(
                los_reduction_days=0.0,
                patients_per_year=100,
                avg_new_los_days=5.0,
                cost_per_patient_day=1000,
                cm_per_patient=10000,
            )
        )
        assert all(v == 0 for v in out.values())

    def test_unit_case(self):
        out = project_financials(
            FinancialInput(
                los_reduction_days=1.0,
                patients_per_year=1,
                avg_new_los_days=5.0,
                cost_per_patient_day=1.0,
                cm_per_patient=1.0,
            )
        )
        assert out["total_cost_saving"] == pytest.approx(1.0, abs=1e-12)

    def test_homogeneous_in_patients(self):
        kw = dict(
            los_reduction_days=0.5,
            avg_new_los_days=5.0,
            cost_per_patient_day=1500,
            cm_per_patient=9000,
        )
        one = project_financials(FinancialInput(patients_per_year=1000, **kw))
        three = project_financials(FinancialInput(patients_per_year=3000, **kw))
        for key in ("patient_days_saved", "total_cost_saving", "additional_patients", "total_cm_increase"):
            assert three[key] == pytest.approx(3 * one[key], rel=1e-12)


class TestPilotEstimate:
    def test_published_values_with_calibrated_divisor(self):
        out = pilot_estimate(
            PilotInput(
                n_patients=277,
                los_before=5.84,
                los_after=5.49,
                cm_per_patient=10796,
                patients_divisor=5.885,
            )
        )
        assert out["quarter_days_saved"] == pytest.approx(96.95, abs=1e-9)
        assert out["annual_days_saved"] == pytest.approx(387.80, abs=1e-9)
        assert out["annual_cm_increase"] == pytest.approx(711348.44, rel=1e-3)

    def test_literal_formula_divisor_flagged(self):
        out = pilot_estimate(
            PilotInput(
                n_patients=277,
                los_before=5.84,
                los_after=5.49,
                cm_per_patient=10796,
                patients_divisor=5.84,
            )
        )
        assert out["additional_patients"] == pytest.approx(66.40, abs=0.005)
        assert "literal-formula" in out["note"]

    def test_no_change_all_zero(self):
        out = pilot_estimate(
            PilotInput(
                n_patients=100,
                los_before=5.0,
                los_after=5.0,
                cm_per_patient=10000,
                patients_divisor=5.0,
            )
        )
        assert out["quarter_days_saved"] == 0
        assert out["annual_cm_increase"] == 0
