import numpy as np
import pandas as pd
import pytest

from wardflow.extracts import available_dates, load_history
from wardflow.featurize import (
    BOUND_SENTINEL,
    NA_VALUE,
    FeatureMatrix,
    FeaturePipeline,
    apply_imputer,
    build_features,
    compute_derived,
    drop_sparse,
    encode,
    feature_groups,
    fit_encoders,
    fit_imputer,
    rule_impute,
)


def make_matrix(columns: dict, categorical=(), hospital="HA", n_days=None):
    """Small FeatureMatrix fixture; rows are one patient's consecutive days
    unless patient ids are passed explicitly."""
    frame = pd.DataFrame(columns)
    n = len(frame)
    if "patient_id" in frame.columns:
        pids = frame.pop("patient_id")
    else:
        pids = ["P1"] * n
    dates = pd.date_range("2023-03-01", periods=n, freq="D")
    frame.index = pd.MultiIndex.from_arrays([pids, dates], names=["patient_id", "record_date"])
    groups = feature_groups()
    col_groups = {c: groups.get(c, 4) for c in frame.columns}
    return FeatureMatrix(
        hospital_id=hospital,
        frame=frame,
        groups=col_groups,
        categorical=[c for c in categorical if c in frame.columns],
        missing_mask=frame.isna(),
    )


class TestDerivedLabFeatures:
    def _lab_matrix(self, values, lower, upper, missing_before=None):
        fm = make_matrix(
            {
                "lab_platelet": values,
                "lab_platelet_range_lower": lower,
                "lab_platelet_range_upper": upper,
            }
        )
        if missing_before is not None:
            fm.missing_mask["lab_platelet"] = missing_before
        return fm

    def test_range_distance_formula(self):
        # latest 6.0 against [3.5, 5.0]: min(6-3.5,0)+max(6-5,0) = 1.0
        fm = self._lab_matrix([6.0], [3.5], [5.0])
        out = compute_derived(fm)
        assert out.frame["lab_platelet_range_dist"].iloc[0] == pytest.approx(1.0, abs=1e-12)
        # below range is signed negative
        fm = self._lab_matrix([3.0], [3.5], [5.0])
        out = compute_derived(fm)
        assert out.frame["lab_platelet_range_dist"].iloc[0] == pytest.approx(-0.5, abs=1e-12)

    def test_normal_range_indicator(self):
        fm = self._lab_matrix(
            [4.0, 9.9, 4.0], [3.5, 3.5, 3.5], [5.0, 5.0, 5.0],
            missing_before=[False, False, True],
        )
        out = compute_derived(fm)
        assert out.frame["lab_platelet_norm_ind"].tolist() == [1.0, 2.0, 0.0]

    def test_delta_on_imputed_values(self):
        # day-2 albumin 3.0 after day-1 2.5: delta +0.5; first day delta 0
        fm = make_matrix(
            {
                "lab_albumin": [2.5, 3.0],
                "lab_albumin_range_lower": [3.5, 3.5],
                "lab_albumin_range_upper": [5.0, 5.0],
            }
        )
        out = compute_derived(fm)
        assert out.frame["lab_albumin_delta"].tolist() == [0.0, 0.5]

    def test_delta_resets_between_patients(self):
        fm = make_matrix(
            {
                "patient_id": ["P1", "P1", "P2"],
                "lab_albumin": [2.5, 3.0, 9.0],
                "lab_albumin_range_lower": [3.5] * 3,
                "lab_albumin_range_upper": [5.0] * 3,
            }
        )
        out = compute_derived(fm)
        assert out.frame["lab_albumin_delta"].tolist() == [0.0, 0.5, 0.0]

    def test_critical_flag_uses_observed_values_only(self):
        fm = make_matrix({"heart_rate_latest": [150.0, 80.0, -1.0]})
        fm.missing_mask["heart_rate_latest"] = [False, False, True]
        out = compute_derived(fm)
        assert out.frame["heart_rate_critical"].tolist() == [1.0, 0.0, 0.0]


class TestRuleImpute:
    def test_missing_flags_mean_absent(self):
        fm = make_matrix({"dnr": [np.nan, 1.0], "npo": [np.nan, np.nan]})
        out, _ = rule_impute(fm)
        assert out.frame["dnr"].tolist() == [0.0, 1.0]
        assert out.frame["npo"].tolist() == [0.0, 0.0]

    def test_missing_categorical_becomes_na_value(self):
        fm = make_matrix({"o2_device": [None, "Ventilator"]}, categorical=["o2_device"])
        out, _ = rule_impute(fm)
        assert out.frame["o2_device"].tolist() == [NA_VALUE, "Ventilator"]

    def test_future_surgery_sentinel(self):
        fm = make_matrix({"days_until_next_surgery": [np.nan, 2.0]})
        out, _ = rule_impute(fm)
        assert out.frame["days_until_next_surgery"].tolist() == [-1.0, 2.0]

    def test_far_past_sentinels(self):
        fm = make_matrix(
            {"days_since_last_surgery": [np.nan], "days_since_previous_admission": [np.nan]}
        )
        out, _ = rule_impute(fm)
        assert out.frame["days_since_last_surgery"].iloc[0] == 9999.0
        assert out.frame["days_since_previous_admission"].iloc[0] == 9999.0

    def test_unmeasured_vitals_sentinel(self):
        fm = make_matrix({"spo2_latest": [np.nan, 97.0]})
        out, _ = rule_impute(fm)
        assert out.frame["spo2_latest"].tolist() == [-1.0, 97.0]

    def test_counts_fill_zero(self):
        fm = make_matrix({"pending_labs": [np.nan, 3.0]})
        out, _ = rule_impute(fm)
        assert out.frame["pending_labs"].tolist() == [0.0, 3.0]

    def test_range_backfill_within_admission_then_modal(self):
        fm = make_matrix(
            {
                "patient_id": ["P1", "P1", "P2", "P3"],
                "lab_albumin": [2.0, 2.1, 2.2, 2.3],
                "lab_albumin_range_lower": [np.nan, 3.5, 3.4, np.nan],
                "lab_albumin_range_upper": [np.nan, 5.0, 5.0, np.nan],
            }
        )
        out, modal = rule_impute(fm)
        # P1 backfilled from its own later row
        assert out.frame["lab_albumin_range_lower"].tolist()[:2] == [3.5, 3.5]
        # P3 has no range anywhere: filled with the modal pair
        assert out.frame["lab_albumin_range_lower"].iloc[3] == modal["lab_albumin_range_lower"][0]

    def test_fitted_modal_replayed(self):
        fm = make_matrix(
            {
                "patient_id": ["P1", "P2"],
                "lab_wbc": [5.0, 6.0],
                "lab_wbc_range_lower": [4.5, np.nan],
                "lab_wbc_range_upper": [11.0, np.nan],
            }
        )
        persisted = {"lab_wbc_range_lower": (1.0, 2.0)}
        out, modal = rule_impute(fm, persisted)
        assert modal == persisted
        assert out.frame["lab_wbc_range_lower"].iloc[1] == 1.0
        assert out.frame["lab_wbc_range_upper"].iloc[1] == 2.0


class TestDropSparse:
    def test_strict_threshold(self):
        n = 100
        fm = make_matrix(
            {
                "lab_albumin": [np.nan] * 51 + [1.0] * 49,   # 51% missing: dropped
                "lab_wbc": [np.nan] * 50 + [1.0] * 50,       # exactly 50%: retained
                "age": [50.0] * n,
            }
        )
        out, dropped = drop_sparse(fm, np.ones(n, dtype=bool))
        assert dropped == ["lab_albumin"]
        assert "lab_wbc" in out.frame.columns

    def test_fully_observed_nothing_dropped(self):
        fm = make_matrix({"age": [1.0, 2.0], "lab_wbc": [3.0, 4.0]})
        _, dropped = drop_sparse(fm, np.ones(2, dtype=bool))
        assert dropped == []

    def test_all_dropped_is_hard_error(self):
        fm = make_matrix({"lab_albumin": [np.nan, np.nan, 1.0]})
        with pytest.raises(ValueError, match="all columns"):
            drop_sparse(fm, np.ones(3, dtype=bool))

    def test_decision_from_train_rows_replayed_elsewhere(self):
        fm = make_matrix(
            {
                "lab_albumin": [np.nan, np.nan, np.nan, 1.0, 1.0, 1.0],
                "age": [50.0] * 6,
            }
        )
        train = np.array([True, True, True, False, False, False])
        out, dropped = drop_sparse(fm, train)
        assert dropped == ["lab_albumin"]
        # replay on a fully-observed matrix still drops
        fm2 = make_matrix({"lab_albumin": [1.0, 2.0], "age": [1.0, 1.0]})
        out2, _ = drop_sparse(fm2, dropped=dropped)
        assert list(out2.frame.columns) == ["age"]


class TestKnnImputer:
    def _reference_matrix(self):
        return make_matrix(
            {
                "patient_id": [f"R{i}" for i in range(5)] + ["Q"],
                "age": [0.0, 1.0, 2.0, 10.0, 20.0, 1.0],
                "lab_wbc": [2.0, 4.0, 6.0, 100.0, 200.0, np.nan],
            }
        )

    def test_mean_of_three_nearest(self):
        fm = self._reference_matrix()
        train = np.array([True] * 5 + [False])
        model = fit_imputer(fm, train, k=3)
        out = apply_imputer(model, fm)
        # neighbors by age are 1.0, 0.0, 2.0 -> wbc mean (4+2+6)/3
        assert out.frame["lab_wbc"].iloc[5] == pytest.approx(4.0, abs=1e-12)

    def test_complete_rows_unchanged(self):
        fm = self._reference_matrix()
        train = np.array([True] * 5 + [False])
        model = fit_imputer(fm, train, k=2)
        out = apply_imputer(model, fm)
        assert out.frame.iloc[:5].equals(fm.frame.iloc[:5])

    def test_twin_fill_with_k1(self):
        fm = make_matrix(
            {
                "patient_id": ["R0", "R1", "Q"],
                "age": [50.0, 80.0, 50.0],
                "lab_wbc": [7.5, 12.0, np.nan],
            }
        )
        model = fit_imputer(fm, np.array([True, True, False]), k=1)
        out = apply_imputer(model, fm)
        assert out.frame["lab_wbc"].iloc[2] == pytest.approx(7.5)

    def test_equidistant_tie_breaks_by_ordinal(self):
        fm = make_matrix(
            {
                "patient_id": ["R0", "R1", "Q"],
                "age": [40.0, 60.0, 50.0],
                "lab_wbc": [1.0, 9.0, np.nan],
            }
        )
        model = fit_imputer(fm, np.array([True, True, False]), k=1)
        out = apply_imputer(model, fm)
        assert out.frame["lab_wbc"].iloc[2] == pytest.approx(1.0)  # first reference wins

    def test_k_clamped_with_warning(self):
        fm = self._reference_matrix()
        train = np.array([True] * 5 + [False])
        with pytest.warns(UserWarning, match="clamping"):
            model = fit_imputer(fm, train, k=50)
        assert model.k == 5


class TestEncoders:
    def test_insertion_order_codes(self):
        fm = make_matrix(
            {"department": ["ICU", "MED", "CARD", "MED"]}, categorical=["department"]
        )
        enc = fit_encoders(fm)
        assert enc.mapping["department"] == {NA_VALUE: 0, "ICU": 1, "MED": 2, "CARD": 3}
        out = encode(enc, fm)
        assert out.frame["department"].tolist() == [1.0, 2.0, 3.0, 2.0]
        assert enc.decode("department", 2) == "MED"

    def test_unseen_category_maps_to_zero(self):
        fm = make_matrix({"department": ["ICU", "MED"]}, categorical=["department"])
        enc = fit_encoders(fm)
        fresh = make_matrix({"department": ["ONCOLOGY"]}, categorical=["department"])
        out = encode(enc, fresh)
        assert out.frame["department"].iloc[0] == 0.0

    def test_hospital_mismatch_forbidden(self):
        fm = make_matrix({"department": ["ICU"]}, categorical=["department"], hospital="HA")
        enc = fit_encoders(fm)
        other = make_matrix({"department": ["ICU"]}, categorical=["department"], hospital="HB")
        with pytest.raises(ValueError, match="per-hospital"):
            encode(enc, other)


@pytest.fixture(scope="module")
def ha_raw(small_corpus):
    history = load_history(
        small_corpus["root"], "HA", available_dates(small_corpus["root"], "HA")
    )
    return history, build_features(history)


class TestBuildFeatures(object):
    def test_unique_index_and_groups(self, ha_raw):
        _, raw = ha_raw
        assert not raw.frame.index.duplicated().any()
        assert set(raw.groups.values()) == {1, 2, 3, 4, 5, 6}

    def test_days_since_admission_positive(self, ha_raw):
        _, raw = ha_raw
        assert (raw.frame["days_since_admission"] > 0).all()

    def test_bound_sentinels_finite(self, ha_raw):
        _, raw = ha_raw
        lowers = raw.frame["lab_bilirubin_range_lower"].dropna()
        assert (lowers == -BOUND_SENTINEL).any()
        assert np.isfinite(raw.frame.select_dtypes("number").to_numpy()[
            ~np.isnan(raw.frame.select_dtypes("number").to_numpy())
        ]).all()

    def test_as_of_slice_matches_full_build(self, ha_raw):
        history, raw = ha_raw
        some_date = raw.frame.index.get_level_values("record_date")[50]
        single = build_features(history, as_of=some_date)
        full_slice = raw.frame.xs(some_date, level="record_date")
        assert len(single.frame) == len(full_slice)
        pd.testing.assert_frame_equal(
            single.frame.droplevel("record_date"), full_slice, check_like=True
        )

    def test_as_of_outside_history_rejected(self, ha_raw):
        history, _ = ha_raw
        with pytest.raises(ValueError, match="outside"):
            build_features(history, as_of=pd.Timestamp("2030-01-01"))


class TestPipeline:
    def test_fit_transform_complete_and_numeric(self, small_corpus):
        history = load_history(
            small_corpus["root"], "HG", available_dates(small_corpus["root"], "HG")
        )
        raw = build_features(history)
        from wardflow.cohort import split_date_masks

        masks = split_date_masks(raw.frame.index.get_level_values("record_date"))
        pipe = FeaturePipeline(hospital_id="HG")
        full = pipe.fit_transform(raw, masks["train"])
        assert not full.frame.isna().any().any()
        assert full.frame.select_dtypes(exclude=[np.number]).empty

    def test_persisted_pipeline_replays_bit_exactly(self, small_corpus, tmp_path):
        history = load_history(
            small_corpus["root"], "HG", available_dates(small_corpus["root"], "HG")
        )
        raw = build_features(history)
        from wardflow.cohort import split_date_masks

        masks = split_date_masks(raw.frame.index.get_level_values("record_date"))
        pipe = FeaturePipeline(hospital_id="HG")
        fitted = pipe.fit_transform(raw, masks["train"])
        pipe.save(tmp_path / "pipe.json")
        loaded = FeaturePipeline.load(tmp_path / "pipe.json")
        replayed = loaded.transform(build_features(history))
        assert list(replayed.frame.columns) == list(fitted.frame.columns)
        assert np.array_equal(
            replayed.frame.to_numpy(dtype=float), fitted.frame.to_numpy(dtype=float)
        )
        assert loaded.schema_hash == pipe.schema_hash
