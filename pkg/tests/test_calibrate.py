import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from oracles import isotonic_oracle

from wardflow.calibrate import (
    apply_isotonic_ovr,
    assess,
    fit_isotonic,
    fit_isotonic_ovr,
    split_test_halves,
)


class TestPavOracle:
    def test_hand_example(self):
        model = fit_isotonic([0.1, 0.2, 0.3], [1, 0, 1])
        assert model.values == pytest.approx([0.5, 0.5, 1.0], abs=1e-12)

    def test_already_monotone(self):
        model = fit_isotonic([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1])
        assert model.values == pytest.approx([0.0, 0.0, 1.0, 1.0], abs=1e-12)

    def test_all_positive_constant(self):
        model = fit_isotonic([0.2, 0.9], [1, 1])
        assert model.values == pytest.approx([1.0])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            scores = np.round(rng.uniform(size=n), 2)  # force some ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            model = fit_isotonic(scores, labels)
            fitted = model.apply(scores)

            order = np.argsort(scores, kind="stable")
            s, y = scores[order], labels[order].astype(float)
            uniq, start = np.unique(s, return_index=True)
            counts = np.diff(np.append(start, len(y)))
            pooled_means = np.add.reduceat(y, start) / counts
            oracle = isotonic_oracle(pooled_means, counts.astype(float))
            assert model.apply(uniq) == pytest.approx(oracle, abs=1e-9)
            # and the full fit agrees point by point
            assert fitted[order] == pytest.approx(
                np.repeat(oracle, counts.astype(int)), abs=1e-9
            )

    @given(
        st.lists(st.floats(min_value=0, max_value=1), min_size=2, max_size=60),
        st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_apply_is_monotone(self, scores, data):
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores))
        )
        model = fit_isotonic(scores, labels)
        probe = np.sort(np.array(scores + [min(scores) - 1, max(scores) + 1]))
        applied = model.apply(probe)
        assert np.all(np.diff(applied) >= -1e-12)

    def test_ranking_never_inverted(self):
        rng = np.random.default_rng(5)
        scores = rng.uniform(size=500)
        labels = (rng.uniform(size=500) < scores).astype(int)
        model = fit_isotonic(scores, labels)
        cal = model.apply(scores)
        # calibration may create ties but never inverts order: any pair
        # strictly ordered after calibration was strictly ordered before
        order = np.argsort(scores)
        assert np.all(np.diff(cal[order]) >= 0)
        i, j = np.triu_indices(len(scores), k=1)
        strict = cal[order][i] < cal[order][j]
        assert np.all(scores[order][i][strict] < scores[order][j][strict])

    def test_out_of_range_clamps(self):
        model = fit_isotonic([0.2, 0.4, 0.6], [0, 1, 1])
        assert model.apply([-5.0])[0] == model.values[0]
        assert model.apply([5.0])[0] == model.values[-1]


class TestSplitTestHalves:
    def test_even_days(self):
        dates = np.repeat(np.arange(10), 3)
        cal, ass = split_test_halves(dates)
        assert sorted(np.unique(dates[cal])) == list(range(5))
        assert sorted(np.unique(dates[ass])) == list(range(5, 10))

    def test_odd_days_round_toward_calibration(self):
        dates = np.arange(7)
        cal, ass = split_test_halves(dates)
        assert cal.sum() == 4 and ass.sum() == 3

    def test_single_date_rejected(self):
        with pytest.raises(ValueError):
            split_test_halves(np.array([5, 5, 5]))


class TestAssess:
    def test_well_calibrated_synthetic(self):
        rng = np.random.default_rng(23)
        preds = rng.uniform(size=10000)
        labels = (rng.uniform(size=10000) < preds).astype(int)
        _, mse = assess(preds, labels)
        assert mse is not None and mse < 0.01

    def test_constant_prediction_single_bin(self):
        n = 1000
        preds = np.full(n, 0.3)
        labels = np.array(([1] * 3 + [0] * 7) * 100)
        curve, mse = assess(preds, labels)
        assert curve.included.sum() == 1
        assert mse == pytest.approx(0.0, abs=1e-12)

    def test_too_few_observations_undefined(self):
        curve, mse = assess(np.linspace(0, 1, 9), np.zeros(9, dtype=int))
        assert mse is None
        assert curve.counts.sum() == 9

    def test_counts_cover_sample(self):
        rng = np.random.default_rng(1)
        preds = rng.uniform(size=137)
        curve, _ = assess(preds, rng.integers(0, 2, size=137))
        assert curve.counts.sum() == 137


class TestOvrCalibration:
    def test_rows_renormalized(self):
        rng = np.random.default_rng(9)
        n = 400
        labels = rng.integers(0, 3, size=n)
        scores = rng.dirichlet([2, 2, 2], size=n)
        models = fit_isotonic_ovr(scores, labels)
        cal = apply_isotonic_ovr(models, scores)
        assert cal.shape == (n, 3)
        assert cal.sum(axis=1) == pytest.approx(np.ones(n), abs=1e-9)
