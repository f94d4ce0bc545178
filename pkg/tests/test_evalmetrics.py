import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import pairwise_auc
from wardflow.evalmetrics import (
    auc,
    combine_doctor_green,
    doctor_score,
    odds_ratio,
    ovr_auc,
    readmission_analysis,
    welch_one_sided,
)


class TestAuc:
    def test_small_example(self):
        res = auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert res.auc == pytest.approx(0.75, abs=1e-12)

    def test_perfect_separation(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == pytest.approx(1.0)

    def test_all_ties(self):
        assert auc([0.5] * 6, [0, 1, 0, 1, 0, 1]).auc == pytest.approx(0.5)

    def test_single_class_undefined(self):
        assert auc([0.1, 0.2], [1, 1]).auc is None

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            n = rng.integers(2, 1000)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # tie-heavy scores: few distinct values
            scores = rng.choice(np.linspace(0, 1, rng.integers(2, 12)), size=n)
            assert auc(scores, labels).auc == pytest.approx(
                pairwise_auc(scores, labels), abs=1e-12
            )

    @given(
        st.lists(
            st.floats(min_value=-5, max_value=5).map(lambda x: round(x, 2)),
            min_size=4,
            max_size=40,
        ),
        st.data(),
    )
    @settings(max_examples=50, deadline=None)
    def test_monotone_transform_invariance(self, scores, data):
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores))
        )
        if sum(labels) in (0, len(labels)):
            return
        s = np.array(scores)
        base = auc(s, labels).auc
        transformed = auc(np.exp(0.5 * s) + 3, labels).auc
        assert transformed == pytest.approx(base, abs=1e-12)


class TestOvrAuc:
    def test_two_class_matches_binary(self):
        scores = np.array([[0.8, 0.2], [0.3, 0.7], [0.6, 0.4], [0.1, 0.9]])
        labels = [0, 1, 0, 1]
        res = ovr_auc(scores, labels)
        binary = auc(scores[:, 1], labels).auc
        assert res["per_class"][1] == pytest.approx(binary)
        assert res["per_class"][0] == pytest.approx(binary)  # complement symmetry

    def test_one_hot_perfect(self):
        labels = [0, 1, 2, 0, 1, 2]
        scores = np.eye(3)[labels]
        res = ovr_auc(scores, labels)
        assert all(v == pytest.approx(1.0) for v in res["per_class"].values())

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(42)
        n = 10000
        labels = rng.integers(0, 3, size=n)
        scores = rng.uniform(size=(n, 3))
        scores /= scores.sum(axis=1, keepdims=True)
        res = ovr_auc(scores, labels)
        assert 0.48 <= res["macro"] <= 0.52

    def test_absent_class_skipped(self):
        scores = np.array([[0.5, 0.3, 0.2], [0.2, 0.6, 0.2]])
        res = ovr_auc(scores, [0, 1])
        assert res["per_class"][2] is None
        assert res["macro"] is not None


class TestDoctorScore:
    def test_tomorrow_minus_one(self):
        s = doctor_score(np.array(["2023-03-02"], dtype="datetime64[D]"), np.array(["2023-03-01"], dtype="datetime64[D]"))
        assert s[0] == -1.0

    def test_today_outranks_tomorrow(self):
        s = doctor_score(
            np.array(["2023-03-01", "2023-03-02"], dtype="datetime64[D]"),
            np.array(["2023-03-01", "2023-03-01"], dtype="datetime64[D]"),
        )
        assert s[0] == 0.0 and s[0] > s[1]

    def test_one_pair_auc(self):
        edd = np.array(["2023-03-02", "2023-03-06"], dtype="datetime64[D]")
        rd = np.array(["2023-03-01", "2023-03-01"], dtype="datetime64[D]")
        labels = [1, 0]  # sooner EDD was the real 48h discharge
        assert auc(doctor_score(edd, rd), labels).auc == pytest.approx(1.0)


class TestCombineDoctorGreen:
    def test_doctor_subset_of_green(self):
        labels = np.array([1, 1, 1, 0, 0, 0, 0, 0])
        doctor = np.array([1, 1, 0, 1, 0, 0, 0, 0], dtype=bool)
        green = np.array([1, 1, 1, 1, 1, 0, 0, 0], dtype=bool)  # superset of doctor
        res = combine_doctor_green(doctor, green, labels)
        assert res.and_precision == pytest.approx(res.doctor_precision)
        assert res.and_recall == pytest.approx(res.doctor_recall)
        # OR equals the green set
        assert res.or_recall == pytest.approx(1.0)

    def test_disjoint_sets_and_undefined(self):
        labels = np.array([1, 1, 0, 0])
        doctor = np.array([1, 0, 0, 0], dtype=bool)
        green = np.array([0, 1, 0, 0], dtype=bool)
        res = combine_doctor_green(doctor, green, labels)
        assert res.and_precision is None
        assert res.and_recall == 0.0

    def test_set_containment_on_random_fixtures(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = rng.integers(10, 300)
            labels = rng.integers(0, 2, size=n)
            doctor = rng.uniform(size=n) < 0.4
            green = rng.uniform(size=n) < 0.4
            if labels.sum() == 0:
                labels[0] = 1
            res = combine_doctor_green(doctor, green, labels)
            assert res.and_recall <= res.doctor_recall + 1e-12
            assert res.doctor_recall <= res.or_recall + 1e-12


class TestWelch:
    def test_identical_groups(self):
        a = np.array([0, 1, 0, 1, 1, 0])
        res = welch_one_sided(a, a.copy())
        assert res.t == pytest.approx(0.0)
        assert res.p_one_sided == pytest.approx(0.5)

    def test_reduces_to_student_when_balanced(self):
        from scipy import stats

        rng = np.random.default_rng(3)
        a = rng.normal(0.5, 1.0, size=40)
        b = rng.normal(0.0, 1.0, size=40)
        # equalize the sample variances so Welch == Student exactly
        b = (b - b.mean()) / b.std(ddof=1) * a.std(ddof=1) + b.mean()
        ours = welch_one_sided(a, b)
        t_ref, p_ref = stats.ttest_ind(a, b, equal_var=True, alternative="greater")
        assert ours.t == pytest.approx(t_ref, abs=1e-9)
        assert ours.p_one_sided == pytest.approx(p_ref, abs=1e-9)


class TestOddsRatio:
    def test_hand_example(self):
        value, corrected = odds_ratio(20, 100, 10, 100)
        assert value == pytest.approx(2.25, abs=1e-9)
        assert not corrected

    def test_zero_cell_haldane(self):
        value, corrected = odds_ratio(0, 50, 5, 50)
        assert corrected
        assert value > 0

    def test_identical_groups_unity(self):
        value, _ = odds_ratio(10, 100, 10, 100)
        assert value == pytest.approx(1.0)


class TestReadmissionAnalysis:
    def test_hand_or_and_welch(self):
        # no-green 20/100 readmitted vs green 10/100
        n = 200
        green = np.array([False] * 100 + [True] * 100)
        r30 = np.array([1] * 20 + [0] * 80 + [1] * 10 + [0] * 90)
        r7 = np.zeros(n, dtype=int)
        rep = readmission_analysis(
            p48=np.full(n, 0.5),
            discharged_within_48=np.ones(n, dtype=bool),
            readmit7=r7,
            readmit30=r30,
            green_at_48h_before=green,
        )
        assert rep.or_30d == pytest.approx(2.25, abs=1e-9)
        assert rep.welch_30d.t > 0
        assert rep.welch_30d.p_one_sided < 0.05

    def test_identical_groups(self):
        n = 100
        green = np.array([False, True] * (n // 2))
        r30 = np.tile([1, 1, 0, 0], n // 4)
        rep = readmission_analysis(
            p48=np.full(n, 0.2),
            discharged_within_48=np.ones(n, dtype=bool),
            readmit7=np.zeros(n, dtype=int),
            readmit30=r30,
            green_at_48h_before=green,
        )
        assert rep.welch_30d.t == pytest.approx(0.0)
        assert rep.welch_30d.p_one_sided == pytest.approx(0.5)
        assert rep.or_30d == pytest.approx(1.0)

    def test_bucket_restriction_and_rates(self):
        p48 = np.array([0.02, 0.02, 0.02, 0.98, 0.98, 0.98, 0.50])
        discharged = np.array([True, True, False, True, True, True, False])
        r30 = np.array([1, 1, 1, 0, 0, 1, 1])
        r7 = np.zeros(7, dtype=int)
        rep = readmission_analysis(p48, discharged, r7, r30)
        assert rep.bucket_counts[0] == 2
        assert rep.bucket_rate_30d[0] == pytest.approx(1.0)
        assert rep.bucket_counts[-1] == 3
        assert rep.bucket_rate_30d[-1] == pytest.approx(1 / 3)
        assert rep.bucket_counts[10] == 0  # the non-discharged 0.50 row
        assert rep.bucket_rate_30d[10] is None

    def test_readmit7_implies_30(self):
        with pytest.raises(ValueError):
            readmission_analysis(
                p48=[0.5],
                discharged_within_48=[True],
                readmit7=[1],
                readmit30=[0],
            )

    def test_excluded_unknown_flags_counted(self):
        rep = readmission_analysis(
            p48=np.full(6, 0.5),
            discharged_within_48=np.ones(6, dtype=bool),
            readmit7=np.zeros(6, dtype=int),
            readmit30=np.array([1, 0, 1, 0, 1, 0]),
            green_at_48h_before=np.array([True, True, False, False, None, None], dtype=object),
        )
        assert rep.excluded_no_green_flag == 2
