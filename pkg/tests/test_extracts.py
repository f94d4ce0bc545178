import math

import pytest
from hypothesis import given, settings, strategies as st

from wardflow.extracts import (
    EXTRACT_SCHEMAS,
    NormalRange,
    ParseError,
    available_dates,
    bundle_dir,
    load_bundle,
    load_history,
    parse_range,
    parse_scored_string,
)


class TestParseRange:
    def test_pair(self):
        r = parse_range("3.5 - 5.0")
        assert (r.lower, r.upper, r.missing) == (3.5, 5.0, False)

    def test_less_than(self):
        r = parse_range("<1.2")
        assert r.lower == -math.inf and r.upper == 1.2

    def test_greater_than(self):
        r = parse_range(">60")
        assert r.lower == 60.0 and r.upper == math.inf

    def test_empty_is_missing(self):
        r = parse_range("   ")
        assert r.missing and r.lower == -math.inf and r.upper == math.inf

    def test_signed_decimals(self):
        r = parse_range("-2.5 - -0.5")
        assert (r.lower, r.upper) == (-2.5, -0.5)

    def test_malformed_raises_with_text(self):
        with pytest.raises(ParseError, match="banana"):
            parse_range("banana")

    def test_inverted_pair_rejected(self):
        with pytest.raises(ParseError):
            parse_range("5.0 - 3.5")

    @given(st.sampled_from(["3.5 - 5.0", "<1.2", ">60", "135 - 145"]),
           st.text(alphabet=" \t", max_size=4), st.text(alphabet=" \t", max_size=4))
    @settings(max_examples=40, deadline=None)
    def test_whitespace_idempotent(self, core, pre, post):
        assert parse_range(pre + core + post) == parse_range(core)

    def test_contains(self):
        r = parse_range("3.5 - 5.0")
        assert r.contains(4.0) and not r.contains(5.1)


class TestNormalRange:
    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            NormalRange(5.0, 3.0)

    def test_double_infinite_needs_missing_flag(self):
        with pytest.raises(ValueError):
            NormalRange(-math.inf, math.inf, missing=False)
        NormalRange(-math.inf, math.inf, missing=True)


class TestParseScoredString:
    def test_rass_zero(self):
        assert parse_scored_string("0 → alert and calm") == 0.0

    def test_negative(self):
        assert parse_scored_string("-4 → deep sedation") == -4.0

    def test_pain_ten(self):
        assert parse_scored_string("10 → hurts worst") == 10.0

    def test_ascii_arrow_and_bare_number(self):
        assert parse_scored_string("2 -> agitated") == 2.0
        assert parse_scored_string("3.5") == 3.5

    def test_no_leading_numeral(self):
        with pytest.raises(ParseError):
            parse_scored_string("alert and calm")


class TestLoadBundle:
    def test_round_trip_zero_quarantine(self, small_corpus):
        dates = available_dates(small_corpus["root"], "HA")
        assert len(dates) > 0
        history = load_history(small_corpus["root"], "HA", dates)
        assert history.quarantine.total == 0

    def test_missing_file_names_extract(self, small_corpus):
        dates = available_dates(small_corpus["root"], "HA")
        d = dates[len(dates) // 2]
        directory = bundle_dir(small_corpus["root"], "HA", d)
        target = directory / EXTRACT_SCHEMAS[6].filename
        backup = target.read_bytes()
        target.unlink()
        try:
            with pytest.raises(FileNotFoundError, match=r"extract 6 \(DNR status\)"):
                load_bundle(small_corpus["root"], "HA", d)
        finally:
            target.write_bytes(backup)

    def test_corrupted_line_quarantined(self, small_corpus, tmp_path):
        dates = available_dates(small_corpus["root"], "HA")
        d = dates[len(dates) // 2]
        directory = bundle_dir(small_corpus["root"], "HA", d)
        target = directory / EXTRACT_SCHEMAS[3].filename
        original = target.read_text()
        lines = original.splitlines()
        n_rows = len(lines) - 1
        assert n_rows >= 3
        corrupted = lines[:]
        parts = corrupted[2].split(",")
        parts[2] = "not-a-number"
        corrupted[2] = ",".join(parts)
        target.write_text("\n".join(corrupted) + "\n")
        try:
            bundle, report = load_bundle(small_corpus["root"], "HA", d)
            assert report.counts.get(3) == 1
            assert len(bundle.tables[3]) == n_rows - 1
            assert len(report.samples[3]) == 1
        finally:
            target.write_text(original)

    def test_wrong_field_count_quarantined(self, small_corpus):
        dates = available_dates(small_corpus["root"], "HA")
        d = dates[3]
        directory = bundle_dir(small_corpus["root"], "HA", d)
        target = directory / EXTRACT_SCHEMAS[8].filename
        original = target.read_text()
        lines = original.splitlines()
        n_rows = len(lines) - 1
        target.write_text("\n".join(lines + ["only,three,fields"]) + "\n")
        try:
            bundle, report = load_bundle(small_corpus["root"], "HA", d)
            # loaded + quarantined = physical rows
            assert len(bundle.tables[8]) + report.counts.get(8, 0) == n_rows + 1
            assert report.counts.get(8) == 1
        finally:
            target.write_text(original)

    def test_header_only_file_empty_table(self, tmp_path, small_config):
        from wardflow.hospitals import HospitalProfile
        from wardflow.synthgen import GeneratorConfig, generate

        cfg = GeneratorConfig(
            seed=1,
            hospitals=[HospitalProfile("HZ", bed_count=10, has_icu=False,
                                       n_patients=0, icu_department=None)],
            date_range=small_config.date_range,
        )
        generate(cfg, tmp_path)
        d = available_dates(tmp_path, "HZ")[0]
        bundle, report = load_bundle(tmp_path, "HZ", d)
        assert report.total == 0
        assert all(len(t) == 0 for t in bundle.tables.values())

    def test_header_mismatch_hard_error(self, tmp_path):
        directory = tmp_path / "HX" / "2023-01-05"
        directory.mkdir(parents=True)
        for schema in EXTRACT_SCHEMAS.values():
            (directory / schema.filename).write_text(
                ",".join(schema.column_names) + "\n"
            )
        bad = directory / EXTRACT_SCHEMAS[2].filename
        bad.write_text("wrong,header\n")
        with pytest.raises(ValueError, match="header mismatch"):
            load_bundle(tmp_path, "HX", "2023-01-05")

    def test_patient_ids_covered_by_tables_1_and_7(self, small_corpus):
        dates = available_dates(small_corpus["root"], "HA")
        bundle, report = load_bundle(small_corpus["root"], "HA", dates[10])
        assert report.total == 0
        known = set(bundle.tables[1]["patient_id"]) | set(bundle.tables[7]["patient_id"])
        for n in range(2, 11):
            if n == 7 or bundle.tables[n].empty:
                continue
            assert set(bundle.tables[n]["patient_id"]) <= known
