"""Parsers for the 10 daily extract files.

Each hospital-date directory holds one CSV per extract. Event-grained tables
(ADT events, ADT orders, surgery cases) carry the rows timestamped in the 24
hours before the extract cut; patient-day tables carry one row per current
inpatient at the cut (record_date == extract date, data truncated at 00:00 of
that date), plus an exit row for patients discharged during the window. The
time-invariant patient table lists the census plus exiting patients, and the
exit row is the one carrying the discharge disposition.

Full column lists are artifact-defined; see docs/extract_schemas.md.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pandas as pd

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"
DATE_FORMAT = "%Y-%m-%d"

LAB_NAMES = (
    "albumin",
    "wbc",
    "platelet",
    "hemoglobin",
    "sodium",
    "creatinine",
    "bilirubin",
    "lactate",
)

MEASUREMENT_NAMES = (
    "heart_rate",
    "respiratory_rate",
    "temperature",
    "spo2",
    "o2_concentration",
    "systolic_bp",
    "rass",
    "pain_score",
    "inverse_flow",
    "fall_risk_score",
)

# measurements whose latest value arrives as a "score -> description" string
SCORED_MEASUREMENTS = ("rass", "pain_score")


class ParseError(ValueError):
    """A string cell did not conform to its documented format."""


@dataclass(frozen=True)
class NormalRange:
    lower: float
    upper: float
    missing: bool = False

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        if not self.missing and math.isinf(self.lower) and math.isinf(self.upper):
            raise ValueError("both bounds infinite on a non-missing range")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)"
_RANGE_PAIR = re.compile(rf"^\s*({_NUMBER})\s*-\s*({_NUMBER})\s*$")
_RANGE_GT = re.compile(rf"^\s*>\s*({_NUMBER})\s*$")
_RANGE_LT = re.compile(rf"^\s*<\s*({_NUMBER})\s*$")
_SCORED = re.compile(rf"^\s*({_NUMBER})\s*(?:(?:→|->|:|-)\s*\S.*)?$")


def parse_range(s: str) -> NormalRange:
    """Parse a normal-range string: "a - b", ">x" (at least x), "<x" (at most
    x). Empty or whitespace input yields an unbounded range flagged missing.
    """
    if s is None:
        raise ParseError("range string is None")
    if not s.strip():
        return NormalRange(-math.inf, math.inf, missing=True)
    m = _RANGE_PAIR.match(s)
    if m:
        lo, hi = float(m.group(1)), float(m.group(2))
        if lo > hi:
            raise ParseError(f"inverted range: {s!r}")
        return NormalRange(lo, hi)
    m = _RANGE_GT.match(s)
    if m:
        return NormalRange(float(m.group(1)), math.inf)
    m = _RANGE_LT.match(s)
    if m:
        return NormalRange(-math.inf, float(m.group(1)))
    raise ParseError(f"unrecognized range format: {s!r}")


def parse_scored_string(s: str) -> float:
    """Extract the numeric score from strings like "0 → alert and calm" or
    "-4 -> deep sedation"; bare numbers pass through."""
    if s is None or not str(s).strip():
        raise ParseError("scored string is empty")
    m = _SCORED.match(str(s))
    if not m:
        raise ParseError(f"no leading numeral in scored string: {s!r}")
    return float(m.group(1))


# ---------------------------------------------------------------------------
# Extract schemas
# ---------------------------------------------------------------------------

# column kinds: str, float, datetime, date, range, scored
_lab_columns = []
for lab in LAB_NAMES:
    _lab_columns.append((lab, "float"))
    _lab_columns.append((f"{lab}_range", "range"))

_measurement_columns = []
for m in MEASUREMENT_NAMES:
    kind = "scored" if m in SCORED_MEASUREMENTS else "float"
    _measurement_columns.append((f"{m}_latest", kind))
    _measurement_columns.append((f"{m}_max_24h", "float"))
    _measurement_columns.append((f"{m}_mean_24h", "float"))


@dataclass(frozen=True)
class ExtractSchema:
    number: int
    name: str
    filename: str
    granularity: str
    columns: tuple[tuple[str, str], ...]

    @property
    def column_names(self) -> list[str]:
        return [c for c, _ in self.columns]


EXTRACT_SCHEMAS: dict[int, ExtractSchema] = {
    s.number: s
    for s in [
        ExtractSchema(
            1, "ADT events", "extract_01_adt_events.csv", "event",
            (
                ("patient_id", "str"),
                ("event_time", "datetime"),
                ("event_type", "str"),  # admission | transfer | discharge
                ("department", "str"),
                ("unit", "str"),
                ("bed", "str"),
            ),
        ),
        ExtractSchema(
            2, "ADT orders", "extract_02_adt_orders.csv", "order",
            (
                ("patient_id", "str"),
                ("order_time", "datetime"),
                ("order_type", "str"),  # admit | transfer | discharge
                ("service", "str"),
                ("level_of_care", "str"),
            ),
        ),
        ExtractSchema(
            3, "lab results with normal ranges", "extract_03_lab_results.csv", "patient-day",
            (("patient_id", "str"), ("record_date", "date"), *_lab_columns),
        ),
        ExtractSchema(
            4, "clinical measurements", "extract_04_clinical_measurements.csv", "patient-day",
            (("patient_id", "str"), ("record_date", "date"), *_measurement_columns),
        ),
        ExtractSchema(
            5, "discharge preparation", "extract_05_discharge_prep.csv", "patient-day",
            (
                ("patient_id", "str"),
                ("record_date", "date"),
                ("discharge_time", "datetime"),
                ("expected_discharge_date", "date"),
                ("future_surgery_date", "date"),
                ("npo_status", "str"),
                ("iv_status", "str"),
                ("dialysis", "str"),
                ("o2_device", "str"),
            ),
        ),
        ExtractSchema(
            6, "DNR status", "extract_06_dnr_status.csv", "patient-day",
            (("patient_id", "str"), ("record_date", "date"), ("dnr_status", "str")),
        ),
        ExtractSchema(
            7, "time-invariant patient info", "extract_07_patient_info.csv", "patient",
            (
                ("patient_id", "str"),
                ("age", "float"),
                ("sex", "str"),
                ("patient_type", "str"),
                ("admission_time", "datetime"),
                ("discharge_disposition", "str"),
                ("previous_discharge_time", "datetime"),
                ("previous_los", "float"),
            ),
        ),
        ExtractSchema(
            8, "note summary stats", "extract_08_note_stats.csv", "patient-day",
            (
                ("patient_id", "str"),
                ("record_date", "date"),
                ("diagnosis", "str"),
                ("notes_24h", "float"),
                ("notes_total", "float"),
                ("attending_count_24h", "float"),
            ),
        ),
        ExtractSchema(
            9, "surgery cases", "extract_09_surgery.csv", "surgery-case",
            (
                ("patient_id", "str"),
                ("procedure_name", "str"),
                ("start_time", "datetime"),
                ("end_time", "datetime"),
            ),
        ),
        ExtractSchema(
            10, "order summary stats", "extract_10_order_stats.csv", "patient-day",
            (
                ("patient_id", "str"),
                ("record_date", "date"),
                ("orders_24h", "float"),
                ("orders_total", "float"),
                ("medications_24h", "float"),
                ("medications_total", "float"),
                ("pending_labs", "float"),
                ("pending_mri", "float"),
                ("pending_ct", "float"),
                ("pending_echo", "float"),
            ),
        ),
    ]
}


@dataclass
class QuarantineReport:
    counts: dict[int, int] = field(default_factory=dict)
    samples: dict[int, list[str]] = field(default_factory=dict)

    def add(self, extract_number: int, line: str) -> None:
        self.counts[extract_number] = self.counts.get(extract_number, 0) + 1
        bucket = self.samples.setdefault(extract_number, [])
        if len(bucket) < 20:
            bucket.append(line)

    def merge(self, other: "QuarantineReport") -> None:
        for num, count in other.counts.items():
            self.counts[num] = self.counts.get(num, 0) + count
            bucket = self.samples.setdefault(num, [])
            for line in other.samples.get(num, []):
                if len(bucket) < 20:
                    bucket.append(line)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class ExtractBundle:
    hospital_id: str
    extract_date: date
    tables: dict[int, pd.DataFrame]


def bundle_dir(root: str | Path, hospital: str, extract_date: date) -> Path:
    return Path(root) / hospital / extract_date.strftime(DATE_FORMAT)


_NAT = np.datetime64("NaT")


def _parse_timestamp_cell(v: str) -> np.datetime64:
    if len(v) != 16 or v[10] != "T":
        raise ValueError(v)
    return np.datetime64(v)


def _parse_date_cell(v: str) -> np.datetime64:
    if len(v) != 10:
        raise ValueError(v)
    return np.datetime64(v)


def _coerce_rows(
    rows: list[list[str]], schema: ExtractSchema
) -> tuple[dict[str, object], np.ndarray]:
    """Coerce raw string rows column-wise. Empty cells are missing, never bad;
    non-empty cells that fail their format mark the whole row bad."""
    n = len(rows)
    bad = np.zeros(n, dtype=bool)
    typed: dict[str, object] = {}
    cache: dict[tuple[str, str], object] = {}
    for j, (col, kind) in enumerate(schema.columns):
        if kind == "str":
            typed[col] = np.array([r[j].strip() for r in rows], dtype=object)
            continue
        if kind == "float" or kind == "scored":
            out = np.full(n, np.nan)
            for i, r in enumerate(rows):
                v = r[j].strip()
                if not v:
                    continue
                try:
                    if kind == "float":
                        out[i] = float(v)
                    else:
                        key = ("s", v)
                        if key not in cache:
                            cache[key] = parse_scored_string(v)
                        out[i] = cache[key]
                except (ValueError, ParseError):
                    bad[i] = True
            typed[col] = out
            continue
        if kind in ("datetime", "date"):
            parse = _parse_timestamp_cell if kind == "datetime" else _parse_date_cell
            out = np.full(n, _NAT, dtype="datetime64[s]")
            for i, r in enumerate(rows):
                v = r[j].strip()
                if not v:
                    continue
                try:
                    out[i] = parse(v)
                except ValueError:
                    bad[i] = True
            typed[col] = out.astype("datetime64[ns]")
            continue
        if kind == "range":
            out = np.full(n, None, dtype=object)
            for i, r in enumerate(rows):
                v = r[j].strip()
                if not v:
                    continue
                key = ("r", v)
                if key not in cache:
                    try:
                        cache[key] = parse_range(v)
                    except ParseError:
                        cache[key] = None
                parsed = cache[key]
                if parsed is None:
                    bad[i] = True
                else:
                    out[i] = parsed
            typed[col] = out
            continue
        raise ValueError(f"unknown column kind {kind!r}")
    return typed, bad


def _empty_table(schema: ExtractSchema) -> pd.DataFrame:
    cols = {}
    for col, kind in schema.columns:
        if kind in ("float", "scored"):
            cols[col] = pd.Series(dtype=float)
        elif kind in ("datetime", "date"):
            cols[col] = pd.Series(dtype="datetime64[ns]")
        else:
            cols[col] = pd.Series(dtype=object)
    return pd.DataFrame(cols)


def _load_table(path: Path, schema: ExtractSchema, report: QuarantineReport) -> pd.DataFrame:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(
                f"extract {schema.number} ({schema.name}): {path.name} has no header row"
            )
        expected = schema.column_names
        if header != expected:
            raise ValueError(
                f"extract {schema.number} ({schema.name}): header mismatch in {path.name}: "
                f"got {header}, expected {expected}"
            )
        rows: list[list[str]] = []
        for fields in reader:
            if len(fields) != len(expected):
                report.add(schema.number, ",".join(fields))
                continue
            rows.append(fields)

    if not rows:
        return _empty_table(schema)

    typed, bad = _coerce_rows(rows, schema)
    if bad.any():
        for i in np.nonzero(bad)[0]:
            report.add(schema.number, ",".join(rows[i]))
        keep = ~bad
        typed = {c: v[keep] for c, v in typed.items()}
    return pd.DataFrame(typed)


def load_bundle(
    root: str | Path, hospital: str, extract_date: date | str
) -> tuple[ExtractBundle, QuarantineReport]:
    """Load and type one hospital-date bundle.

    Malformed rows are quarantined (counted and sampled), never silently
    dropped; a missing file is a hard error naming the extract.
    """
    if isinstance(extract_date, str):
        extract_date = datetime.strptime(extract_date, DATE_FORMAT).date()
    directory = bundle_dir(root, hospital, extract_date)
    report = QuarantineReport()
    tables: dict[int, pd.DataFrame] = {}
    for number, schema in EXTRACT_SCHEMAS.items():
        path = directory / schema.filename
        if not path.exists():
            raise FileNotFoundError(
                f"extract {number} ({schema.name}) absent: {path}"
            )
        tables[number] = _load_table(path, schema, report)

    # bundle invariant: patient ids in tables 2-10 must appear in table 1 or 7
    known = set(tables[1]["patient_id"]) | set(tables[7]["patient_id"])
    for number in range(2, 11):
        if number == 7:
            continue
        table = tables[number]
        if table.empty:
            continue
        orphan = ~table["patient_id"].isin(known)
        if orphan.any():
            for _, row in table[orphan].iterrows():
                report.add(number, "orphan patient_id: " + ",".join(map(str, row.tolist())))
            tables[number] = table[~orphan].reset_index(drop=True)

    return ExtractBundle(hospital_id=hospital, extract_date=extract_date, tables=tables), report


@dataclass
class BundleHistory:
    """Concatenation of one hospital's daily bundles over a date range."""

    hospital_id: str
    dates: list[date]
    tables: dict[int, pd.DataFrame]
    quarantine: QuarantineReport

    @property
    def first_cut(self) -> pd.Timestamp:
        return pd.Timestamp(min(self.dates))

    @property
    def last_cut(self) -> pd.Timestamp:
        return pd.Timestamp(max(self.dates))


def load_history(root: str | Path, hospital: str, dates: list[date]) -> BundleHistory:
    """Load a range of bundles and concatenate per-table with provenance."""
    if not dates:
        raise ValueError("no dates to load")
    frames: dict[int, list[pd.DataFrame]] = {n: [] for n in EXTRACT_SCHEMAS}
    report = QuarantineReport()
    for d in sorted(dates):
        bundle, q = load_bundle(root, hospital, d)
        report.merge(q)
        for number, table in bundle.tables.items():
            t = table.copy()
            t["extract_date"] = pd.Timestamp(d)
            frames[number].append(t)
    tables = {}
    for n, fs in frames.items():
        nonempty = [f for f in fs if len(f)]
        tables[n] = (
            pd.concat(nonempty, ignore_index=True)
            if nonempty
            else pd.DataFrame(columns=list(EXTRACT_SCHEMAS[n].column_names) + ["extract_date"])
        )
    return BundleHistory(
        hospital_id=hospital, dates=sorted(dates), tables=tables, quarantine=report
    )


def available_dates(root: str | Path, hospital: str) -> list[date]:
    base = Path(root) / hospital
    if not base.exists():
        return []
    out = []
    for child in sorted(base.iterdir()):
        try:
            out.append(datetime.strptime(child.name, DATE_FORMAT).date())
        except ValueError:
            continue
    return out


def assemble_stays(history: BundleHistory) -> pd.DataFrame:
    """One row per stay: admission/discharge times, disposition, patient info.

    The exit row of table 7 (latest occurrence) carries the disposition;
    discharge_time comes from the exit row of table 5. Truncated stays keep
    NaT discharge and empty disposition.
    """
    t7 = history.tables[7]
    if t7.empty:
        return pd.DataFrame(
            columns=[
                "patient_id", "admission_time", "discharge_time", "disposition",
                "age", "sex", "patient_type", "previous_discharge_time", "previous_los",
            ]
        )
    last = t7.sort_values("extract_date").groupby("patient_id", as_index=False).last()
    t5 = history.tables[5]
    discharge = (
        t5[t5["discharge_time"].notna()]
        .groupby("patient_id", as_index=False)["discharge_time"]
        .max()
    )
    stays = last.merge(discharge, on="patient_id", how="left", suffixes=("", "_t5"))
    stays = stays.rename(columns={"discharge_disposition": "disposition"})
    if "discharge_time" not in stays.columns:
        stays["discharge_time"] = pd.NaT
    return stays[
        [
            "patient_id", "admission_time", "discharge_time", "disposition",
            "age", "sex", "patient_type", "previous_discharge_time", "previous_los",
        ]
    ]


def icu_intervals_from_events(
    events: pd.DataFrame, icu_departments: tuple[str, ...]
) -> dict[str, list[tuple[pd.Timestamp, pd.Timestamp]]]:
    """Per-patient [entry, exit) ICU intervals from the ADT event stream.

    An interval still open at the end of the event stream gets an open end
    (NaT), meaning "in the ICU from entry onward as far as the data shows".
    """
    icu_set = {d.upper() for d in icu_departments}
    intervals: dict[str, list[tuple[pd.Timestamp, pd.Timestamp]]] = {}
    if events.empty:
        return intervals
    ordered = events.sort_values(["patient_id", "event_time"], kind="stable")
    for pid, group in ordered.groupby("patient_id", sort=False):
        entry = None
        spans = []
        for _, row in group.iterrows():
            in_icu = str(row["department"]).upper() in icu_set and row["event_type"] != "discharge"
            if in_icu and entry is None:
                entry = row["event_time"]
            elif not in_icu and entry is not None:
                spans.append((entry, row["event_time"]))
                entry = None
        if entry is not None:
            spans.append((entry, pd.NaT))
        if spans:
            intervals[pid] = spans
    return intervals


def in_icu_at(
    intervals: dict[str, list[tuple[pd.Timestamp, pd.Timestamp]]],
    patient_id: str,
    at: pd.Timestamp,
) -> bool:
    for entry, exit_ in intervals.get(patient_id, []):
        if entry <= at and (pd.isna(exit_) or at < exit_):
            return True
    return False
