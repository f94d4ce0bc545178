"""Embedded single-file prediction store.

SQLite keyed by (hospital, patient, record_date); holds prediction records,
explanation payloads, daily-run manifests (append-only), feedback entries
(immutable), and the model registry (one active version per hospital-task).
Writes are atomic per (hospital, date); reads never mutate state.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

_SCHEMA = """
CREATE TABLE IF NOT EXISTS predictions (
    hospital TEXT NOT NULL,
    patient_id TEXT NOT NULL,
    record_date TEXT NOT NULL,
    department TEXT, unit TEXT, bed TEXT, service TEXT, level_of_care TEXT,
    probs TEXT NOT NULL,
    prev_probs TEXT,
    deltas TEXT,
    delta_arrow INTEGER NOT NULL DEFAULT 0,
    green INTEGER NOT NULL,
    red INTEGER NOT NULL,
    alert_reasons TEXT,
    edd TEXT,
    PRIMARY KEY (hospital, patient_id, record_date)
);
CREATE TABLE IF NOT EXISTS explanations (
    hospital TEXT NOT NULL,
    patient_id TEXT NOT NULL,
    record_date TEXT NOT NULL,
    task TEXT NOT NULL,
    payload TEXT NOT NULL,
    PRIMARY KEY (hospital, patient_id, record_date, task)
);
CREATE TABLE IF NOT EXISTS manifests (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_date TEXT NOT NULL,
    hospital TEXT NOT NULL,
    status TEXT NOT NULL,
    received_at TEXT,
    row_counts TEXT,
    quarantine TEXT,
    model_versions TEXT,
    records_written INTEGER NOT NULL DEFAULT 0,
    duration_seconds REAL,
    error TEXT,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    author TEXT NOT NULL,
    hospital TEXT NOT NULL,
    patient_id TEXT NOT NULL,
    record_date TEXT NOT NULL,
    task TEXT NOT NULL,
    comment TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS registry (
    hospital TEXT NOT NULL,
    task TEXT NOT NULL,
    version INTEGER NOT NULL,
    path TEXT NOT NULL,
    trained_range TEXT,
    validation_auc REAL,
    calibration_mse REAL,
    active INTEGER NOT NULL DEFAULT 1,
    created_at TEXT NOT NULL,
    PRIMARY KEY (hospital, task, version)
);
"""


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")


@dataclass
class StoredRecord:
    hospital: str
    patient_id: str
    record_date: str
    probs: dict
    department: str = ""
    unit: str = ""
    bed: str = ""
    service: str = ""
    level_of_care: str = ""
    prev_probs: dict | None = None
    deltas: dict | None = None
    delta_arrow: int = 0
    green: bool = False
    red: bool = False
    alert_reasons: list[str] = field(default_factory=list)
    edd: str | None = None

    def to_row(self) -> tuple:
        return (
            self.hospital, self.patient_id, self.record_date,
            self.department, self.unit, self.bed, self.service, self.level_of_care,
            json.dumps(self.probs, sort_keys=True),
            None if self.prev_probs is None else json.dumps(self.prev_probs, sort_keys=True),
            None if self.deltas is None else json.dumps(self.deltas, sort_keys=True),
            int(self.delta_arrow),
            int(self.green), int(self.red),
            json.dumps(self.alert_reasons),
            self.edd,
        )

    @classmethod
    def from_row(cls, row: sqlite3.Row) -> "StoredRecord":
        return cls(
            hospital=row["hospital"],
            patient_id=row["patient_id"],
            record_date=row["record_date"],
            department=row["department"] or "",
            unit=row["unit"] or "",
            bed=row["bed"] or "",
            service=row["service"] or "",
            level_of_care=row["level_of_care"] or "",
            probs=json.loads(row["probs"]),
            prev_probs=None if row["prev_probs"] is None else json.loads(row["prev_probs"]),
            deltas=None if row["deltas"] is None else json.loads(row["deltas"]),
            delta_arrow=row["delta_arrow"],
            green=bool(row["green"]),
            red=bool(row["red"]),
            alert_reasons=json.loads(row["alert_reasons"] or "[]"),
            edd=row["edd"],
        )


class PredictionStore:
    def __init__(self, path: str | Path):
        self.path = str(path)
        # API handlers run on a thread pool; the single-writer/multi-reader
        # contract makes a shared connection safe
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # ---- prediction records -------------------------------------------------

    def replace_day(
        self,
        hospital: str,
        record_date: str,
        records: list[StoredRecord],
        explanations: dict[tuple[str, str], dict] | None = None,
    ) -> int:
        """Atomically replace all records (and explanations) for one
        (hospital, date)."""
        cur = self._conn.cursor()
        try:
            cur.execute("BEGIN")
            cur.execute(
                "DELETE FROM predictions WHERE hospital=? AND record_date=?",
                (hospital, record_date),
            )
            cur.execute(
                "DELETE FROM explanations WHERE hospital=? AND record_date=?",
                (hospital, record_date),
            )
            cur.executemany(
                "INSERT INTO predictions VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                [r.to_row() for r in records],
            )
            if explanations:
                cur.executemany(
                    "INSERT INTO explanations VALUES (?,?,?,?,?)",
                    [
                        (hospital, pid, record_date, task, json.dumps(payload, sort_keys=True))
                        for (pid, task), payload in sorted(explanations.items())
                    ],
                )
            self._conn.commit()
        except Exception:
            self._conn.rollback()
            raise
        return len(records)

    def upsert_records(
        self,
        records: list[StoredRecord],
        explanations: dict[tuple[str, str, str, str], dict] | None = None,
    ) -> None:
        """Insert-or-replace individual records without touching other
        patients on the same date (fixture/repair path)."""
        cur = self._conn.cursor()
        try:
            cur.execute("BEGIN")
            cur.executemany(
                "INSERT OR REPLACE INTO predictions VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                [r.to_row() for r in records],
            )
            if explanations:
                cur.executemany(
                    "INSERT OR REPLACE INTO explanations VALUES (?,?,?,?,?)",
                    [
                        (h, pid, d, task, json.dumps(payload, sort_keys=True))
                        for (h, pid, d, task), payload in sorted(explanations.items())
                    ],
                )
            self._conn.commit()
        except Exception:
            self._conn.rollback()
            raise

    def latest_before(self, hospital: str, patient_id: str, record_date: str) -> StoredRecord | None:
        row = self._conn.execute(
            "SELECT * FROM predictions WHERE hospital=? AND patient_id=? AND record_date<? "
            "ORDER BY record_date DESC LIMIT 1",
            (hospital, patient_id, record_date),
        ).fetchone()
        return None if row is None else StoredRecord.from_row(row)

    def query_patients(
        self,
        hospital: str,
        record_date: str,
        department: str | None = None,
        alert: str | None = None,
        patient_id: str | None = None,
        unit: str | None = None,
        cursor: int = 0,
        page_size: int = 200,
    ) -> tuple[list[StoredRecord], int | None, str | None]:
        """Filter conjunction; stable (department, patient_id) order; cursor
        pagination. Unknown hospital yields an empty page with a warning."""
        known = self._conn.execute(
            "SELECT 1 FROM predictions WHERE hospital=? LIMIT 1", (hospital,)
        ).fetchone()
        warning = None if known else "unknown_hospital"
        clauses = ["hospital=?", "record_date=?"]
        args: list = [hospital, record_date]
        if department:
            clauses.append("department=?")
            args.append(department)
        if unit:
            clauses.append("unit=?")
            args.append(unit)
        if patient_id:
            clauses.append("patient_id=?")
            args.append(patient_id)
        if alert == "green":
            clauses.append("green=1")
        elif alert == "red":
            clauses.append("red=1")
        rows = self._conn.execute(
            f"SELECT * FROM predictions WHERE {' AND '.join(clauses)} "
            "ORDER BY department, patient_id LIMIT ? OFFSET ?",
            args + [page_size + 1, cursor],
        ).fetchall()
        next_cursor = cursor + page_size if len(rows) > page_size else None
        return [StoredRecord.from_row(r) for r in rows[:page_size]], next_cursor, warning

    def get_trajectory(self, hospital: str, patient_id: str) -> list[StoredRecord]:
        rows = self._conn.execute(
            "SELECT * FROM predictions WHERE hospital=? AND patient_id=? ORDER BY record_date",
            (hospital, patient_id),
        ).fetchall()
        return [StoredRecord.from_row(r) for r in rows]

    def get_record(self, hospital: str, patient_id: str, record_date: str) -> StoredRecord | None:
        row = self._conn.execute(
            "SELECT * FROM predictions WHERE hospital=? AND patient_id=? AND record_date=?",
            (hospital, patient_id, record_date),
        ).fetchone()
        return None if row is None else StoredRecord.from_row(row)

    def get_explanation(
        self, hospital: str, patient_id: str, record_date: str, task: str
    ) -> dict | None:
        row = self._conn.execute(
            "SELECT payload FROM explanations WHERE hospital=? AND patient_id=? "
            "AND record_date=? AND task=?",
            (hospital, patient_id, record_date, task),
        ).fetchone()
        return None if row is None else json.loads(row["payload"])

    def dates(self, hospital: str | None = None) -> list[str]:
        if hospital:
            rows = self._conn.execute(
                "SELECT DISTINCT record_date FROM predictions WHERE hospital=? ORDER BY record_date",
                (hospital,),
            )
        else:
            rows = self._conn.execute(
                "SELECT DISTINCT record_date FROM predictions ORDER BY record_date"
            )
        return [r[0] for r in rows]

    # ---- manifests ------------------------------------------------------------

    def add_manifest(self, **fields) -> int:
        cols = (
            "run_date", "hospital", "status", "received_at", "row_counts",
            "quarantine", "model_versions", "records_written", "duration_seconds", "error",
        )
        values = [fields.get(c) for c in cols]
        if values[cols.index("records_written")] is None:
            values[cols.index("records_written")] = 0
        for c in ("row_counts", "quarantine", "model_versions"):
            j = cols.index(c)
            if values[j] is not None and not isinstance(values[j], str):
                values[j] = json.dumps(values[j], sort_keys=True)
        cur = self._conn.execute(
            f"INSERT INTO manifests ({','.join(cols)},created_at) "
            f"VALUES ({','.join('?' * len(cols))},?)",
            values + [_now()],
        )
        self._conn.commit()
        return int(cur.lastrowid)

    def manifests(self, hospital: str | None = None) -> list[dict]:
        q = "SELECT * FROM manifests"
        args: tuple = ()
        if hospital:
            q += " WHERE hospital=?"
            args = (hospital,)
        q += " ORDER BY id"
        return [dict(r) for r in self._conn.execute(q, args)]

    # ---- feedback ------------------------------------------------------------

    def add_feedback(
        self, author: str, hospital: str, patient_id: str, record_date: str,
        task: str, comment: str,
    ) -> int:
        if self.get_record(hospital, patient_id, record_date) is None:
            raise KeyError(
                f"no prediction record for ({hospital}, {patient_id}, {record_date})"
            )
        cur = self._conn.execute(
            "INSERT INTO feedback (author,hospital,patient_id,record_date,task,comment,created_at) "
            "VALUES (?,?,?,?,?,?,?)",
            (author, hospital, patient_id, record_date, task, comment, _now()),
        )
        self._conn.commit()
        return int(cur.lastrowid)

    def list_feedback(self, hospital: str, patient_id: str, record_date: str) -> list[dict]:
        rows = self._conn.execute(
            "SELECT * FROM feedback WHERE hospital=? AND patient_id=? AND record_date=? ORDER BY id",
            (hospital, patient_id, record_date),
        )
        return [dict(r) for r in rows]

    # ---- model registry ---------------------------------------------------------

    def register_model(
        self, hospital: str, task: str, path: str, trained_range: str = "",
        validation_auc: float | None = None, calibration_mse: float | None = None,
    ) -> int:
        cur = self._conn.cursor()
        try:
            cur.execute("BEGIN")
            row = cur.execute(
                "SELECT MAX(version) FROM registry WHERE hospital=? AND task=?",
                (hospital, task),
            ).fetchone()
            version = (row[0] or 0) + 1
            cur.execute(
                "UPDATE registry SET active=0 WHERE hospital=? AND task=?", (hospital, task)
            )
            cur.execute(
                "INSERT INTO registry VALUES (?,?,?,?,?,?,?,1,?)",
                (hospital, task, version, path, trained_range,
                 validation_auc, calibration_mse, _now()),
            )
            self._conn.commit()
        except Exception:
            self._conn.rollback()
            raise
        return version

    def active_model(self, hospital: str, task: str) -> dict | None:
        row = self._conn.execute(
            "SELECT * FROM registry WHERE hospital=? AND task=? AND active=1",
            (hospital, task),
        ).fetchone()
        return None if row is None else dict(row)

    def update_calibration_mse(self, hospital: str, task: str, mse: float | None) -> None:
        self._conn.execute(
            "UPDATE registry SET calibration_mse=? WHERE hospital=? AND task=? AND active=1",
            (mse, hospital, task),
        )
        self._conn.commit()

    def registry_entries(self) -> list[dict]:
        return [dict(r) for r in self._conn.execute("SELECT * FROM registry ORDER BY hospital, task, version")]

    # ---- integrity ------------------------------------------------------------

    def content_hash(self, tables: tuple[str, ...] = ("predictions", "explanations", "feedback")) -> str:
        """Deterministic digest of logical content (manifests excluded by
        default: they are an append-only attempt log)."""
        h = hashlib.sha256()
        for table in tables:
            h.update(table.encode())
            order = {
                "predictions": "hospital, patient_id, record_date",
                "explanations": "hospital, patient_id, record_date, task",
                "feedback": "id",
                "manifests": "id",
                "registry": "hospital, task, version",
            }[table]
            for row in self._conn.execute(f"SELECT * FROM {table} ORDER BY {order}"):
                h.update(repr(tuple(row)).encode())
        return h.hexdigest()
