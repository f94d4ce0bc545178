"""HTTP+JSON API over the prediction store.

Read endpoints never mutate state; writes are feedback posts and the admin
run-daily trigger. Auth is a static bearer token. Dates are ISO-8601,
probabilities carry 4 fractional digits, alert colors are the enum strings
"green" / "red".
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..alerts import DEFAULT_CONFIG
from .pipeline import run_daily
from .store import PredictionStore, StoredRecord

DEFAULT_TOKEN = "wardflow-dev-token"


def _round_probs(value):
    if value is None:
        return None
    if isinstance(value, list):
        return [None if v is None else round(float(v), 4) for v in value]
    return round(float(value), 4)


def record_payload(r: StoredRecord) -> dict:
    colors = []
    if r.green:
        colors.append("green")
    if r.red:
        colors.append("red")
    return {
        "hospital": r.hospital,
        "patient_id": r.patient_id,
        "record_date": r.record_date,
        "department": r.department,
        "unit": r.unit,
        "bed": r.bed,
        "service": r.service,
        "level_of_care": r.level_of_care,
        "probabilities": {k: _round_probs(v) for k, v in r.probs.items()},
        "previous_probabilities": None
        if r.prev_probs is None
        else {k: _round_probs(v) for k, v in r.prev_probs.items()},
        "deltas": None if r.deltas is None else {k: _round_probs(v) for k, v in r.deltas.items()},
        "delta_arrow": r.delta_arrow,
        "alerts": colors,
        "alert_reasons": r.alert_reasons,
        "edd": r.edd,
    }


class FeedbackIn(BaseModel):
    author: str = Field(min_length=1)
    hospital: str
    patient_id: str
    record_date: str
    task: str
    comment: str = Field(min_length=1)


class RunDailyIn(BaseModel):
    hospital: str
    date: str


def create_app(
    store_path: str | Path,
    token: str = DEFAULT_TOKEN,
    extract_root: str | Path | None = None,
    artifacts_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="wardflow", version="0.1.0")
    store = PredictionStore(store_path)
    app.state.store = store

    def require_token(authorization: str = Header(default="")) -> None:
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    auth = Depends(require_token)

    @app.get("/api/v1/patients", dependencies=[auth])
    def patients(
        hospital: str,
        date: str,
        department: str | None = None,
        alert: str | None = None,
        patient_id: str | None = None,
        unit: str | None = None,
        cursor: int = Query(default=0, ge=0),
        page_size: int = Query(default=200, ge=1, le=1000),
    ):
        if alert is not None and alert not in ("green", "red"):
            raise HTTPException(status_code=422, detail="alert must be 'green' or 'red'")
        records, next_cursor, warning = store.query_patients(
            hospital, date, department=department, alert=alert,
            patient_id=patient_id, unit=unit, cursor=cursor, page_size=page_size,
        )
        return {
            "records": [record_payload(r) for r in records],
            "next_cursor": next_cursor,
            "warning": warning,
        }

    @app.get("/api/v1/patients/{patient_id}/trajectory", dependencies=[auth])
    def trajectory(patient_id: str, hospital: str):
        records = store.get_trajectory(hospital, patient_id)
        if not records:
            raise HTTPException(status_code=404, detail="patient not found")
        return {"records": [record_payload(r) for r in records]}

    @app.get(
        "/api/v1/explanations/{hospital}/{patient_id}/{record_date}/{task}",
        dependencies=[auth],
    )
    def explanation(hospital: str, patient_id: str, record_date: str, task: str):
        payload = store.get_explanation(hospital, patient_id, record_date, task)
        if payload is None:
            raise HTTPException(status_code=404, detail="explanation not found")
        parts = payload["base_value"] + sum(i["contribution"] for i in payload["items"])
        if abs(parts + payload["remainder"] - payload["prediction"]) > 1e-9:
            raise HTTPException(status_code=500, detail="explanation fails additivity")
        return payload

    @app.post("/api/v1/feedback", dependencies=[auth], status_code=201)
    def post_feedback(body: FeedbackIn):
        try:
            fid = store.add_feedback(
                body.author, body.hospital, body.patient_id,
                body.record_date, body.task, body.comment,
            )
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"id": fid}

    @app.get("/api/v1/feedback", dependencies=[auth])
    def list_feedback(hospital: str, patient_id: str, record_date: str):
        return {"entries": store.list_feedback(hospital, patient_id, record_date)}

    @app.post("/api/v1/admin/run-daily", dependencies=[auth])
    def admin_run_daily(body: RunDailyIn):
        if extract_root is None or artifacts_dir is None:
            raise HTTPException(
                status_code=503, detail="server not configured with extracts/artifacts"
            )
        result = run_daily(
            extract_root, body.hospital, body.date, store, artifacts_dir,
            alert_config=DEFAULT_CONFIG,
        )
        return result

    @app.get("/api/v1/manifests", dependencies=[auth])
    def manifests(hospital: str | None = None):
        return {"manifests": store.manifests(hospital)}

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="app")

    return app
