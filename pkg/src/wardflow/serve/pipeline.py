"""Daily batch orchestration: train per-hospital per-task models, then score
each day's census (extract -> featurize -> score -> calibrate -> attribute ->
alert -> persist)."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .. import alerts as alerts_mod
from ..calibrate import (
    IsotonicModel,
    apply_isotonic_ovr,
    assess,
    fit_isotonic,
    fit_isotonic_ovr,
    split_test_halves,
)
from ..cohort import (
    ALL_TASKS,
    ICU_TASKS,
    LabeledDataset,
    TargetTask,
    build_context,
    build_labels,
    chronological_split,
    split_date_masks,
)
from ..evalmetrics import auc, ovr_auc
from ..extracts import DATE_FORMAT, available_dates, load_bundle, load_history
from ..featurize import FeatureMatrix, FeaturePipeline, build_features, census_info
from ..gbdt import Ensemble, Hyperparams, fit
from ..hospitals import HospitalProfile, default_roster
from ..shapley import attribute, waterfall
from .store import PredictionStore, StoredRecord

DEFAULT_LOOKBACK_DAYS = 40
BACKGROUND_ROWS = 256
# modeling rows stop this many days before the data ends so end-of-stay
# outcomes for nearly every included day are observed (no censoring bias)
DEFAULT_CENSOR_MARGIN_DAYS = 18

DEFAULT_HYPERPARAMS = {
    "default": Hyperparams(max_depth=3, learning_rate=0.3, n_estimators=50),
    TargetTask.DISPOSITION.value: Hyperparams(
        max_depth=3, learning_rate=0.3, n_estimators=35, loss="softmax"
    ),
}


def roster_profile(hospital: str) -> HospitalProfile | None:
    for p in default_roster():
        if p.hospital_id == hospital:
            return p
    return None


def _task_hp(task: TargetTask, overrides: dict | None) -> Hyperparams:
    if overrides and task.value in overrides:
        return overrides[task.value]
    if task is TargetTask.DISPOSITION:
        return DEFAULT_HYPERPARAMS[TargetTask.DISPOSITION.value]
    if overrides and "default" in overrides:
        return overrides["default"]
    return DEFAULT_HYPERPARAMS["default"]


def _align_rows(full: FeatureMatrix, ds: LabeledDataset) -> np.ndarray:
    rows = pd.MultiIndex.from_arrays(
        [ds.index["patient_id"], pd.to_datetime(ds.index["record_date"])]
    )
    X = full.frame.reindex(rows)
    if X.isna().any().any():
        raise ValueError("labeled rows missing from the feature matrix")
    return X.to_numpy(dtype=float)


@dataclass
class ModelBundle:
    """A model artifact: ensemble, calibrator(s), background sample."""

    ensemble: Ensemble
    calibrators: list[IsotonicModel]
    background: np.ndarray

    def calibrated(self, X: np.ndarray) -> np.ndarray:
        raw = self.ensemble.predict_proba(X)
        if self.ensemble.hp.loss == "logistic":
            return self.calibrators[0].apply(raw)
        return apply_isotonic_ovr(self.calibrators, raw)

    def save(self, path: str | Path) -> None:
        d = self.ensemble.to_dict()
        d["calibrators"] = [c.to_dict() for c in self.calibrators]
        d["background"] = np.round(self.background, 6).tolist()
        Path(path).write_text(json.dumps(d, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        calibrators = [IsotonicModel.from_dict(c) for c in d.pop("calibrators")]
        background = np.array(d.pop("background"), dtype=float)
        return cls(
            ensemble=Ensemble.from_dict(d), calibrators=calibrators, background=background
        )


def applicable_tasks(hospital: str, has_icu: bool | None = None) -> list[TargetTask]:
    if has_icu is None:
        profile = roster_profile(hospital)
        has_icu = profile.has_icu if profile is not None else True
    return [t for t in ALL_TASKS if has_icu or t not in ICU_TASKS]


@dataclass
class TrainedTask:
    task: str
    version: int
    validation_auc: float | None
    calibration_mse: float | None
    n_train: int
    n_valid: int
    n_test: int
    artifact_path: str


def modeling_dates(dates: list[date], censor_margin_days: int) -> list[date]:
    """Dates whose rows enter modeling: everything except the trailing
    censor margin (kept short of the data end so stays complete)."""
    if censor_margin_days <= 0 or len(dates) <= censor_margin_days + 3:
        return list(dates)
    cutoff = dates[-1] - timedelta(days=censor_margin_days)
    return [d for d in dates if d <= cutoff]


def train_hospital(
    extract_root: str | Path,
    hospital: str,
    store: PredictionStore,
    artifacts_dir: str | Path,
    tasks: list[TargetTask] | None = None,
    hp_overrides: dict | None = None,
    fractions: tuple[float, float, float] = (0.5, 0.2, 0.3),
    has_icu: bool | None = None,
    censor_margin_days: int = DEFAULT_CENSOR_MARGIN_DAYS,
) -> list[TrainedTask]:
    """Fit the feature pipeline and one model per applicable task, calibrate
    on the first test half, assess on the second, persist and register."""
    artifacts_dir = Path(artifacts_dir)
    artifacts_dir.mkdir(parents=True, exist_ok=True)
    dates = available_dates(extract_root, hospital)
    if not dates:
        raise FileNotFoundError(f"no extracts found for hospital {hospital}")
    history = load_history(extract_root, hospital, dates)
    usable = modeling_dates(dates, censor_margin_days)
    raw = build_features(history, dates=[pd.Timestamp(d) for d in usable])
    masks = split_date_masks(raw.frame.index.get_level_values("record_date"), fractions)
    trained_range = f"{usable[0].strftime(DATE_FORMAT)}..{usable[-1].strftime(DATE_FORMAT)}"

    pipe = FeaturePipeline(hospital_id=hospital, fitted_on=trained_range)
    full = pipe.fit_transform(raw, masks["train"])
    pipe_path = artifacts_dir / f"{hospital}_pipeline.json"
    pipe.save(pipe_path)

    ctx = build_context(history, has_icu=has_icu if has_icu is not None else None)
    cutoff = pd.Timestamp(usable[-1])
    ctx.patient_days = ctx.patient_days[ctx.patient_days["record_date"] <= cutoff]
    profile = roster_profile(hospital)
    if has_icu is None and profile is not None:
        ctx.has_icu = profile.has_icu
    requested = tasks or applicable_tasks(hospital, ctx.has_icu)
    feature_names = list(full.frame.columns)

    results: list[TrainedTask] = []
    for task in requested:
        task = TargetTask(task)
        if task in ICU_TASKS and not ctx.has_icu:
            continue
        try:
            ds = chronological_split(build_labels(task, ctx), fractions)
        except ValueError:
            # too little data to split chronologically; leave unmodeled
            continue
        X = _align_rows(full, ds)
        y = ds.labels
        tr, va, te = ds.rows("train"), ds.rows("valid"), ds.rows("test")
        hp = _task_hp(task, hp_overrides)
        ens, _ = fit(
            X[tr], y[tr], hp, feature_names=feature_names, hospital=hospital, task=task.value
        )
        ens.metadata["trained_range"] = trained_range
        ens.metadata["schema_hash"] = pipe.schema_hash

        probs_valid = ens.predict_proba(X[va])
        if hp.loss == "logistic":
            v_auc = auc(probs_valid, y[va]).auc if len(np.unique(y[va])) > 1 else None
        else:
            v_auc = ovr_auc(probs_valid, y[va])["macro"]

        # isotonic calibration on the first chronological test half
        te_dates = ds.index["record_date"][te].to_numpy()
        mse = None
        probs_test = ens.predict_proba(X[te])
        try:
            cal_m, ass_m = split_test_halves(te_dates)
            if hp.loss == "logistic":
                calibrators = [fit_isotonic(probs_test[cal_m], y[te][cal_m])]
                assessed = calibrators[0].apply(probs_test[ass_m])
                _, mse = assess(assessed, y[te][ass_m])
            else:
                calibrators = fit_isotonic_ovr(probs_test[cal_m], y[te][cal_m])
                cal = apply_isotonic_ovr(calibrators, probs_test[ass_m])
                mses = []
                for c in range(cal.shape[1]):
                    _, m = assess(cal[:, c], (y[te][ass_m] == c).astype(int))
                    if m is not None:
                        mses.append(m)
                mse = float(np.mean(mses)) if mses else None
        except ValueError:
            # not enough test data to calibrate: identity calibrator
            if hp.loss == "logistic":
                calibrators = [IsotonicModel(np.array([0.0, 1.0]), np.array([0.0, 1.0]))]
            else:
                calibrators = [
                    IsotonicModel(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
                    for _ in range(ens.n_classes)
                ]

        background = X[tr][:BACKGROUND_ROWS]
        bundle = ModelBundle(ensemble=ens, calibrators=calibrators, background=background)
        path = artifacts_dir / f"{hospital}_{task.value}.json"
        bundle.save(path)
        version = store.register_model(
            hospital, task.value, str(path), trained_range=trained_range,
            validation_auc=v_auc, calibration_mse=mse,
        )
        results.append(
            TrainedTask(
                task=task.value, version=version, validation_auc=v_auc,
                calibration_mse=mse, n_train=int(tr.sum()), n_valid=int(va.sum()),
                n_test=int(te.sum()), artifact_path=str(path),
            )
        )
    return results


def load_models(store: PredictionStore, hospital: str, tasks: list[TargetTask]) -> dict[str, ModelBundle]:
    out = {}
    for task in tasks:
        entry = store.active_model(hospital, task.value)
        if entry is None:
            raise KeyError(f"no active model registered for ({hospital}, {task.value})")
        out[task.value] = ModelBundle.load(entry["path"])
    return out


def _round4(x: float) -> float:
    return float(np.round(float(x), 4))


def run_daily(
    extract_root: str | Path,
    hospital: str,
    run_date: date | str,
    store: PredictionStore,
    artifacts_dir: str | Path,
    lookback_days: int = DEFAULT_LOOKBACK_DAYS,
    alert_config: alerts_mod.AlertConfig = alerts_mod.DEFAULT_CONFIG,
    has_icu: bool | None = None,
) -> dict:
    """Score one (hospital, date): one record per current inpatient, with
    calibrated probabilities, deltas vs the prior stored record, alert flags,
    and per-task explanation payloads. Idempotent per (hospital, date)."""
    if isinstance(run_date, str):
        run_date = date.fromisoformat(run_date)
    t_start = time.time()
    day_str = run_date.strftime(DATE_FORMAT)

    def failed(error: str) -> dict:
        store.add_manifest(
            run_date=day_str, hospital=hospital, status="failed", error=error,
            duration_seconds=round(time.time() - t_start, 3),
        )
        return {"status": "failed", "error": error, "records_written": 0}

    try:
        bundle, quarantine = load_bundle(extract_root, hospital, run_date)
    except FileNotFoundError as exc:
        return failed(str(exc))

    tasks = applicable_tasks(hospital, has_icu)
    try:
        models = load_models(store, hospital, tasks)
    except KeyError as exc:
        return failed(str(exc))
    pipe_path = Path(artifacts_dir) / f"{hospital}_pipeline.json"
    if not pipe_path.exists():
        return failed(f"feature pipeline artifact missing: {pipe_path}")
    pipe = FeaturePipeline.load(pipe_path)

    all_dates = available_dates(extract_root, hospital)
    window = [d for d in all_dates if run_date - timedelta(days=lookback_days) <= d <= run_date]
    history = load_history(extract_root, hospital, window)
    # deltas and stay-cumulative features need the trailing window, so the
    # whole window is featurized and today's rows selected after the transform
    raw = build_features(history)
    today = raw.frame.index.get_level_values("record_date") == pd.Timestamp(run_date)
    if not today.any():
        store.replace_day(hospital, day_str, [], {})
        store.add_manifest(
            run_date=day_str, hospital=hospital, status="ok",
            row_counts={str(k): int(len(v)) for k, v in bundle.tables.items()},
            quarantine=quarantine.counts, records_written=0,
            duration_seconds=round(time.time() - t_start, 3),
        )
        return {"status": "ok", "records_written": 0}

    window_matrix = pipe.transform(raw)
    frame = window_matrix.frame[
        window_matrix.frame.index.get_level_values("record_date") == pd.Timestamp(run_date)
    ]
    X = frame.to_numpy(dtype=float)
    pids = frame.index.get_level_values("patient_id").to_numpy()
    in_icu = frame["in_icu"].to_numpy() > 0.5

    info = census_info(history, as_of=pd.Timestamp(run_date)).set_index("patient_id")
    info = info.reindex(pids)

    # per-task calibrated probabilities and attributions for eligible rows
    probs: dict[str, np.ndarray | None] = {}
    payloads: dict[tuple[str, str], dict] = {}
    eligibility = {t.value: np.ones(len(X), dtype=bool) for t in tasks}
    for t in tasks:
        if t in (TargetTask.ENTER_ICU_24, TargetTask.ENTER_ICU_48):
            eligibility[t.value] = ~in_icu
        elif t in (TargetTask.LEAVE_ICU_24, TargetTask.LEAVE_ICU_48):
            eligibility[t.value] = in_icu

    feature_values = frame
    for t in tasks:
        mb = models[t.value]
        mask = eligibility[t.value]
        if mask.sum() == 0:
            probs[t.value] = None
            continue
        cal = mb.calibrated(X[mask])
        col = np.full((len(X),) + cal.shape[1:], np.nan)
        col[mask] = cal
        probs[t.value] = col
        rows = np.nonzero(mask)[0]
        if t is TargetTask.DISPOSITION:
            # explain each row's predicted class
            predicted = np.argmax(cal, axis=1)
            for cls in np.unique(predicted):
                sub = rows[predicted == cls]
                atts = attribute(
                    mb.ensemble, X[sub], mb.background,
                    scale="probability", class_index=int(cls),
                )
                for att, r in zip(atts, sub):
                    att.check_additivity(1e-9)
                    payload = waterfall(
                        att, top_k=10, feature_values=feature_values.iloc[r].to_numpy()
                    )
                    payload["class_index"] = int(cls)
                    payloads[(str(pids[r]), t.value)] = payload
        else:
            atts = attribute(mb.ensemble, X[mask], mb.background, scale="probability")
            for att, r in zip(atts, rows):
                att.check_additivity(1e-9)  # production additivity guarantee
                payload = waterfall(
                    att, top_k=10, feature_values=feature_values.iloc[r].to_numpy()
                )
                payloads[(str(pids[r]), t.value)] = payload

    records: list[StoredRecord] = []
    for i, pid in enumerate(pids):
        # every record carries all eight task fields; non-applicable ones null
        record_probs: dict = {t.value: None for t in ALL_TASKS}
        for t in tasks:
            col = probs[t.value]
            if col is None or np.isnan(np.atleast_1d(col[i])).any():
                record_probs[t.value] = None
            elif t is TargetTask.DISPOSITION:
                record_probs[t.value] = [_round4(v) for v in col[i]]
            else:
                record_probs[t.value] = _round4(col[i])
        prev = store.latest_before(hospital, str(pid), day_str)
        prev_probs = prev.probs if prev is not None else None
        deltas = None
        delta_arrow = 0
        p_mort_prev = None
        if prev_probs is not None:
            deltas = {}
            for key, value in record_probs.items():
                pv = prev_probs.get(key)
                if value is None or pv is None or isinstance(value, list):
                    deltas[key] = None
                else:
                    deltas[key] = _round4(value - pv)
            d48 = deltas.get(TargetTask.DISCHARGE_48.value)
            if d48 is not None and abs(d48) >= 0.1:
                delta_arrow = 1 if d48 > 0 else -1
            p_mort_prev = prev_probs.get(TargetTask.MORTALITY.value)

        flags = alerts_mod.evaluate(
            p24=record_probs.get(TargetTask.DISCHARGE_24.value) or 0.0,
            p48=record_probs.get(TargetTask.DISCHARGE_48.value) or 0.0,
            p_mort=record_probs.get(TargetTask.MORTALITY.value) or 0.0,
            p_mort_prev=p_mort_prev,
            cfg=alert_config,
        )
        meta = info.iloc[i]
        edd = meta["edd"]
        records.append(
            StoredRecord(
                hospital=hospital,
                patient_id=str(pid),
                record_date=day_str,
                department=str(meta["department"]),
                unit=str(meta["unit"]),
                bed=str(meta["bed"]),
                service=str(meta["service"]),
                level_of_care=str(meta["level_of_care"]),
                probs=record_probs,
                prev_probs=prev_probs,
                deltas=deltas,
                delta_arrow=delta_arrow,
                green=flags.green,
                red=flags.red,
                alert_reasons=flags.reasons,
                edd=None if pd.isna(edd) else pd.Timestamp(edd).strftime(DATE_FORMAT),
            )
        )

    written = store.replace_day(hospital, day_str, records, payloads)
    versions = {
        t.value: (store.active_model(hospital, t.value) or {}).get("version") for t in tasks
    }
    store.add_manifest(
        run_date=day_str, hospital=hospital, status="ok",
        received_at=day_str + "T07:40",
        row_counts={str(k): int(len(v)) for k, v in bundle.tables.items()},
        quarantine=quarantine.counts,
        model_versions=versions,
        records_written=written,
        duration_seconds=round(time.time() - t_start, 3),
    )
    return {"status": "ok", "records_written": written}


# ---------------------------------------------------------------------------
# golden trajectory fixture: the example stay used across tests and demos
# ---------------------------------------------------------------------------


def golden_trajectory() -> list[dict]:
    """Scripted 7-day stay: deterioration peaking at 0.2382 on day 3 (red),
    recovery with green alerts on the final two days, discharged home with
    services."""
    days = [
        ("2023-03-22", 0.05, 0.04, 0.10, [0.05, 0.25, 0.70]),
        ("2023-03-23", 0.0702, 0.03, 0.08, [0.07, 0.23, 0.70]),
        ("2023-03-24", 0.2382, 0.02, 0.05, [0.24, 0.16, 0.60]),
        ("2023-03-25", 0.15, 0.05, 0.12, [0.15, 0.20, 0.65]),
        ("2023-03-26", 0.09, 0.10, 0.29, [0.09, 0.23, 0.68]),
        ("2023-03-27", 0.06, 0.22, 0.47, [0.06, 0.25, 0.69]),
        ("2023-03-28", 0.04, 0.41, 0.66, [0.04, 0.26, 0.70]),
    ]
    return [
        {
            "record_date": d,
            "mortality": m,
            "discharge_24": p24,
            "discharge_48": p48,
            "disposition": dispo,
        }
        for d, m, p24, p48, dispo in days
    ]


def install_golden_fixture(
    store: PredictionStore,
    hospital: str = "HA",
    patient_id: str = "HA-GOLD01",
    cfg: alerts_mod.AlertConfig = alerts_mod.DEFAULT_CONFIG,
) -> list[StoredRecord]:
    """Persist the golden stay day by day, computing alerts and deltas the
    same way the daily batch does."""
    records = []
    prev: dict | None = None
    for day in golden_trajectory():
        probs = {
            "mortality": day["mortality"],
            "discharge_24": day["discharge_24"],
            "discharge_48": day["discharge_48"],
            "disposition": day["disposition"],
            "enter_icu_24": None,
            "enter_icu_48": None,
            "leave_icu_24": None,
            "leave_icu_48": None,
        }
        deltas = None
        arrow = 0
        p_prev = None
        if prev is not None:
            deltas = {
                k: (_round4(v - prev[k]) if isinstance(v, float) and isinstance(prev.get(k), float) else None)
                for k, v in probs.items()
            }
            d48 = deltas.get("discharge_48")
            if d48 is not None and abs(d48) >= 0.1:
                arrow = 1 if d48 > 0 else -1
            p_prev = prev["mortality"]
        flags = alerts_mod.evaluate(
            p24=probs["discharge_24"], p48=probs["discharge_48"],
            p_mort=probs["mortality"], p_mort_prev=p_prev, cfg=cfg,
        )
        rec = StoredRecord(
            hospital=hospital,
            patient_id=patient_id,
            record_date=day["record_date"],
            department="MED",
            unit="MED 1",
            bed="MED 1-07",
            service="Hospital Medicine",
            level_of_care="General",
            probs=probs,
            prev_probs=prev,
            deltas=deltas,
            delta_arrow=arrow,
            green=flags.green,
            red=flags.red,
            alert_reasons=flags.reasons,
            edd="2023-03-28",
        )
        records.append(rec)
        prev = probs
    store.upsert_records(records)
    return records
