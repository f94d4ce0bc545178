"""Out-of-sample evaluation bundle: AUC table, calibration MSEs, alert
metrics and threshold sweeps, doctor-EDD comparison with AND/OR combination,
and the readmission association analyses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..alerts import (
    DEFAULT_CONFIG,
    LEGACY_GREEN_CONFIG,
    alert_metrics,
    green_mask,
    red_mask,
    sweep_green,
    sweep_red,
)
from ..calibrate import apply_isotonic_ovr, assess, split_test_halves
from ..cohort import (
    TargetTask,
    build_context,
    build_labels,
    chronological_split,
    disposition_class,
)
from ..evalmetrics import auc, doctor_score, ovr_auc, combine_doctor_green, readmission_analysis
from ..extracts import available_dates, load_history
from ..featurize import FeaturePipeline, build_features, census_info
from .pipeline import ModelBundle, applicable_tasks, roster_profile
from .store import PredictionStore


@dataclass
class HospitalEvaluation:
    hospital: str
    auc_by_task: dict[str, float | None]
    calibration_mse: dict[str, float | None]
    calibration_points: pd.DataFrame
    alert_table: pd.DataFrame
    green_sweep: pd.DataFrame
    red_sweep: pd.DataFrame
    doctor_table: pd.DataFrame
    readmission: dict
    cohort_manifest: pd.DataFrame
    notes: list[str] = field(default_factory=list)


def _frame_key(index: pd.DataFrame) -> pd.MultiIndex:
    return pd.MultiIndex.from_arrays(
        [index["patient_id"], pd.to_datetime(index["record_date"])]
    )


def evaluate_hospital(
    extract_root: str | Path,
    hospital: str,
    store: PredictionStore,
    artifacts_dir: str | Path,
    fractions: tuple[float, float, float] = (0.5, 0.2, 0.3),
    censor_margin_days: int | None = None,
) -> HospitalEvaluation:
    from .pipeline import DEFAULT_CENSOR_MARGIN_DAYS, modeling_dates

    if censor_margin_days is None:
        censor_margin_days = DEFAULT_CENSOR_MARGIN_DAYS
    dates = available_dates(extract_root, hospital)
    history = load_history(extract_root, hospital, dates)
    pipe = FeaturePipeline.load(Path(artifacts_dir) / f"{hospital}_pipeline.json")
    usable = modeling_dates(dates, censor_margin_days)
    raw = build_features(history, dates=[pd.Timestamp(d) for d in usable])
    full = pipe.transform(raw)
    ctx = build_context(history)
    ctx.patient_days = ctx.patient_days[
        ctx.patient_days["record_date"] <= pd.Timestamp(usable[-1])
    ]
    profile = roster_profile(hospital)
    if profile is not None:
        ctx.has_icu = profile.has_icu
    tasks = applicable_tasks(hospital, ctx.has_icu)

    datasets: dict[str, object] = {}
    bundles: dict[str, ModelBundle] = {}
    auc_by_task: dict[str, float | None] = {}
    calibration_mse: dict[str, float | None] = {}
    calibration_points: list[pd.DataFrame] = []
    manifests = []
    notes: list[str] = []

    for task in tasks:
        entry = store.active_model(hospital, task.value)
        if entry is None:
            notes.append(f"no model for {task.value}; skipped")
            continue
        mb = ModelBundle.load(entry["path"])
        try:
            ds = chronological_split(build_labels(task, ctx), fractions)
        except ValueError as exc:
            notes.append(f"{task.value}: {exc}")
            continue
        datasets[task.value] = ds
        bundles[task.value] = mb
        manifests.append(ds.manifest())
        key = _frame_key(ds.index)
        X = full.frame.reindex(key).to_numpy(dtype=float)
        te = ds.rows("test")
        y = ds.labels
        raw_probs = mb.ensemble.predict_proba(X[te])
        if mb.ensemble.hp.loss == "logistic":
            auc_by_task[task.value] = auc(raw_probs, y[te]).auc
        else:
            auc_by_task[task.value] = ovr_auc(raw_probs, y[te])["macro"]

        # calibration MSE on the assessment half
        te_dates = ds.index["record_date"][te].to_numpy()
        try:
            cal_m, ass_m = split_test_halves(te_dates)
            if mb.ensemble.hp.loss == "logistic":
                assessed = mb.calibrators[0].apply(raw_probs[ass_m])
                curve, mse = assess(assessed, y[te][ass_m])
                pts = curve.points()
                pts.insert(0, "task", task.value)
                calibration_points.append(pts)
            else:
                cal = apply_isotonic_ovr(mb.calibrators, raw_probs[ass_m])
                mses = []
                for c in range(cal.shape[1]):
                    curve, m = assess(cal[:, c], (y[te][ass_m] == c).astype(int))
                    pts = curve.points()
                    pts.insert(0, "task", f"{task.value}[class {c}]")
                    calibration_points.append(pts)
                    if m is not None:
                        mses.append(m)
                mse = float(np.mean(mses)) if mses else None
        except ValueError:
            mse = None
        calibration_mse[task.value] = mse

    # ---- alert metrics on test rows --------------------------------------------
    # calibrated probabilities per (patient, date) for the three alert inputs
    core = {}
    for task in (TargetTask.MORTALITY, TargetTask.DISCHARGE_24, TargetTask.DISCHARGE_48):
        if task.value not in bundles:
            continue
        mb = bundles[task.value]
        core[task.value] = pd.Series(
            mb.calibrated(full.frame.to_numpy(dtype=float)), index=full.frame.index
        )
    alert_rows = []
    green_sweep_df = pd.DataFrame()
    red_sweep_df = pd.DataFrame()
    if {"mortality", "discharge_24", "discharge_48"} <= set(core):
        p_mort_all = core["mortality"]
        prev_mort = p_mort_all.groupby(level="patient_id").shift(1)

        ds48 = datasets["discharge_48"]
        te48 = ds48.rows("test")
        key48 = _frame_key(ds48.index)[te48]
        p24 = core["discharge_24"].reindex(key48).to_numpy()
        p48 = core["discharge_48"].reindex(key48).to_numpy()
        y48 = ds48.labels[te48]
        for name, cfg in (("previous_green", LEGACY_GREEN_CONFIG), ("new_green", DEFAULT_CONFIG)):
            flags = green_mask(p24, p48, cfg.t24, cfg.t48)
            m = alert_metrics(flags, y48)
            alert_rows.append(
                {"alert": name, "accuracy": m.accuracy, "precision": m.precision,
                 "recall": m.recall, "n": len(y48)}
            )
        grid = np.round(np.linspace(0.0, 1.0, 21), 4)
        green_sweep_df = pd.DataFrame(
            [
                {"t24": p.thresholds[0], "t48": p.thresholds[1],
                 "precision": p.precision, "recall": p.recall, "n_flagged": p.n_flagged}
                for p in sweep_green(p24, p48, y48, grid, grid)
            ]
        )

        dsm = datasets["mortality"]
        tem = dsm.rows("test")
        keym = _frame_key(dsm.index)[tem]
        pm = p_mort_all.reindex(keym).to_numpy()
        pm_prev = prev_mort.reindex(keym).to_numpy()
        ym = dsm.labels[tem]
        flags = red_mask(pm, pm_prev, DEFAULT_CONFIG.t_mort, DEFAULT_CONFIG.t_delta)
        m = alert_metrics(flags, ym)
        alert_rows.append(
            {"alert": "red", "accuracy": m.accuracy, "precision": m.precision,
             "recall": m.recall, "n": len(ym)}
        )
        red_grid = np.round(np.linspace(0.05, 0.3, 6), 4)
        delta_grid = np.concatenate([np.round(np.linspace(0.05, 0.3, 6), 4), [1.0]])
        red_sweep_df = pd.DataFrame(
            [
                {"t": p.thresholds[0], "t_delta": p.thresholds[1],
                 "precision": p.precision, "recall": p.recall, "n_flagged": p.n_flagged}
                for p in sweep_red(pm, pm_prev, ym, red_grid, delta_grid)
            ]
        )
    alert_table = pd.DataFrame(alert_rows)

    # ---- doctor comparison on test rows -----------------------------------------
    doctor_rows = []
    info = census_info(history).set_index(["patient_id", "record_date"])
    stays = ctx.stays.set_index("patient_id")
    for task_value, horizon_days in (("discharge_48", 2), ("discharge_24", 1)):
        if task_value not in datasets:
            continue
        ds = datasets[task_value]
        te = ds.rows("test")
        key = _frame_key(ds.index)[te]
        sub = info.reindex(key)
        edd = pd.to_datetime(sub["edd"])
        record_date = key.get_level_values(1)
        dclass = pd.Series(
            [disposition_class(v) for v in stays.reindex(key.get_level_values(0))["disposition"]],
            index=range(len(key)),
        )
        y = ds.labels[te]
        alive = (dclass != "expired_or_hospice").to_numpy()
        has_edd = edd.notna().to_numpy()
        keep = alive & has_edd
        scores = doctor_score(
            edd[keep].to_numpy("datetime64[D]"), record_date[keep].to_numpy().astype("datetime64[D]")
        )
        model_probs = core[task_value].reindex(key).to_numpy()
        d_auc = auc(scores, y[keep]).auc
        m_auc = auc(model_probs[keep], y[keep]).auc
        row = {
            "horizon": task_value,
            "doctor_auc": d_auc,
            "model_auc": m_auc,
            "auc_increment": None if (d_auc is None or m_auc is None) else m_auc - d_auc,
            "n": int(keep.sum()),
            "excluded_missing_edd": int((~has_edd & alive).sum()),
        }
        if task_value == "discharge_48":
            days_out = (edd[keep].to_numpy("datetime64[D]")
                        - record_date[keep].to_numpy().astype("datetime64[D]")) / np.timedelta64(1, "D")
            doctor_positive = days_out <= horizon_days
            green = green_mask(
                core["discharge_24"].reindex(key).to_numpy()[keep],
                model_probs[keep],
                DEFAULT_CONFIG.t24,
                DEFAULT_CONFIG.t48,
            )
            comb = combine_doctor_green(doctor_positive, green, y[keep])
            row.update(
                {
                    "doctor_precision": comb.doctor_precision,
                    "doctor_and_green_precision": comb.and_precision,
                    "precision_increment": comb.precision_increment,
                    "doctor_recall": comb.doctor_recall,
                    "doctor_or_green_recall": comb.or_recall,
                    "recall_increment": comb.recall_increment,
                }
            )
        doctor_rows.append(row)
    doctor_table = pd.DataFrame(doctor_rows)

    # ---- readmission association -------------------------------------------------
    readmission: dict = {}
    latent_path = Path(extract_root) / hospital / "latent.csv"
    if latent_path.exists() and "discharge_48" in datasets:
        latent = pd.read_csv(latent_path, dtype={"patient_id": str})
        latent["true_discharge_time"] = pd.to_datetime(latent["true_discharge_time"])
        latent = latent.set_index("patient_id")
        ds = datasets["discharge_48"]
        te = ds.rows("test")
        key = _frame_key(ds.index)[te]
        pids = key.get_level_values(0)
        rd = pd.to_datetime(key.get_level_values(1))
        p48 = core["discharge_48"].reindex(key).to_numpy()
        p24 = core["discharge_24"].reindex(key).to_numpy()
        sub_latent = latent.reindex(pids)
        discharge = pd.Series(sub_latent["true_discharge_time"].to_numpy(), index=range(len(key)))
        dclass = pd.Series([disposition_class(v) for v in
                            stays.reindex(pids)["disposition"]], index=range(len(key)))
        alive_known = (~dclass.isna()) & (dclass != "expired_or_hospice") & (dclass != "special")
        discharged48 = (
            discharge.notna()
            & (discharge <= pd.Series(rd.to_numpy(), index=range(len(key))) + pd.Timedelta(hours=48))
            & alive_known.to_numpy()
        )
        r7 = sub_latent["readmission_within_7d"].to_numpy().astype(float)
        r30 = sub_latent["readmission_within_30d"].to_numpy().astype(float)

        # per-admission green flag two days before the actual discharge
        green_all = pd.Series(
            green_mask(p24, p48, DEFAULT_CONFIG.t24, DEFAULT_CONFIG.t48), index=key
        )
        adm_rows = []
        for pid, group in green_all.groupby(level=0):
            lat = latent.loc[pid] if pid in latent.index else None
            if lat is None or pd.isna(lat["true_discharge_time"]):
                continue
            cls = disposition_class(
                stays.loc[pid, "disposition"] if pid in stays.index else None
            )
            if cls in (None, "expired_or_hospice", "special"):
                continue
            flag_date = lat["true_discharge_time"].normalize() - pd.Timedelta(days=2)
            idx = (pid, flag_date)
            flag = group.get(idx) if idx in group.index else None
            adm_rows.append(
                {
                    "green_before": None if flag is None else bool(flag),
                    "readmit7": float(lat["readmission_within_7d"]),
                    "readmit30": float(lat["readmission_within_30d"]),
                }
            )
        adm = pd.DataFrame(adm_rows)
        day_part = readmission_analysis(p48, discharged48.to_numpy(), r7, r30)
        group_part = None
        if len(adm):
            group_part = readmission_analysis(
                p48=np.full(len(adm), 0.5),
                discharged_within_48=np.zeros(len(adm), dtype=bool),
                readmit7=adm["readmit7"].to_numpy(),
                readmit30=adm["readmit30"].to_numpy(),
                green_at_48h_before=adm["green_before"].to_numpy(dtype=object),
            )
        readmission = {"day_buckets": day_part, "admission_groups": group_part}

    cohort_manifest = (
        pd.concat(manifests, ignore_index=True) if manifests else pd.DataFrame()
    )
    return HospitalEvaluation(
        hospital=hospital,
        auc_by_task=auc_by_task,
        calibration_mse=calibration_mse,
        calibration_points=(
            pd.concat(calibration_points, ignore_index=True)
            if calibration_points
            else pd.DataFrame()
        ),
        alert_table=alert_table,
        green_sweep=green_sweep_df,
        red_sweep=red_sweep_df,
        doctor_table=doctor_table,
        readmission=readmission,
        cohort_manifest=cohort_manifest,
        notes=notes,
    )


def write_evaluation_bundle(ev: HospitalEvaluation, out_dir: str | Path) -> list[str]:
    """Write the CSV/JSON report bundle for one hospital; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    auc_df = pd.DataFrame(
        [{"task": t, "auc": v} for t, v in ev.auc_by_task.items()]
    )
    mse_df = pd.DataFrame(
        [{"task": t, "calibration_mse": v} for t, v in ev.calibration_mse.items()]
    )
    for name, df in (
        ("auc_table", auc_df),
        ("calibration_mse", mse_df),
        ("calibration_curves", ev.calibration_points),
        ("alert_metrics", ev.alert_table),
        ("green_sweep", ev.green_sweep),
        ("red_sweep", ev.red_sweep),
        ("doctor_comparison", ev.doctor_table),
        ("cohort_manifest", ev.cohort_manifest),
    ):
        path = out / f"{ev.hospital}_{name}.csv"
        df.to_csv(path, index=False)
        written.append(str(path))

    if ev.readmission:
        day = ev.readmission["day_buckets"]
        buckets = pd.DataFrame(
            {
                "bucket_low": day.bucket_edges[:-1],
                "bucket_high": day.bucket_edges[1:],
                "count": day.bucket_counts,
                "readmit7_rate": day.bucket_rate_7d,
                "readmit30_rate": day.bucket_rate_30d,
            }
        )
        path = out / f"{ev.hospital}_readmission_buckets.csv"
        buckets.to_csv(path, index=False)
        written.append(str(path))
        group = ev.readmission.get("admission_groups")
        if group is not None:
            payload = {
                "n_green": group.n_green,
                "n_no_green": group.n_no_green,
                "rate_30d_green": group.rate_30d_green,
                "rate_30d_no_green": group.rate_30d_no_green,
                "rate_7d_green": group.rate_7d_green,
                "rate_7d_no_green": group.rate_7d_no_green,
                "welch_30d": None if group.welch_30d is None else {
                    "t": group.welch_30d.t, "dof": group.welch_30d.dof,
                    "p_one_sided": group.welch_30d.p_one_sided,
                },
                "welch_7d": None if group.welch_7d is None else {
                    "t": group.welch_7d.t, "dof": group.welch_7d.dof,
                    "p_one_sided": group.welch_7d.p_one_sided,
                },
                "odds_ratio_30d": group.or_30d,
                "odds_ratio_7d": group.or_7d,
                "excluded_missing_flag": group.excluded_no_green_flag,
                "notes": group.notes,
            }
            path = out / f"{ev.hospital}_readmission_groups.json"
            Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")
            written.append(str(path))
    return written
