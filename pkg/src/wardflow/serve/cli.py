"""Command-line surface: gen-data, ingest, train, calibrate, evaluate,
impact, run-daily, serve. Failures exit nonzero with a JSON error object on
stderr."""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

import numpy as np


class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "usage", "detail": message}), file=sys.stderr)
        raise SystemExit(2)


def _parse_date(s: str) -> date:
    return date.fromisoformat(s)


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonArgumentParser(prog="wardflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[], help="generate synthetic extracts")
    p.add_argument("--root", required=True)
    p.add_argument("--seed", type=int, default=20230101)
    p.add_argument("--start", type=_parse_date, default=date(2023, 1, 2))
    p.add_argument("--end", type=_parse_date, default=date(2023, 5, 12))
    p.add_argument("--hospitals", default="", help="comma-separated subset, e.g. HA,HB")
    p.add_argument("--doctor-noise", type=float, default=2.2)

    p = sub.add_parser("ingest", help="parse extracts and report quarantine")
    p.add_argument("--root", required=True)
    p.add_argument("--hospital", required=True)
    p.add_argument("--date", type=_parse_date, default=None)

    p = sub.add_parser("train", help="fit pipeline + per-task models for one hospital")
    p.add_argument("--root", required=True)
    p.add_argument("--hospital", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--tasks", default="", help="comma-separated subset of tasks")

    p = sub.add_parser("calibrate", help="refit calibrators for registered models")
    p.add_argument("--root", required=True)
    p.add_argument("--hospital", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--artifacts", required=True)

    p = sub.add_parser("evaluate", help="emit the evaluation report bundle")
    p.add_argument("--root", required=True)
    p.add_argument("--hospital", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("impact", help="DiD estimate and financial projections")
    p.add_argument("--config", default=None, help="JSON file with did/financial/pilot inputs")
    p.add_argument("--out", default=None, help="write the report JSON here")

    p = sub.add_parser("run-daily", help="score one (hospital, date)")
    p.add_argument("--root", required=True)
    p.add_argument("--hospital", required=True)
    p.add_argument("--date", type=_parse_date, required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--artifacts", required=True)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--store", required=True)
    p.add_argument("--root", default=None)
    p.add_argument("--artifacts", default=None)
    p.add_argument("--static", default=None, help="dashboard asset directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", default=None)

    return parser


def _cmd_gen_data(args) -> dict:
    from ..hospitals import default_roster
    from ..synthgen import GeneratorConfig, generate

    roster = default_roster()
    if args.hospitals:
        wanted = {h.strip().upper() for h in args.hospitals.split(",") if h.strip()}
        roster = [p for p in roster if p.hospital_id in wanted]
        if not roster:
            raise ValueError(f"unknown hospitals: {args.hospitals}")
    cfg = GeneratorConfig(
        seed=args.seed,
        hospitals=roster,
        date_range=(args.start, args.end),
        doctor_noise=args.doctor_noise,
    )
    result = generate(cfg, args.root)
    return {
        "root": str(result.root),
        "hospitals": result.hospitals,
        "extract_dates": [d.isoformat() for d in (result.extract_dates[0], result.extract_dates[-1])],
        "rows_written": result.rows_written,
    }


def _cmd_ingest(args) -> dict:
    from ..extracts import available_dates, load_bundle, load_history

    if args.date is not None:
        bundle, report = load_bundle(args.root, args.hospital, args.date)
        return {
            "hospital": args.hospital,
            "date": args.date.isoformat(),
            "row_counts": {str(k): int(len(v)) for k, v in bundle.tables.items()},
            "quarantined": report.counts,
            "quarantine_samples": report.samples,
        }
    dates = available_dates(args.root, args.hospital)
    if not dates:
        raise FileNotFoundError(f"no extracts under {args.root}/{args.hospital}")
    history = load_history(args.root, args.hospital, dates)
    return {
        "hospital": args.hospital,
        "dates": [dates[0].isoformat(), dates[-1].isoformat()],
        "row_counts": {str(k): int(len(v)) for k, v in history.tables.items()},
        "quarantined": history.quarantine.counts,
        "quarantine_samples": history.quarantine.samples,
    }


def _cmd_train(args) -> dict:
    from ..cohort import TargetTask
    from .pipeline import applicable_tasks, train_hospital
    from .store import PredictionStore

    store = PredictionStore(args.store)
    tasks = None
    if args.tasks:
        tasks = [TargetTask(t.strip()) for t in args.tasks.split(",") if t.strip()]
    all_tasks = [t.value for t in applicable_tasks(args.hospital)]
    skipped = [t.value for t in TargetTask if t.value not in all_tasks]
    results = train_hospital(
        args.root, args.hospital, store, args.artifacts, tasks=tasks
    )
    out = {
        "hospital": args.hospital,
        "trained": [
            {
                "task": r.task,
                "version": r.version,
                "validation_auc": r.validation_auc,
                "calibration_mse": r.calibration_mse,
                "n_train": r.n_train,
                "n_valid": r.n_valid,
                "n_test": r.n_test,
                "artifact": r.artifact_path,
            }
            for r in results
        ],
    }
    if skipped:
        out["skipped_tasks"] = skipped
        out["notice"] = f"{args.hospital} has no ICU; ICU tasks skipped"
    return out


def _cmd_calibrate(args) -> dict:
    import pandas as pd

    from ..calibrate import (
        apply_isotonic_ovr,
        assess,
        fit_isotonic,
        fit_isotonic_ovr,
        split_test_halves,
    )
    from ..cohort import build_context, build_labels, chronological_split
    from ..extracts import available_dates, load_history
    from ..featurize import FeaturePipeline, build_features
    from .pipeline import (
        DEFAULT_CENSOR_MARGIN_DAYS,
        ModelBundle,
        _align_rows,
        applicable_tasks,
        modeling_dates,
        roster_profile,
    )
    from .store import PredictionStore

    store = PredictionStore(args.store)
    dates = available_dates(args.root, args.hospital)
    history = load_history(args.root, args.hospital, dates)
    pipe = FeaturePipeline.load(Path(args.artifacts) / f"{args.hospital}_pipeline.json")
    usable = modeling_dates(dates, DEFAULT_CENSOR_MARGIN_DAYS)
    full = pipe.transform(
        build_features(history, dates=[pd.Timestamp(d) for d in usable])
    )
    ctx = build_context(history)
    ctx.patient_days = ctx.patient_days[
        ctx.patient_days["record_date"] <= pd.Timestamp(usable[-1])
    ]
    profile = roster_profile(args.hospital)
    if profile is not None:
        ctx.has_icu = profile.has_icu
    out = {"hospital": args.hospital, "recalibrated": []}
    for task in applicable_tasks(args.hospital, ctx.has_icu):
        entry = store.active_model(args.hospital, task.value)
        if entry is None:
            continue
        mb = ModelBundle.load(entry["path"])
        ds = chronological_split(build_labels(task, ctx))
        X = _align_rows(full, ds)
        te = ds.rows("test")
        probs = mb.ensemble.predict_proba(X[te])
        y = ds.labels[te]
        te_dates = ds.index["record_date"][te].to_numpy()
        cal_m, ass_m = split_test_halves(te_dates)
        if mb.ensemble.hp.loss == "logistic":
            mb.calibrators = [fit_isotonic(probs[cal_m], y[cal_m])]
            _, mse = assess(mb.calibrators[0].apply(probs[ass_m]), y[ass_m])
        else:
            mb.calibrators = fit_isotonic_ovr(probs[cal_m], y[cal_m])
            cal = apply_isotonic_ovr(mb.calibrators, probs[ass_m])
            mses = []
            for c in range(cal.shape[1]):
                _, m = assess(cal[:, c], (y[ass_m] == c).astype(int))
                if m is not None:
                    mses.append(m)
            mse = float(np.mean(mses)) if mses else None
        mb.save(entry["path"])
        store.update_calibration_mse(args.hospital, task.value, mse)
        out["recalibrated"].append({"task": task.value, "calibration_mse": mse})
    return out


def _cmd_evaluate(args) -> dict:
    from .evaluate import evaluate_hospital, write_evaluation_bundle
    from .store import PredictionStore

    store = PredictionStore(args.store)
    ev = evaluate_hospital(args.root, args.hospital, store, args.artifacts)
    written = write_evaluation_bundle(ev, args.out)
    return {
        "hospital": ev.hospital,
        "auc": ev.auc_by_task,
        "calibration_mse": ev.calibration_mse,
        "files": written,
        "notes": ev.notes,
    }


def _cmd_impact(args) -> dict:
    from ..impact import (
        DidInput,
        FinancialInput,
        ImpactReport,
        PilotInput,
        did_estimate,
        pilot_estimate,
        project_financials,
    )

    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        # the deployment-period defaults
        cfg = {
            "did": {
                "control_means": [4.96, 5.4, 5.85],
                "treatment_means": [4.76, 5.1, 4.98],
                "periods": [2021, 2022, 2023],
                "baseline_period": 0,
                "treatment_period": 2,
            },
            "financial": {
                "patients_per_year": 49424,
                "avg_new_los_days": 4.98,
                "cost_per_patient_day": 1661,
                "cm_per_patient": 10796,
            },
            "pilot": {
                "n_patients": 277,
                "los_before": 5.84,
                "los_after": 5.49,
                "cm_per_patient": 10796,
                "patients_divisor": 5.885,
            },
        }
    did = did_estimate(DidInput(**cfg["did"]))
    fin_cfg = dict(cfg["financial"])
    fin_cfg.setdefault("los_reduction_days", did.effect_days)
    financials = project_financials(FinancialInput(**fin_cfg))
    pilot = pilot_estimate(PilotInput(**cfg["pilot"])) if "pilot" in cfg else None
    report = ImpactReport(did=did, financials=financials, pilot=pilot)
    print(report.to_table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    return report.to_dict()


def _cmd_run_daily(args) -> dict:
    from .pipeline import run_daily
    from .store import PredictionStore

    store = PredictionStore(args.store)
    result = run_daily(args.root, args.hospital, args.date, store, args.artifacts)
    if result["status"] != "ok":
        raise RuntimeError(result.get("error", "run-daily failed"))
    return {"hospital": args.hospital, "date": args.date.isoformat(), **result}


def _cmd_serve(args) -> dict:
    import uvicorn

    from .api import DEFAULT_TOKEN, create_app

    app = create_app(
        args.store,
        token=args.token or DEFAULT_TOKEN,
        extract_root=args.root,
        artifacts_dir=args.artifacts,
        static_dir=args.static,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return {"status": "stopped"}


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "calibrate": _cmd_calibrate,
    "evaluate": _cmd_evaluate,
    "impact": _cmd_impact,
    "run-daily": _cmd_run_daily,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(
            json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
            file=sys.stderr,
        )
        return 1
    if args.command != "impact":
        print(json.dumps(result, indent=1, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
