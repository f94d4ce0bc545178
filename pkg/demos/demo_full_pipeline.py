"""End-to-end walkthrough: synthesize one hospital's EMR extracts, train the
eight outcome models, score a day, and print the evaluation tables.

Run from the repo root:  python3 demos/demo_full_pipeline.py
Everything lands in ./demo_output/ and takes about a minute.
"""

from datetime import date
from pathlib import Path

from wardflow.extracts import available_dates
from wardflow.hospitals import HospitalProfile
from wardflow.serve.evaluate import evaluate_hospital, write_evaluation_bundle
from wardflow.serve.pipeline import run_daily, train_hospital
from wardflow.serve.store import PredictionStore
from wardflow.synthgen import GeneratorConfig, generate

out = Path("demo_output")
root = out / "extracts"
artifacts = out / "artifacts"
store_path = out / "store.db"

# ---------------------------------------------------------------------------
# 1. Generate four months of synthetic daily extracts for one hospital.
# ---------------------------------------------------------------------------
print("=" * 70)
print("1) Generating synthetic extracts for hospital HA ...")
cfg = GeneratorConfig(
    seed=2023,
    hospitals=[HospitalProfile("HA", bed_count=867, has_icu=True, n_patients=900)],
    date_range=(date(2023, 1, 2), date(2023, 5, 15)),
)
result = generate(cfg, root)
dates = available_dates(root, "HA")
print(f"   wrote {result.rows_written['HA']} rows across {len(dates)} extract days")
print(f"   e.g. {root}/HA/{dates[40]}/extract_03_lab_results.csv")

# ---------------------------------------------------------------------------
# 2. Train one gradient-boosted model per prediction task.
# ---------------------------------------------------------------------------
print("=" * 70)
print("2) Training per-task models (pipeline: rule-impute -> drop-sparse ->")
print("   kNN-impute -> derive -> encode, then Newton-boosted trees) ...")
store = PredictionStore(store_path)
for r in train_hospital(root, "HA", store, artifacts):
    v_auc = "n/a" if r.validation_auc is None else f"{r.validation_auc:.3f}"
    mse = "n/a" if r.calibration_mse is None else f"{r.calibration_mse:.4f}"
    print(f"   {r.task:<14s} v{r.version}  valid AUC {v_auc:<6s} calibration MSE {mse}")

# ---------------------------------------------------------------------------
# 3. Score one morning's census the way the daily batch does.
# ---------------------------------------------------------------------------
print("=" * 70)
score_day = dates[-25]
print(f"3) Scoring the {score_day} census ...")
run_daily(root, "HA", score_day, store, artifacts)
records, _, _ = store.query_patients("HA", score_day.isoformat())
greens = [r for r in records if r.green]
reds = [r for r in records if r.red]
print(f"   {len(records)} inpatients scored; {len(greens)} green, {len(reds)} red")
if greens:
    g = greens[0]
    print(f"   e.g. {g.patient_id} ({g.department}): p48={g.probs['discharge_48']:.3f} "
          f"-> {', '.join(g.alert_reasons)}")

# ---------------------------------------------------------------------------
# 4. Out-of-sample evaluation bundle (AUCs, calibration, alerts, doctor
#    comparison, readmission association).
# ---------------------------------------------------------------------------
print("=" * 70)
print("4) Evaluating on the chronological test split ...")
ev = evaluate_hospital(root, "HA", store, artifacts)
print("   AUC by task:")
for task, value in ev.auc_by_task.items():
    print(f"     {task:<14s} {'n/a' if value is None else f'{value:.3f}'}")
print("   alert metrics:")
print(ev.alert_table.round(3).to_string(index=False))
print("   doctor comparison (48-hr):")
cols = ["doctor_auc", "model_auc", "auc_increment", "doctor_precision",
        "doctor_and_green_precision", "doctor_recall", "doctor_or_green_recall"]
row = ev.doctor_table.iloc[0]
for c in cols:
    if c in row and row[c] == row[c]:
        print(f"     {c:<28s} {row[c]:.3f}")
files = write_evaluation_bundle(ev, out / "reports")
print(f"   wrote {len(files)} report files under {out/'reports'}")
print("done.")
