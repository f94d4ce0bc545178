"""The color-coded alert logic on the example seven-day stay, a threshold
sweep, and the length-of-stay impact arithmetic.

Run:  python3 demos/demo_alerts_and_impact.py
"""

import numpy as np

from wardflow.alerts import DEFAULT_CONFIG, LEGACY_GREEN_CONFIG, evaluate, sweep_green
from wardflow.impact import (
    DidInput,
    FinancialInput,
    ImpactReport,
    PilotInput,
    did_estimate,
    pilot_estimate,
    project_financials,
)
from wardflow.serve.pipeline import golden_trajectory

# ---------------------------------------------------------------------------
# 1. One patient's week, day by day.
# ---------------------------------------------------------------------------
print("the example stay (admitted the evening before the first row):")
print(f"{'date':<12s}{'p_mort':>8s}{'p_24h':>8s}{'p_48h':>8s}  alerts")
prev_mort = None
for day in golden_trajectory():
    flags = evaluate(
        p24=day["discharge_24"], p48=day["discharge_48"],
        p_mort=day["mortality"], p_mort_prev=prev_mort, cfg=DEFAULT_CONFIG,
    )
    colors = "/".join(
        c for c, on in (("green", flags.green), ("red", flags.red)) if on
    ) or "-"
    print(f"{day['record_date']:<12s}{day['mortality']:>8.4f}"
          f"{day['discharge_24']:>8.2f}{day['discharge_48']:>8.2f}  {colors}")
    prev_mort = day["mortality"]
print("the red fires on the deterioration peak (absolute level AND the")
print("day-over-day rise); greens fire on the final two days of the stay.\n")

# ---------------------------------------------------------------------------
# 2. Why the thresholds moved: precision/recall over the green grid.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(0)
n = 20000
p48 = rng.uniform(size=n)
p24 = np.clip(p48 * rng.uniform(0.3, 0.9, size=n), 0, 1)
labels = (rng.uniform(size=n) < p48).astype(int)
for name, cfg in (("initial (0.5, 0.5)", LEGACY_GREEN_CONFIG),
                  ("current (0.25, 0.4)", DEFAULT_CONFIG)):
    pt = sweep_green(p24, p48, labels, [cfg.t24], [cfg.t48])[0]
    print(f"green thresholds {name}: precision {pt.precision:.3f}  recall {pt.recall:.3f}")
print("lowering the thresholds trades precision for recall, surfacing more")
print("of the real discharges for the care team to review.\n")

# ---------------------------------------------------------------------------
# 3. From fewer bed-days to dollars.
# ---------------------------------------------------------------------------
did = did_estimate(
    DidInput(
        control_means=[4.96, 5.4, 5.85],
        treatment_means=[4.76, 5.1, 4.98],
        periods=[2021, 2022, 2023],
        baseline_period=0,
        treatment_period=2,
    )
)
financials = project_financials(
    FinancialInput(
        los_reduction_days=did.effect_days,
        patients_per_year=49424,
        avg_new_los_days=4.98,
        cost_per_patient_day=1661,
        cm_per_patient=10796,
    )
)
pilot = pilot_estimate(
    PilotInput(n_patients=277, los_before=5.84, los_after=5.49,
               cm_per_patient=10796, patients_divisor=5.885)
)
print(ImpactReport(did=did, financials=financials, pilot=pilot).to_table())
