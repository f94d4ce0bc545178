"""wardflow: desk-scale inpatient outcome prediction platform.

A library for generating synthetic EMR extracts, building patient-day
feature matrices, training per-hospital gradient-boosted models for eight
inpatient outcomes, calibrating and explaining their probabilities, and
serving color-coded alerts plus evaluation and impact analytics.
"""

__version__ = "0.1.0"

from . import (
    alerts,
    calibrate,
    cohort,
    evalmetrics,
    extracts,
    featurize,
    gbdt,
    hospitals,
    impact,
    shapley,
    synthgen,
)

__all__ = [
    "alerts",
    "calibrate",
    "cohort",
    "evalmetrics",
    "extracts",
    "featurize",
    "gbdt",
    "hospitals",
    "impact",
    "shapley",
    "synthgen",
]
