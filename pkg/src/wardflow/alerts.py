"""Color-coded alert evaluation, threshold sweeps, and alert-level metrics.

Green flags imminent discharge (24-hr or 48-hr probability above threshold);
red flags high or worsening mortality risk (absolute level, or day-over-day
increase). The two criteria are independent and may co-occur.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

CONFIG_VERSION = 1


@dataclass(frozen=True)
class AlertConfig:
    t24: float = 0.25
    t48: float = 0.4
    t_mort: float = 0.2
    t_delta: float = 0.1

    def __post_init__(self):
        for name in ("t24", "t48", "t_mort"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 < self.t_delta <= 1:
            raise ValueError("t_delta must lie in (0, 1]")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"version": CONFIG_VERSION, **asdict(self)}, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "AlertConfig":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        d.pop("version", None)
        return cls(**d)


DEFAULT_CONFIG = AlertConfig()
# earlier deployment profile kept for comparison sweeps
LEGACY_GREEN_CONFIG = AlertConfig(t24=0.5, t48=0.5)


@dataclass
class AlertFlags:
    green: bool
    red: bool
    reasons: list[str]


def evaluate(
    p24: float,
    p48: float,
    p_mort: float,
    p_mort_prev: float | None = None,
    cfg: AlertConfig = DEFAULT_CONFIG,
) -> AlertFlags:
    """Evaluate one patient-day's alert flags.

    First-day rows (no previous mortality probability) consider only the
    absolute red criterion.
    """
    reasons = []
    green = False
    if p24 >= cfg.t24:
        green = True
        reasons.append("discharge_24 probability at or above threshold")
    if p48 >= cfg.t48:
        green = True
        reasons.append("discharge_48 probability at or above threshold")
    red = False
    if p_mort >= cfg.t_mort:
        red = True
        reasons.append("mortality probability at or above threshold")
    if p_mort_prev is not None and (p_mort - p_mort_prev) >= cfg.t_delta:
        red = True
        reasons.append("mortality probability rose by at least the delta threshold")
    return AlertFlags(green=green, red=red, reasons=reasons)


def green_mask(p24, p48, t24: float, t48: float) -> np.ndarray:
    return (np.asarray(p24, dtype=float) >= t24) | (np.asarray(p48, dtype=float) >= t48)


def red_mask(p_mort, p_mort_prev, t_mort: float, t_delta: float) -> np.ndarray:
    """Vectorized red rule; NaN in ``p_mort_prev`` marks first-day rows."""
    p = np.asarray(p_mort, dtype=float)
    prev = np.asarray(p_mort_prev, dtype=float)
    delta_hit = np.zeros(len(p), dtype=bool)
    known = ~np.isnan(prev)
    delta_hit[known] = (p[known] - prev[known]) >= t_delta
    return (p >= t_mort) | delta_hit


@dataclass
class SweepPoint:
    thresholds: tuple[float, float]
    precision: float | None
    recall: float
    n_flagged: int


def _point(flags: np.ndarray, labels: np.ndarray, thresholds) -> SweepPoint:
    tp = int(np.sum(flags & (labels == 1)))
    fp = int(np.sum(flags & (labels == 0)))
    fn = int(np.sum(~flags & (labels == 1)))
    return SweepPoint(
        thresholds=thresholds,
        precision=tp / (tp + fp) if tp + fp > 0 else None,
        recall=tp / (tp + fn) if tp + fn > 0 else 0.0,
        n_flagged=tp + fp,
    )


def sweep_green(p24, p48, labels, t24_grid, t48_grid) -> list[SweepPoint]:
    """Precision/recall per (t24, t48) grid cell; positives are rows
    discharged alive within 48 hours."""
    labels = np.asarray(labels).astype(int)
    return [
        _point(green_mask(p24, p48, t24, t48), labels, (float(t24), float(t48)))
        for t24 in t24_grid
        for t48 in t48_grid
    ]


def sweep_red(p_mort, p_mort_prev, labels, t_grid, t_delta_grid) -> list[SweepPoint]:
    """Precision/recall per (t, t_delta) grid cell; positives are stays ending
    expired or hospice. t_delta=1 disables the delta rule (the single-threshold
    family)."""
    labels = np.asarray(labels).astype(int)
    return [
        _point(red_mask(p_mort, p_mort_prev, t, td), labels, (float(t), float(td)))
        for t in t_grid
        for td in t_delta_grid
    ]


@dataclass
class AlertMetrics:
    accuracy: float
    precision: float | None
    recall: float
    tp: int
    fp: int
    fn: int
    tn: int


def alert_metrics(flags, labels) -> AlertMetrics:
    """Standard confusion arithmetic for one alert type."""
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels).astype(int)
    tp = int(np.sum(flags & (labels == 1)))
    fp = int(np.sum(flags & (labels == 0)))
    fn = int(np.sum(~flags & (labels == 1)))
    tn = int(np.sum(~flags & (labels == 0)))
    n = tp + fp + fn + tn
    return AlertMetrics(
        accuracy=(tp + tn) / n if n else 0.0,
        precision=tp / (tp + fp) if tp + fp > 0 else None,
        recall=tp / (tp + fn) if tp + fn > 0 else 0.0,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )
