"""Serving layer: daily batch orchestration, prediction store, model
registry, HTTP API, and CLI."""

from .store import PredictionStore
from .pipeline import run_daily, train_hospital

__all__ = ["PredictionStore", "run_daily", "train_hospital"]
