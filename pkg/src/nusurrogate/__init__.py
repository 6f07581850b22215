"""Surrogate models for the average Nusselt number of liquid-sodium flow in miniature channels."""

from ._accel import JIT_ENABLED
from .dataset import Dataset, Holdout, KFold, ingest_csv, partition, synthesize_dataset
from .families import make_family
from .physics import SODIUM, WATER_ANALOG, PhysicsParams, nu_ave_hat
from .validation import cross_validate, error_metrics, holdout_margin, monte_carlo

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED",
    "Dataset",
    "Holdout",
    "KFold",
    "PhysicsParams",
    "SODIUM",
    "WATER_ANALOG",
    "cross_validate",
    "error_metrics",
    "holdout_margin",
    "ingest_csv",
    "make_family",
    "monte_carlo",
    "nu_ave_hat",
    "partition",
    "synthesize_dataset",
]
