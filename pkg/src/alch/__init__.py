"""Numerical boundary-at-infinity toolkit for asymptotically complex hyperbolic almost Hermitian metrics."""

from .boundary import BoundaryData, BoundaryEstimator, boundary_data
from .chart import Chart, Metric, TensorField, g_norm, metric_inner, partial_fd
from .cr import CRReport, cr_report
from .extrapolate import LimitExtrapolator, extrapolate_limit
from .models import GeometricModel, ModelSpec, build_model, model_oracle
from .rates import DecayFit, ExponentialDecayRegressor, classify_regime, fit_decay

__all__ = [
    "BoundaryData",
    "BoundaryEstimator",
    "boundary_data",
    "Chart",
    "Metric",
    "TensorField",
    "g_norm",
    "metric_inner",
    "partial_fd",
    "CRReport",
    "cr_report",
    "LimitExtrapolator",
    "extrapolate_limit",
    "GeometricModel",
    "ModelSpec",
    "build_model",
    "model_oracle",
    "DecayFit",
    "ExponentialDecayRegressor",
    "classify_regime",
    "fit_decay",
]

__version__ = "0.1.0"
