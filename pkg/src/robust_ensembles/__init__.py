"""Robust Ensembles - maximally robust pure-state ensembles of a linearized laser."""

from robust_ensembles.core.ensemble import is_physically_realizable, member_state
from robust_ensembles.core.models import (
    EnsembleParams,
    GaussianState,
    ModelParams,
    RobustnessMeasure,
    RobustnessResult,
    RunProgress,
    SweepParameter,
    SweepTable,
)
from robust_ensembles.core.moments import evolve_moments
from robust_ensembles.core.optimize import maximize_robustness
from robust_ensembles.core.robustness import ensemble_survival, survival_time
from robust_ensembles.pipeline.runner import ReproductionRunner

__version__ = "0.1.0"

__all__ = [
    "EnsembleParams",
    "GaussianState",
    "ModelParams",
    "ReproductionRunner",
    "RobustnessMeasure",
    "RobustnessResult",
    "RunProgress",
    "SweepParameter",
    "SweepTable",
    "ensemble_survival",
    "evolve_moments",
    "is_physically_realizable",
    "maximize_robustness",
    "member_state",
    "survival_time",
]
