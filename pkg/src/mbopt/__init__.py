"""Constrained discrete model-based optimization with MILP acquisition solves."""

__version__ = "0.1.0"

from .domain import CategoricalDomain, EncodedPoint, LinearConstraint, binary_domain
from .mbo import History, MboConfig, build_acquisition, run_mbo
from .milp import MilpModel, SolveResult, get_backend
from .surrogate import Dataset, MLPSurrogate, RewardScaler, TrainConfig, fit, predict

__all__ = [
    "CategoricalDomain",
    "EncodedPoint",
    "LinearConstraint",
    "binary_domain",
    "History",
    "MboConfig",
    "build_acquisition",
    "run_mbo",
    "MilpModel",
    "SolveResult",
    "get_backend",
    "Dataset",
    "MLPSurrogate",
    "RewardScaler",
    "TrainConfig",
    "fit",
    "predict",
]
