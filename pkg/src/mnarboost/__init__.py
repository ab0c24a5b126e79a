"""Boosted additive-spline regression for responses missing not at random."""

from .data import Dataset, LossSpec, MethodSpec, split_train_test, validate
from .errors import InvalidInput, MnarBoostError, NumericalFailure, SolverDiverged
from .booster import FitConfig, FitReport, boost_fit
from .pipeline import PipelineConfig, fit_method
from .splines import AdditiveSplineModel, KnotSpec, make_knots

__all__ = [
    "AdditiveSplineModel", "Dataset", "FitConfig", "FitReport", "InvalidInput", "KnotSpec",
    "LossSpec", "MethodSpec", "MnarBoostError", "NumericalFailure", "PipelineConfig",
    "SolverDiverged", "boost_fit", "fit_method", "make_knots", "split_train_test", "validate",
]
__version__ = "0.1.0"
