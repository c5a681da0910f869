"""Noisy derivative-free optimizers sharing one run-record format."""

from .estimators import DirectionalEstimator, RegressionEstimator
from .implicit_filtering import implicit_filtering
from .line_search import LBFGSMemory, lbfgs, steepest_descent, two_loop_direction
from .records import IterationEntry, OptimizationError, OptimizerConfig, RunRecord

METHODS = {
    "implicit_filtering": implicit_filtering,
    "steepest_descent": steepest_descent,
    "lbfgs": lbfgs,
}

__all__ = [
    "METHODS",
    "DirectionalEstimator",
    "IterationEntry",
    "LBFGSMemory",
    "OptimizationError",
    "OptimizerConfig",
    "RegressionEstimator",
    "RunRecord",
    "implicit_filtering",
    "lbfgs",
    "steepest_descent",
    "two_loop_direction",
]
