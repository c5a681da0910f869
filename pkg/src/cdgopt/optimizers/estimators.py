"""Gradient estimators pluggable into the line-search drivers."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..gradient_estimator import GradientEstimate, build_design, estimate
from ..objective import sample_directions
from ..seeding import STREAM_DIRECTIONS, SeedLike, extend_seed


class DirectionalEstimator(Protocol):
    def __call__(self, objective, t: np.ndarray, prior: np.ndarray | None) -> GradientEstimate:
        ...


class RegressionEstimator:
    """Samples ``f(t + h v)`` on ``n`` fresh random directions and fits by GCV ridge.

    The k-th call draws its directions from the stream ``(seed, DIRECTIONS, k)``.
    """

    def __init__(self, n_directions: int, step: float, seed: SeedLike):
        self.n = int(n_directions)
        self.h = float(step)
        self.seed = seed
        self.calls = 0

    def __call__(self, objective, t, prior=None) -> GradientEstimate:
        t = np.asarray(t, dtype=float)
        self.calls += 1
        dirs = sample_directions(self.n, t.size, extend_seed(self.seed, STREAM_DIRECTIONS, self.calls))
        values = objective(t + self.h * dirs)
        return estimate(build_design(dirs, self.h), values, prior)
