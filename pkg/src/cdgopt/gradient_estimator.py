"""Function value and gradient estimation for noisy black-box objectives.

Samples ``f(t + h v_i)`` along unit directions ``v_i`` are fitted with the
linear model ``f_i = phi_bar + h v_i^T g + noise`` by ridge regression towards
a prior estimate.  The regularization strength is chosen by generalized cross
validation (GCV).  A central finite difference is provided as the classical
baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .seeding import SeedLike, make_rng

UNIT_NORM_TOL = 1e-12
DEFAULT_LOG_ALPHA_BRACKET = (-8.0, 8.0)
GRID_POINTS = 17
LOG_ALPHA_TOL = 1e-3
HUTCHINSON_PROBES = 32

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class SingularSystemError(ValueError):
    """The unregularized normal equations are singular."""


class DegenerateGCVError(ValueError):
    """trace(I - A(alpha)) vanished: the data are interpolated exactly."""


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    nonlinear_residual: float

    def __post_init__(self):
        for name in ("sigma", "nonlinear_residual"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


@dataclass(frozen=True)
class GradientEstimate:
    phi_bar: float
    g: np.ndarray
    alpha: float
    noise_level: float
    prior: np.ndarray = field(repr=False)

    @property
    def coefficients(self) -> np.ndarray:
        """The stacked vector ``[phi_bar, g]``."""
        return np.concatenate(([self.phi_bar], self.g))

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.g))


@dataclass(frozen=True)
class SampleDesign:
    directions: np.ndarray
    step: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "directions", _check_directions(self.directions))
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.directions.shape[0],):
            raise ValueError("need one value per direction")
        object.__setattr__(self, "values", values)
        if not self.step > 0:
            raise ValueError("step must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return build_design(self.directions, self.step)


def _check_directions(directions) -> np.ndarray:
    dirs = np.asarray(directions, dtype=float)
    if dirs.ndim == 1:
        # a list of scalars is a list of 1-D directions
        dirs = dirs[:, None]
    if dirs.ndim != 2 or dirs.shape[0] == 0 or dirs.shape[1] == 0:
        raise ValueError("directions must be a non-empty list of equal-length vectors")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ValueError("directions must have unit Euclidean norm")
    return dirs


def build_design(directions, h: float) -> np.ndarray:
    """Design matrix with rows ``[1, h v_i]``."""
    if isinstance(directions, (list, tuple)):
        lengths = {np.size(v) for v in directions}
        if len(lengths) > 1:
            raise ValueError("directions have different dimensions")
    dirs = _check_directions(directions)
    if not (math.isfinite(h) and h > 0):
        raise ValueError(f"step h must be positive, got {h}")
    return np.hstack([np.ones((dirs.shape[0], 1)), h * dirs])


def _as_system(design, values, prior):
    V = np.asarray(design, dtype=float)
    f = np.asarray(values, dtype=float)
    if V.ndim != 2 or f.shape != (V.shape[0],):
        raise ValueError(f"design {V.shape} and values {f.shape} disagree")
    p = V.shape[1]
    g0 = np.zeros(p) if prior is None else np.asarray(prior, dtype=float)
    if g0.shape != (p,):
        raise ValueError(f"prior must have length {p}, got {g0.shape}")
    return V, f, g0


class _Spectral:
    """Thin SVD of the design, shared by every alpha on one instance."""

    def __init__(self, V, f, g0):
        self.n, self.p = V.shape
        self.V, self.f, self.g0 = V, f, g0
        U, s, Wt = np.linalg.svd(V, full_matrices=False)
        self.U, self.s, self.Wt = U, s, Wt
        self.r = f - V @ g0
        self.Utr = U.T @ self.r
        self.perp2 = float(np.sum((self.r - U @ self.Utr) ** 2))
        cutoff = s[0] * max(V.shape) * np.finfo(float).eps if s.size else 0.0
        self.rank = int(np.sum(s > cutoff))
        self.full_rank = self.rank == self.p

    def filters(self, alpha):
        """Diagonal of A(alpha) in the left singular basis."""
        s2 = self.s**2
        if alpha == 0:
            return (self.s > 0).astype(float) * (np.arange(s2.size) < self.rank)
        return s2 / (s2 + alpha)

    def solve(self, alpha):
        if alpha == 0 and not self.full_rank:
            raise SingularSystemError("V^T V is singular; alpha = 0 is not allowed here")
        if alpha == 0:
            coef = 1.0 / self.s
        else:
            coef = self.s / (self.s**2 + alpha)
        return self.g0 + self.Wt.T @ (coef * self.Utr)

    def trace_A(self, alpha):
        return float(np.sum(self.filters(alpha)))

    def gcv(self, alpha, trace_A=None):
        phi = self.filters(alpha)
        num = self.perp2 + float(np.sum(((1.0 - phi) * self.Utr) ** 2))
        tr = self.trace_A(alpha) if trace_A is None else trace_A
        den = self.n - tr
        if den <= 1e-12 * self.n:
            raise DegenerateGCVError(
                f"trace(I - A) = {den:.3g} at alpha = {alpha:g}; the fit interpolates the data"
            )
        return num / den**2


def _hutchinson_trace(V, alpha, probes, seed) -> float:
    rng = make_rng(seed)
    n, p = V.shape
    M = V.T @ V + alpha * np.eye(p)
    Z = rng.choice([-1.0, 1.0], size=(n, probes))
    AZ = V @ np.linalg.solve(M, V.T @ Z)
    return float(np.mean(np.sum(Z * AZ, axis=0)))


def ridge_solve(design, values, alpha: float, prior=None) -> GradientEstimate:
    """Minimizer of ``1/2 |V x - f|^2 + alpha/2 |x - prior|^2``."""
    V, f, g0 = _as_system(design, values, prior)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be finite and >= 0, got {alpha}")
    sys = _Spectral(V, f, g0)
    return _package(sys, alpha)


def _package(sys: _Spectral, alpha: float) -> GradientEstimate:
    x = sys.solve(alpha)
    resid = float(np.linalg.norm(sys.f - sys.V @ x))
    dof = max(1.0, sys.n - sys.trace_A(alpha))
    return GradientEstimate(
        phi_bar=float(x[0]),
        g=x[1:].copy(),
        alpha=float(alpha),
        noise_level=resid / math.sqrt(dof),
        prior=sys.g0.copy(),
    )


def gcv_score(
    alpha: float,
    design,
    values,
    prior=None,
    *,
    trace: str = "exact",
    probes: int = HUTCHINSON_PROBES,
    seed: SeedLike = 0,
) -> float:
    """GCV function ``|(I - A)(f - V g0)|^2 / trace(I - A)^2``.

    ``trace="hutchinson"`` replaces the exact trace of ``A(alpha)`` with a
    Rademacher-probe estimate.
    """
    V, f, g0 = _as_system(design, values, prior)
    if not alpha >= 0:
        raise ValueError("alpha must be >= 0")
    sys = _Spectral(V, f, g0)
    if trace == "exact":
        return sys.gcv(alpha)
    if trace == "hutchinson":
        return sys.gcv(alpha, trace_A=_hutchinson_trace(V, alpha, probes, seed))
    raise ValueError(f"unknown trace method {trace!r}")


def golden_section(fn: Callable[[float], float], a: float, b: float, tol: float):
    """Minimize a scalar function on [a, b]; returns (x, fn(x))."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        # ties keep the right-hand point (larger alpha)
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return (c, fc) if fc < fd else (d, fd)


def _select(sys: _Spectral, search_interval, grid_points=GRID_POINTS, tol=LOG_ALPHA_TOL):
    lo, hi = map(float, search_interval)
    if not lo < hi:
        raise ValueError("search interval must satisfy lo < hi")

    def score(x):
        return sys.gcv(10.0**x)

    grid = np.linspace(lo, hi, grid_points)
    scores = np.array([score(x) for x in grid])
    if not np.all(np.isfinite(scores)):
        raise ValueError("GCV is not finite on the search grid")
    # last minimal entry: ties go to the larger alpha
    i = grid.size - 1 - int(np.argmin(scores[::-1]))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    x, fx = golden_section(score, a, b, tol)
    best_x, best_f = (x, fx) if fx < scores[i] else (grid[i], scores[i])
    if i == 0 and best_x == grid[0] and sys.n > sys.rank:
        # minimum sits on the lower edge: the unregularized fit may be better still
        if sys.full_rank and sys.gcv(0.0) < best_f:
            return 0.0
    return 10.0**best_x


def select_alpha(design, values, prior=None, search_interval=DEFAULT_LOG_ALPHA_BRACKET) -> float:
    """Regularization parameter minimizing GCV over ``log10(alpha)`` in the interval.

    A coarse grid scan localizes the minimum and golden-section search refines
    it.  When the minimum is at the lower edge and the unregularized problem is
    well posed, ``alpha = 0`` is returned if it scores at least as well.
    """
    V, f, g0 = _as_system(design, values, prior)
    return _select(_Spectral(V, f, g0), search_interval)


def estimate(
    design,
    values,
    prior=None,
    *,
    alpha: float | None = None,
    search_interval=DEFAULT_LOG_ALPHA_BRACKET,
) -> GradientEstimate:
    """GCV-regularized estimate of ``(phi_bar, g)``.

    Passing ``alpha`` skips the GCV search and uses that value directly.
    """
    V, f, g0 = _as_system(design, values, prior)
    sys = _Spectral(V, f, g0)
    if alpha is None:
        alpha = _select(sys, search_interval)
    return _package(sys, alpha)


def central_difference(fn: Callable, t, v, h: float) -> float:
    """``(f(t + h v) - f(t - h v)) / 2h``; exactly two evaluations of ``fn``."""
    if not h > 0:
        raise ValueError("h must be positive")
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_NORM_TOL:
        raise ValueError("direction must be a unit vector")
    return (fn(t + h * v) - fn(t - h * v)) / (2.0 * h)


def central_difference_gradient(fn: Callable, t, h: float, axes: Sequence[np.ndarray] | None = None):
    """Gradient from central differences along the coordinate axes (2d evaluations)."""
    t = np.asarray(t, dtype=float)
    axes = np.eye(t.size) if axes is None else np.asarray(axes, dtype=float)
    return np.array([central_difference(fn, t, e, h) for e in axes])


def optimal_step(noise: NoiseModel) -> float:
    """Stencil size balancing noise and nonlinearity error: ``(sigma / 2N)^(1/3)``."""
    if not noise.nonlinear_residual > 0:
        raise ValueError("nonlinear_residual must be positive")
    return (noise.sigma / (2.0 * noise.nonlinear_residual)) ** (1.0 / 3.0)
