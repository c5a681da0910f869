"""Noisy objective built on top of a coverage simulator.

Optimization happens over unconstrained logits.  Each directive block is
mapped to a probability vector with a softmax, the simulator is run N times
at the resulting template, and the objective is minus the empirical hit
probability of the target events.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .seeding import SeedLike, extend_seed, make_rng
from .simulators.northstar import BLOCKS, TEMPLATE_SIZE, CoverageEvent, Template, event_index


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax expects a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input must be finite")
    z = np.exp(x - x.max())
    return z / z.sum()


@dataclass(frozen=True)
class RawTemplate:
    """Unconstrained 23-entry logit vector."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (TEMPLATE_SIZE,):
            raise ValueError(f"raw template must have {TEMPLATE_SIZE} entries, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("raw template entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls) -> "RawTemplate":
        return cls(np.zeros(TEMPLATE_SIZE))

    def template(self) -> Template:
        return softmax_blocks(self.values)


def softmax_blocks(raw) -> Template:
    """Blockwise softmax of a 23-entry logit vector into a :class:`Template`."""
    if isinstance(raw, RawTemplate):
        raw = raw.values
    raw = RawTemplate(raw).values
    return Template(**{name: softmax(raw[s]) for name, s in BLOCKS.items()})


@dataclass(frozen=True)
class TargetSelector:
    """Target events: the rows of the identity that make up the projection."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in np.atleast_1d(self.indices))
        if not idx:
            raise ValueError("at least one target event is required")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate target indices: {idx}")
        if min(idx) < 0:
            raise ValueError(f"negative target index in {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, *events) -> "TargetSelector":
        """Build from event indices or :class:`CoverageEvent` values."""
        return cls(tuple(event_index(e) if isinstance(e, CoverageEvent) else int(e) for e in events))

    def check(self, n_events: int) -> "TargetSelector":
        if max(self.indices) >= n_events:
            raise ValueError(f"target index {max(self.indices)} out of range for {n_events} events")
        return self

    def mass(self, hits: np.ndarray) -> np.ndarray:
        """Per-run count of target events hit, ``1^T P^T s``."""
        return hits[:, list(self.indices)].sum(axis=1)


def _default_simulator():
    from .simulators import NorthStarSimulator

    return NorthStarSimulator()


def evaluate(raw, target: TargetSelector, N: int, rng_seed: SeedLike, simulator=None) -> float:
    """Minus the empirical target hit mass over ``N`` simulator runs."""
    if N < 1:
        raise ValueError("N must be >= 1")
    sim = simulator if simulator is not None else _default_simulator()
    target.check(sim.n_events)
    hits = sim.hits(raw, N, make_rng(rng_seed))
    return -float(target.mass(hits).sum()) / N


def sample_directions(n: int, d: int, rng_seed: SeedLike) -> np.ndarray:
    """``n`` isotropic unit vectors in ``R^d`` (normalized Gaussian draws), one per row."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = make_rng(rng_seed)
    out = np.empty((n, d))
    filled = 0
    while filled < n:
        z = rng.standard_normal((n - filled, d))
        norms = np.linalg.norm(z, axis=1)
        # a zero draw has no direction; redraw it
        keep = norms > 0
        z = z[keep] / norms[keep, None]
        out[filled : filled + z.shape[0]] = z
        filled += z.shape[0]
    return out


class _Counting:
    samples_per_point: int

    def __init__(self, dim: int, seed: SeedLike):
        self.dim = int(dim)
        self.seed = seed
        self.evaluations = 0
        self._next_point = 0

    @property
    def simulations(self) -> int:
        return self.evaluations * self.samples_per_point

    def _prepare(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points must have shape (k, {self.dim}), got {pts.shape}")
        return pts

    def _point_ids(self, k: int) -> range:
        ids = range(self._next_point, self._next_point + k)
        self._next_point += k
        self.evaluations += k
        return ids

    def __call__(self, points) -> np.ndarray:
        pts = self._prepare(points)
        return np.array([self._value(p, i) for p, i in zip(pts, self._point_ids(len(pts)))])


class NoisyObjective(_Counting):
    """``f(t) = -e_N`` of the target events, with fresh noise at every point.

    Point number ``i`` evaluated by this object uses the stream
    ``(seed, i)``, so the noise depends only on the evaluation order and
    never on scheduling.
    """

    def __init__(self, simulator, target: TargetSelector, samples_per_point: int, seed: SeedLike):
        if samples_per_point < 1:
            raise ValueError("samples_per_point must be >= 1")
        super().__init__(simulator.raw_dim, seed)
        self.simulator = simulator
        self.target = target.check(simulator.n_events)
        self.samples_per_point = int(samples_per_point)

    def _value(self, point, point_id):
        return evaluate(point, self.target, self.samples_per_point, extend_seed(self.seed, point_id), self.simulator)


class FunctionObjective(_Counting):
    """Smooth function plus Gaussian noise of standard deviation ``noise``."""

    def __init__(self, fn: Callable[[np.ndarray], float], dim: int, noise: float = 0.0,
                 seed: SeedLike = 0, samples_per_point: int = 1):
        if noise < 0:
            raise ValueError("noise must be non-negative")
        super().__init__(dim, seed)
        self.fn = fn
        self.noise = float(noise)
        self.samples_per_point = int(samples_per_point)

    def _value(self, point, point_id):
        value = float(self.fn(point))
        if self.noise:
            value += self.noise * make_rng(extend_seed(self.seed, point_id)).standard_normal()
        return value


def parse_target(value, n_events: int) -> TargetSelector:
    """Parse a target given as an index, a list of indices, or event 5-tuples."""
    if isinstance(value, (int, np.integer)):
        return TargetSelector((int(value),)).check(n_events)
    items: Iterable = value
    if isinstance(value, (list, tuple)) and len(value) == 5 and isinstance(value[0], str):
        items = [value]
    indices = []
    for item in items:
        if isinstance(item, (list, tuple)):
            indices.append(event_index(CoverageEvent(str(item[0]), str(item[1]), *map(int, item[2:]))))
        else:
            indices.append(int(item))
    return TargetSelector(tuple(indices)).check(n_events)
