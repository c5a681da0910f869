"""Two-number multiplication model.

Each test instance draws two numbers from a binned distribution on (0, 1],
multiplies them, and hits the coverage event of the bin the product falls in.
"""

from __future__ import annotations

import numpy as np

from ..seeding import SeedLike, make_rng


def check_distribution(weights, size: int | None = None, atol: float = 1e-9) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if size is not None and w.size != size:
        raise ValueError(f"expected {size} weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > atol:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return w


def product_bins(weights, n_runs: int, rng: np.random.Generator) -> np.ndarray:
    """1-based bin index of the product for ``n_runs`` independent instances."""
    w = check_distribution(weights)
    k = w.size
    bins = rng.choice(k, size=(n_runs, 2), p=w / w.sum()) + 1
    # uniform within ((i - 1)/k, i/k]
    x = (bins - rng.random((n_runs, 2))) / k
    prod = x[:, 0] * x[:, 1]
    return np.clip(np.ceil(prod * k).astype(np.int64), 1, k)


def mult_simulate(weights, rng_seed: SeedLike) -> np.ndarray:
    """Hit-coverage vector (length k, exactly one bit set) for one instance."""
    return mult_hits(weights, 1, make_rng(rng_seed))[0]


def mult_hits(weights, n_runs: int, rng: np.random.Generator) -> np.ndarray:
    w = check_distribution(weights)
    hits = np.zeros((n_runs, w.size), dtype=bool)
    hits[np.arange(n_runs), product_bins(w, n_runs, rng) - 1] = True
    return hits


def uniform_product_cdf(a):
    """P(XY <= a) for independent X, Y ~ U(0, 1)."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, a - a * np.log(np.where(a > 0, a, 1.0)), 0.0)
    return np.clip(out, 0.0, 1.0)


def uniform_bin_probabilities(k: int) -> np.ndarray:
    edges = uniform_product_cdf(np.arange(k + 1) / k)
    return np.diff(edges)


def quadratic_weights(k: int) -> np.ndarray:
    """Bin weights growing quadratically across (0, 1], normalized."""
    w = np.arange(1, k + 1, dtype=float) ** 2
    return w / w.sum()


class MultiplicationSimulator:
    """Noisy-objective adapter: raw vectors are logits of the bin weights."""

    name = "multiplication"

    def __init__(self, k: int = 100):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.n_events = k
        self.raw_dim = k

    def weights(self, raw) -> np.ndarray:
        from ..objective import softmax

        return softmax(np.asarray(raw, dtype=float))

    def hits(self, raw, n_runs: int, rng: np.random.Generator) -> np.ndarray:
        return mult_hits(self.weights(raw), n_runs, rng)

    def hits_for_weights(self, weights, n_runs: int, rng: np.random.Generator) -> np.ndarray:
        return mult_hits(weights, n_runs, rng)
