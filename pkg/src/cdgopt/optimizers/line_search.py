"""Gradient methods with a noise-aware backtracking line search.

Steepest descent uses ``B = I``; L-BFGS replaces the direction by the
two-loop recursion over stored curvature pairs.  Both share one loop:

* propose ``t = t_old + mu * p`` along the search direction ``p``;
* estimate ``phi_bar``, ``g`` and the noise level ``|w|`` at ``t``;
* break if ``phi_bar < phi_old + 2|w|`` and ``phi_bar < phi_opt``, else halve ``mu``;
* give up after ``max_ls_iters`` consecutive failures.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .estimators import RegressionEstimator
from .records import IterationEntry, OptimizationError, OptimizerConfig, RunRecord, as_list, finite_or_none

# the previous estimate stops being a useful prior after a move this many stencils long
PRIOR_RESET_STEPS = 10.0
CURVATURE_TOL = 1e-12


class LBFGSMemory:
    """Bounded history of curvature pairs ``(s, y)``."""

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("memory must be >= 1")
        self.m = m
        self.pairs: deque = deque(maxlen=m)

    def __len__(self):
        return len(self.pairs)

    def push(self, s, y) -> bool:
        """Store the pair unless ``s^T y <= 1e-12 |s||y|``; returns whether it was kept."""
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        sy = float(s @ y)
        if not sy > CURVATURE_TOL * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self.pairs.append((s.copy(), y.copy(), 1.0 / sy))
        return True

    def gamma(self) -> float:
        if not self.pairs:
            return 1.0
        s, y, _ = self.pairs[-1]
        return float(s @ y) / float(y @ y)


def two_loop_direction(g, memory: LBFGSMemory) -> np.ndarray:
    """``-H g`` with ``H`` the L-BFGS inverse Hessian, ``H0 = gamma I``."""
    q = np.array(g, dtype=float)
    alphas = []
    for s, y, rho in reversed(memory.pairs):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    r = memory.gamma() * q
    for (s, y, rho), a in zip(memory.pairs, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


def steepest_descent(objective, config: OptimizerConfig, x0=None, estimator=None) -> RunRecord:
    """Noise-aware steepest descent (``B = I``) starting from ``x0`` (default: the origin)."""
    return _descent(objective, config, x0, estimator, method="steepest_descent")


def lbfgs(objective, config: OptimizerConfig, x0=None, estimator=None) -> RunRecord:
    """L-BFGS within the same noise-aware framework; ``mu`` restarts at 1 every iteration."""
    return _descent(objective, config, x0, estimator, method="lbfgs")


def _descent(objective, config, x0, estimator, method) -> RunRecord:
    d = objective.dim
    t = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    if t.shape != (d,):
        raise ValueError(f"x0 must have {d} entries")
    est = estimator or RegressionEstimator(config.n_directions, config.step, config.master_seed)
    memory = LBFGSMemory(config.lbfgs_memory) if method == "lbfgs" else None
    record = RunRecord(method, objective.samples_per_point, config.to_dict())
    reset_length = PRIOR_RESET_STEPS * config.step

    t_opt = t.copy()
    phi_opt = math.inf
    state = {"t_opt": t_opt, "phi_opt": phi_opt, "phi0": None}

    def run_estimate(point, prior):
        before = objective.evaluations
        result = est(objective, point, prior)
        return result, objective.evaluations - before

    try:
        cur, used = run_estimate(t, None)
        state["phi0"] = cur.phi_bar
        record.add(IterationEntry(
            iter=0, ls_iter=0, phi_bar=cur.phi_bar, grad_norm=cur.grad_norm, noise_level=cur.noise_level,
            step=0.0, accepted=False, raw_point=as_list(t), evaluations=used, best=None, alpha=cur.alpha,
        ))
        mu = config.mu_init
        it = 0
        while True:
            it += 1
            t_old, old = t, cur
            if memory is None:
                direction = -old.g
            else:
                direction = two_loop_direction(old.g, memory)
                mu = 1.0
            ls = 1
            ls_break = False
            moved = False
            while True:
                t = t_old + mu * direction
                prior = old.coefficients if np.linalg.norm(t - t_old) <= reset_length else None
                cur, used = run_estimate(t, prior)
                passes = cur.phi_bar < old.phi_bar + 2.0 * cur.noise_level
                improved = passes and cur.phi_bar < phi_opt
                noise_only = passes and not improved
                if improved:
                    t_opt, phi_opt = t.copy(), cur.phi_bar
                    state.update(t_opt=t_opt, phi_opt=phi_opt)
                    moved = True
                elif noise_only and config.accept_rule == "noise_test":
                    moved = True
                entry = record.add(IterationEntry(
                    iter=it, ls_iter=ls, phi_bar=cur.phi_bar, grad_norm=cur.grad_norm,
                    noise_level=cur.noise_level, step=mu, accepted=improved, raw_point=as_list(t),
                    evaluations=used, best=finite_or_none(phi_opt), phi_old=old.phi_bar, alpha=cur.alpha,
                    noise_test_only=noise_only, final=False,
                ))
                if moved:
                    break
                mu /= 2.0
                ls += 1
                if ls > config.max_ls_iters:
                    ls_break = True
                    break
            entry.final = True
            if ls == 1:
                mu *= 2.0
            if memory is not None and moved:
                memory.push(t - t_old, cur.g - old.g)
            if ls_break:
                record.termination_reason = "line_search"
                break
            if it > config.max_iters:
                record.termination_reason = "max_iters"
                break
    except Exception as exc:
        record.termination_reason = f"error: {type(exc).__name__}: {exc}"
        raise OptimizationError(record.termination_reason, _finish(record, state, objective)) from exc
    return _finish(record, state, objective)


def _finish(record, state, objective):
    record.t_opt = as_list(state["t_opt"])
    # never accepted: fall back to the initial estimate at the starting point
    phi = state["phi_opt"] if math.isfinite(state["phi_opt"]) else state["phi0"]
    record.phi_bar_opt = phi
    record.total_simulations = objective.samples_per_point * record.total_evaluations
    return record
