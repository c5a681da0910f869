"""Implicit filtering on a random-direction stencil."""

from __future__ import annotations

import math

import numpy as np

from ..gradient_estimator import build_design, estimate
from ..objective import sample_directions
from ..seeding import STREAM_DIRECTIONS, extend_seed
from .records import IterationEntry, OptimizationError, OptimizerConfig, RunRecord, as_list


def _fit(dirs, h, values):
    # the incumbent is the sample at v = 0, i.e. the row [1, 0, ..., 0]
    center = np.zeros((1, dirs.shape[1] + 1))
    center[0, 0] = 1.0
    return estimate(np.vstack([center, build_design(dirs, h)]), values)


def implicit_filtering(objective, config: OptimizerConfig, x0=None, directions=None) -> RunRecord:
    """Minimize a noisy objective by stencil sampling with stencil halving.

    Every iteration samples the incumbent and ``n`` points ``t + h v_i``.  The
    best sampled value ``f*`` replaces the stored best when strictly lower,
    and the incumbent moves to that point (ties keep the incumbent).
    Otherwise ``h`` is halved.  The run stops once ``h < h_min`` or after
    ``max_iters`` iterations.  A ridge fit over the same samples gives the
    reported smooth value ``phi_bar``.

    ``directions`` fixes the stencil (rows of unit vectors) instead of
    drawing fresh random directions each iteration.
    """
    d = objective.dim
    t = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    if t.shape != (d,):
        raise ValueError(f"x0 must have {d} entries")
    fixed = None if directions is None else np.asarray(directions, dtype=float)
    h = config.step
    record = RunRecord("implicit_filtering", objective.samples_per_point, config.to_dict())
    f_opt = math.inf
    phi_opt = None
    it = 0
    reason = "max_iters"
    try:
        while True:
            it += 1
            if fixed is None:
                dirs = sample_directions(config.n_directions, d, extend_seed(config.master_seed, STREAM_DIRECTIONS, it))
            else:
                dirs = fixed
            points = np.vstack([t, t + h * dirs])
            before = objective.evaluations
            values = objective(points)
            fit = _fit(dirs, h, values)
            # argmin returns the first minimum, so the incumbent wins ties
            j = int(np.argmin(values))
            f_star = float(values[j])
            accepted = f_star < f_opt
            h_used = h
            if accepted:
                f_opt = f_star
                t = points[j].copy()
                phi_opt = fit.phi_bar
            else:
                h = h / 2.0
                if phi_opt is not None:
                    # the fit is centred at the unchanged incumbent
                    phi_opt = fit.phi_bar
            record.add(IterationEntry(
                iter=it, ls_iter=1, phi_bar=fit.phi_bar, grad_norm=fit.grad_norm,
                noise_level=fit.noise_level, step=h_used, accepted=accepted, raw_point=as_list(t),
                evaluations=objective.evaluations - before, best=f_opt, f_star=f_star, alpha=fit.alpha,
            ))
            if h < config.h_min:
                reason = "stencil_floor"
                break
            if it >= config.max_iters:
                reason = "max_iters"
                break
    except Exception as exc:
        reason = f"error: {type(exc).__name__}: {exc}"
        record.termination_reason = reason
        raise OptimizationError(reason, _finish(record, t, f_opt, phi_opt, objective)) from exc
    record.termination_reason = reason
    return _finish(record, t, f_opt, phi_opt, objective)


def _finish(record, t, f_opt, phi_opt, objective):
    record.t_opt = as_list(t)
    record.f_opt = f_opt if math.isfinite(f_opt) else None
    record.phi_bar_opt = phi_opt
    record.total_simulations = objective.samples_per_point * record.total_evaluations
    return record
