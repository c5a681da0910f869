"""Experiment runners behind the command-line interface.

Seed layout (all below ``master_seed``):

* optimize: run path ``(master,)``; reference estimates ``(master, REFERENCE, row)``
* ensemble: run path ``(master, N, n, run)``, so a cell's numbers do not
  depend on which other cells are present or on their order
* explore: template ``i`` uses ``(master, EXPLORE, i)``
* landscape: directions ``(master, LANDSCAPE, 0)``, noise ``(master, LANDSCAPE, 1, repeat)``

Objective noise for a run lives under ``(run path, OBJECTIVE)`` and search
directions under ``(run path, DIRECTIONS)``.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from ..objective import NoisyObjective, TargetSelector, sample_directions
from ..optimizers import METHODS, RunRecord
from ..seeding import (
    STREAM_EXPLORE,
    STREAM_LANDSCAPE,
    STREAM_OBJECTIVE,
    STREAM_REFERENCE,
    extend_seed,
    make_rng,
)
from ..simulators import NorthStarSimulator, event_from_index
from ..simulators.northstar import BLOCKS, Template, dirichlet_template
from .config import ExperimentConfig
from .parallel import ordered_map


class DegenerateSampleWarning(UserWarning):
    """Sample variance requested from a single observation."""


# ---- reference probability ---------------------------------------------------------


def reference_count(raw, target: TargetSelector, samples: int, seed, simulator) -> int:
    """Total target hits over ``samples`` runs at ``raw``."""
    if samples < 1:
        raise ValueError("reference_samples must be >= 1")
    hits = simulator.hits(np.asarray(raw, dtype=float), samples, make_rng(seed))
    return int(target.mass(hits).sum())


def true_probability(raw, target: TargetSelector, reference_samples: int, seed, simulator=None) -> float:
    """High-precision empirical hit probability of the target at ``raw``."""
    sim = simulator if simulator is not None else NorthStarSimulator()
    target.check(sim.n_events)
    return reference_count(raw, target, reference_samples, seed, sim) / reference_samples


def _reference_task(args):
    cfg_dict, raw, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    sim = cfg.simulator.build()
    return reference_count(raw, cfg.simulator.selector(), cfg.reference_samples, seed, sim)


# ---- single optimization -----------------------------------------------------------


def run_optimizer(cfg: ExperimentConfig, run_seed, method: str | None = None, **overrides) -> RunRecord:
    sim = cfg.simulator.build()
    target = cfg.simulator.selector()
    opt = cfg.optimizer.build(run_seed, **overrides)
    objective = NoisyObjective(sim, target, opt.samples_per_point, extend_seed(run_seed, STREAM_OBJECTIVE))
    return METHODS[method or cfg.optimizer.method](objective, opt)


@dataclass
class OptimizeResult:
    record: RunRecord
    row_probabilities: list
    p_opt: float
    table: str


def optimize(cfg: ExperimentConfig, workers: int = 1) -> OptimizeResult:
    """One optimizer run plus the reference probability at every reported row."""
    master = cfg.master_seed
    record = run_optimizer(cfg, (master,))
    rows = record.table_rows()
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, record.t_opt, (master, STREAM_REFERENCE, 0))]
    tasks += [(cfg_dict, e.raw_point, (master, STREAM_REFERENCE, i + 1)) for i, e in enumerate(rows)]
    counts = ordered_map(_reference_task, tasks, workers)
    probs = [c / cfg.reference_samples for c in counts]
    table = render_iteration_table(record, probs[1:], probs[0], cfg)
    return OptimizeResult(record, probs[1:], probs[0], table)


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return str(x)
    if x == 0:
        return "0"
    return f"{x:.4g}"


def _aligned(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def decode_weights(cfg: ExperimentConfig, raw) -> dict:
    sim = cfg.simulator.build()
    w = sim.weights(np.asarray(raw, dtype=float))
    if isinstance(w, Template):
        return {name.upper(): [round(float(v), 4) for v in getattr(w, name)] for name in BLOCKS}
    return {"W": [round(float(v), 4) for v in w]}


def render_iteration_table(record: RunRecord, probs, p_opt, cfg: ExperimentConfig) -> str:
    """Iteration history and final summary; objective values are shown as probabilities."""
    rows = record.table_rows()
    if record.method == "implicit_filtering":
        header = ["I", "f*", "phi_bar", "Update?", "h", "p(target)"]
        body = [[e.iter, _fmt(-e.f_star), _fmt(-e.phi_bar), e.accepted, _fmt(e.step), _fmt(p)]
                for e, p in zip(rows, probs)]
    else:
        header = ["I", "phi_bar", "|g|", "|w|", "mu_ls", "Update?", "p(target)"]
        body = [[f"{e.iter}.{e.ls_iter}", _fmt(-e.phi_bar), _fmt(e.grad_norm), _fmt(e.noise_level),
                 _fmt(e.step), e.accepted, _fmt(p)] for e, p in zip(rows, probs)]
    out = [f"{record.method} history (N={record.samples_per_point}, n={cfg.optimizer.n_directions}, "
           f"h={_fmt(cfg.optimizer.step)})\n", _aligned(header, body), "\nSummary of final results\n"]
    out.append(f"total simulations = {record.total_simulations}\n")
    for name, values in decode_weights(cfg, record.t_opt).items():
        out.append(f"{name}_opt = [{', '.join(_fmt(v) for v in values)}]\n")
    if record.f_opt is not None:
        out.append(f"f_opt = {_fmt(-record.f_opt)}\n")
    out.append(f"phi_bar_opt = {_fmt(-record.phi_bar_opt)}\n")
    out.append(f"p_opt = {_fmt(p_opt)}\n")
    out.append(f"termination = {record.termination_reason}\n")
    return "".join(out)


# ---- ensembles -----------------------------------------------------------------------

STATS_COLUMNS = ("N", "n", "mean_iters", "var_iters", "mean_phi_opt", "var_phi_opt",
                 "mean_p_opt", "var_p_opt", "max_p_opt", "failures", "runs")
RUNS_COLUMNS = ("N", "n", "run", "iters", "phi_opt", "f_opt", "p_opt", "reference_hits",
                "total_simulations", "termination_reason")


@dataclass(frozen=True)
class CellStats:
    N: int
    n: int
    mean_iters: float
    var_iters: float
    mean_phi_opt: float
    var_phi_opt: float
    mean_p_opt: float
    var_p_opt: float
    max_p_opt: float
    failures: int
    runs: int


@dataclass(frozen=True)
class RunSummary:
    N: int
    n: int
    run: int
    iters: int
    phi_opt: float
    f_opt: float | None
    p_opt: float
    reference_hits: int
    total_simulations: int
    termination_reason: str

    @property
    def failed(self) -> bool:
        return self.reference_hits == 0


@dataclass
class EnsembleResult:
    method: str
    stats: list
    runs: list
    logs: dict = field(default_factory=dict)

    def cell(self, N: int, n: int) -> CellStats:
        for s in self.stats:
            if (s.N, s.n) == (N, n):
                return s
        raise KeyError((N, n))


def _ensemble_task(args):
    cfg_dict, method, N, n, run = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = (cfg.master_seed, N, n, run)
    record = run_optimizer(cfg, seed, method, samples_per_point=N, n_directions=n)
    sim = cfg.simulator.build()
    hits = reference_count(record.t_opt, cfg.simulator.selector(), cfg.reference_samples,
                           extend_seed(seed, STREAM_REFERENCE), sim)
    summary = RunSummary(
        N=N, n=n, run=run, iters=record.total_iterations, phi_opt=-record.phi_bar_opt,
        f_opt=None if record.f_opt is None else -record.f_opt, p_opt=hits / cfg.reference_samples,
        reference_hits=hits, total_simulations=record.total_simulations,
        termination_reason=record.termination_reason,
    )
    return summary, record.to_jsonl()


def _moments(values):
    x = np.asarray(values, dtype=float)
    var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    return float(np.mean(x)), var


def cell_stats(N: int, n: int, runs) -> CellStats:
    if len(runs) == 1:
        warnings.warn(f"cell ({N}, {n}) has a single run; variances reported as 0", DegenerateSampleWarning)
    mi, vi = _moments([r.iters for r in runs])
    mphi, vphi = _moments([r.phi_opt for r in runs])
    mp, vp = _moments([r.p_opt for r in runs])
    return CellStats(N, n, mi, vi, mphi, vphi, mp, vp, float(max(r.p_opt for r in runs)),
                     sum(r.failed for r in runs), len(runs))


def ensemble(cfg: ExperimentConfig, workers: int = 1, method: str | None = None) -> EnsembleResult:
    """Independent seeded runs for every (N, n) cell of the ensemble section."""
    method = method or cfg.optimizer.method
    cfg_dict = cfg.to_dict()
    cells = [tuple(c) for c in cfg.ensemble.cells]
    tasks = [(cfg_dict, method, N, n, r) for N, n in cells for r in range(cfg.ensemble.runs)]
    results = ordered_map(_ensemble_task, tasks, workers)
    runs = [s for s, _ in results]
    logs = {(s.N, s.n, s.run): log for s, log in results}
    stats = [cell_stats(N, n, [r for r in runs if (r.N, r.n) == (N, n)]) for N, n in cells]
    return EnsembleResult(method, stats, runs, logs)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def render_stats(stats) -> str:
    return _csv_text(STATS_COLUMNS, [astuple(s) for s in stats])


def parse_stats(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != STATS_COLUMNS:
        raise ValueError(f"unexpected stats header {header}")
    types = [f.type for f in fields(CellStats)]
    out = []
    for row in reader:
        out.append(CellStats(*(int(v) if t in (int, "int") else float(v) for v, t in zip(row, types))))
    return out


def render_runs(runs) -> str:
    return _csv_text(RUNS_COLUMNS, [astuple(r) for r in runs])


def render_stats_text(result: EnsembleResult) -> str:
    header = ["N", "n", "mean I_t", "s2[I_t]", "mean phi_opt", "s2[phi_opt]", "mean p_opt", "s2[p_opt]",
              "max p_opt", "Failures"]
    body = [[s.N, s.n, _fmt(s.mean_iters), _fmt(s.var_iters), _fmt(s.mean_phi_opt), _fmt(s.var_phi_opt),
             _fmt(s.mean_p_opt), _fmt(s.var_p_opt), _fmt(s.max_p_opt), f"{s.failures}/{s.runs}"]
            for s in result.stats]
    return f"{result.method} ensemble\n" + _aligned(header, body)


# ---- exploration -----------------------------------------------------------------


@dataclass
class ExploreReport:
    simulator: str
    templates: int
    runs_per_template: int
    hits: np.ndarray
    best_rate: np.ndarray
    best_template: np.ndarray
    best_weights: dict

    @property
    def hardest(self) -> int:
        """Least-hit event among those hit at least once."""
        hit = np.flatnonzero(self.hits)
        if hit.size == 0:
            raise ValueError("no event was hit")
        return int(hit[np.argmin(self.hits[hit])])

    @property
    def never_hit(self) -> list:
        return [int(i) for i in np.flatnonzero(self.hits == 0)]


def _random_weights(sim, rng):
    if isinstance(sim, NorthStarSimulator):
        return dirichlet_template(rng)
    e = rng.standard_exponential(sim.n_events)
    return e / e.sum()


def _explore_task(args):
    cfg_dict, start, stop = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    sim = cfg.simulator.build()
    runs = cfg.explore.runs_per_template
    counts = np.zeros((stop - start, sim.n_events), dtype=np.int64)
    weights = []
    for row, i in enumerate(range(start, stop)):
        rng = make_rng(cfg.master_seed, STREAM_EXPLORE, i)
        w = _random_weights(sim, rng)
        counts[row] = sim.hits_for_weights(w, runs, rng).sum(axis=0)
        weights.append(w.flat if isinstance(w, Template) else w)
    return counts, np.array(weights)


def explore(cfg: ExperimentConfig, workers: int = 1, chunk: int = 100) -> ExploreReport:
    """Random Dirichlet(1) templates; per-event totals and best single template."""
    total = cfg.explore.templates
    if total < 1:
        raise ValueError("at least one template is required")
    cfg_dict = cfg.to_dict()
    bounds = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    parts = ordered_map(_explore_task, [(cfg_dict, a, b) for a, b in bounds], workers)
    counts = np.vstack([c for c, _ in parts])
    weights = np.vstack([w for _, w in parts])
    runs = cfg.explore.runs_per_template
    rates = counts / runs
    best = np.argmax(rates, axis=0)
    best_rate = rates[best, np.arange(rates.shape[1])]
    best = np.where(best_rate > 0, best, -1)
    best_weights = {int(j): weights[i].tolist() for j, i in enumerate(best) if i >= 0}
    return ExploreReport(cfg.simulator.kind, total, runs, counts.sum(axis=0), best_rate, best, best_weights)


def event_label(kind: str, index: int) -> str:
    return str(event_from_index(index)) if kind == "northstar" else f"bin {index + 1}"


def render_explore(report: ExploreReport) -> str:
    rows = [[j, event_label(report.simulator, j), int(report.hits[j]),
             repr(float(report.hits[j]) / (report.templates * report.runs_per_template)),
             repr(float(report.best_rate[j])), int(report.best_template[j])]
            for j in range(report.hits.size)]
    return _csv_text(("index", "event", "hits", "rate", "best_rate", "best_template"), rows)


def render_explore_summary(report: ExploreReport) -> str:
    j = report.hardest
    lines = [
        f"templates = {report.templates}, runs per template = {report.runs_per_template}",
        f"events hit = {int(np.count_nonzero(report.hits))} of {report.hits.size}",
        f"hardest event = {event_label(report.simulator, j)} (index {j}), total hits = {int(report.hits[j])}",
        f"best single-template rate = {float(report.best_rate[j])!r} (template {int(report.best_template[j])})",
        f"best template weights = {[round(v, 4) for v in report.best_weights[j]]}",
    ]
    return "\n".join(lines) + "\n"


# ---- landscape slices ------------------------------------------------------------


GRID_COLUMNS = ("i", "j", "a", "b", "value")


@dataclass
class LandscapeGrid:
    a: np.ndarray
    b: np.ndarray
    values: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, LandscapeGrid) and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b) and np.array_equal(self.values, other.values))


def _landscape_row(args):
    cfg_dict, center, y1, y2, a, bs, samples, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    sim = cfg.simulator.build()
    target = cfg.simulator.selector()
    out = []
    for b in bs:
        point = np.asarray(center) + a * np.asarray(y1) + b * np.asarray(y2)
        hits = sim.hits(point, samples, make_rng(seed))
        out.append(-float(target.mass(hits).sum()) / samples)
    return out


def landscape(cfg: ExperimentConfig, workers: int = 1, samples: int | None = None, repeat: int = 0) -> LandscapeGrid:
    """Objective on a 2-D grid spanned by two random directions through the centre.

    All grid points share one noise stream, so a grid of zero extent is
    constant and neighbouring points differ only through the template.
    """
    sec = cfg.landscape
    sim = cfg.simulator.build()
    N = sec.samples if samples is None else samples
    center = np.zeros(sim.raw_dim) if sec.center is None else np.asarray(sec.center, dtype=float)
    y1, y2 = sample_directions(2, sim.raw_dim, (cfg.master_seed, STREAM_LANDSCAPE, 0))
    axis = np.linspace(-sec.extent, sec.extent, sec.points)
    seed = (cfg.master_seed, STREAM_LANDSCAPE, 1, repeat)
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, center.tolist(), y1.tolist(), y2.tolist(), float(a), axis.tolist(), N, seed) for a in axis]
    values = np.array(ordered_map(_landscape_row, tasks, workers))
    return LandscapeGrid(axis.copy(), axis.copy(), values)


def render_grid(grid: LandscapeGrid) -> str:
    rows = [(i, j, float(a), float(b), float(grid.values[i, j]))
            for i, a in enumerate(grid.a) for j, b in enumerate(grid.b)]
    return _csv_text(GRID_COLUMNS, rows)


def parse_grid(text: str) -> LandscapeGrid:
    reader = csv.reader(io.StringIO(text))
    if tuple(next(reader)) != GRID_COLUMNS:
        raise ValueError("unexpected grid header")
    rows = [(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in reader]
    shape = (max(r[0] for r in rows) + 1, max(r[1] for r in rows) + 1)
    if len(rows) != shape[0] * shape[1]:
        raise ValueError("grid rows do not form a full rectangle")
    a, b, values = np.empty(shape[0]), np.empty(shape[1]), np.empty(shape)
    for i, j, x, y, v in rows:
        a[i], b[j], values[i, j] = x, y, v
    return LandscapeGrid(a, b, values)
