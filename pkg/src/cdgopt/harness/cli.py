"""``cdg`` command-line entry point.

Every invocation writes into one output directory: ``config.yaml`` (the
effective configuration), line-oriented run logs, delimited result files and
a text summary.  Exit status: 0 success, 1 usage or configuration error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..optimizers import OptimizationError
from ..seeding import STREAM_REFERENCE
from .config import ConfigError, ExperimentConfig
from .experiments import (
    ensemble,
    explore,
    landscape,
    optimize,
    reference_count,
    render_explore,
    render_explore_summary,
    render_grid,
    render_runs,
    render_stats,
    render_stats_text,
)
from .parallel import resolve_workers

log = logging.getLogger("cdgopt")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (default: <output.dir>/<command>)")
    common.add_argument("--workers", type=int, help="worker processes (default: $CDG_WORKERS or CPU count)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cdg", description="Coverage-directed generation by noisy derivative-free optimization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("explore", parents=[common], help="random Dirichlet(1) template exploration")
    p = sub.add_parser("optimize", parents=[common], help="single optimizer run with iteration table")
    p.add_argument("--method", choices=["implicit_filtering", "steepest_descent", "lbfgs"])
    p = sub.add_parser("ensemble", parents=[common], help="seeded ensembles over (N, n) cells")
    p.add_argument("--method", choices=["implicit_filtering", "steepest_descent", "lbfgs"])
    sub.add_parser("landscape", parents=[common], help="objective on a 2-D random slice")
    p = sub.add_parser("true-prob", parents=[common], help="reference hit probability at a template")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--raw", help="comma-separated raw logits (default: all zeros)")
    src.add_argument("--from-run", type=Path, help="use t_opt from a run log (run.jsonl)")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig().validate()
    data = cfg.to_dict()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be non-negative")
        data["master_seed"] = args.seed
    if getattr(args, "method", None):
        data["optimizer"]["method"] = args.method
    return ExperimentConfig.from_dict(data)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse_raw(args, cfg) -> np.ndarray:
    dim = cfg.simulator.build().raw_dim
    if args.from_run:
        from ..optimizers import RunRecord

        try:
            raw = RunRecord.from_jsonl(args.from_run.read_text(encoding="utf-8")).t_opt
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"--from-run: cannot read run log: {exc}") from None
    elif args.raw:
        try:
            raw = [float(v) for v in args.raw.split(",")]
        except ValueError:
            raise ConfigError("--raw: expected comma-separated numbers") from None
    else:
        raw = [0.0] * dim
    if len(raw) != dim:
        raise ConfigError(f"--raw: expected {dim} values, got {len(raw)}")
    return np.asarray(raw, dtype=float)


def run_command(args, cfg: ExperimentConfig, out: Path, workers: int) -> str:
    """Run one subcommand, write its artifacts, and return the text summary."""
    _write(out / "config.yaml", cfg.to_yaml())
    if args.command == "optimize":
        try:
            result = optimize(cfg, workers)
        except OptimizationError as exc:
            _write(out / "run.jsonl", exc.record.to_jsonl())
            raise
        _write(out / "run.jsonl", result.record.to_jsonl())
        _write(out / "table.txt", result.table)
        return result.table
    if args.command == "ensemble":
        result = ensemble(cfg, workers)
        for (N, n, r), text in sorted(result.logs.items()):
            _write(out / "runs" / f"N{N}_n{n}_run{r:03d}.jsonl", text)
        _write(out / "stats.csv", render_stats(result.stats))
        _write(out / "runs.csv", render_runs(result.runs))
        summary = render_stats_text(result)
        _write(out / "stats.txt", summary)
        return summary
    if args.command == "explore":
        report = explore(cfg, workers)
        _write(out / "events.csv", render_explore(report))
        summary = render_explore_summary(report)
        _write(out / "summary.txt", summary)
        return summary
    if args.command == "landscape":
        grid = landscape(cfg, workers)
        _write(out / "grid.csv", render_grid(grid))
        summary = (f"{grid.values.shape[0]}x{grid.values.shape[1]} grid, extent {cfg.landscape.extent}, "
                   f"N = {cfg.landscape.samples}; min {float(grid.values.min())!r}, max {float(grid.values.max())!r}\n")
        _write(out / "summary.txt", summary)
        return summary
    if args.command == "true-prob":
        raw = _parse_raw(args, cfg)
        hits = reference_count(raw, cfg.simulator.selector(), cfg.reference_samples,
                               (cfg.master_seed, STREAM_REFERENCE, 0), cfg.simulator.build())
        p = hits / cfg.reference_samples
        payload = {"raw": raw.tolist(), "hits": hits, "samples": cfg.reference_samples, "probability": p}
        _write(out / "true_prob.json", json.dumps(payload, indent=2) + "\n")
        return f"p = {p!r} ({hits} hits in {cfg.reference_samples} runs)\n"
    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        workers = resolve_workers(args.workers)
    except (ConfigError, ValueError) as exc:
        print(f"cdg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or Path(cfg.output.dir) / args.command
    log.info("%s: writing to %s with %d worker(s)", args.command, out, workers)
    try:
        summary = run_command(args, cfg, out, workers)
    except ConfigError as exc:
        print(f"cdg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"cdg: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(summary)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
