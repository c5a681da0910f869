"""Experiment orchestration: configuration, runners and the ``cdg`` CLI."""

from .config import ConfigError, ExperimentConfig
from .experiments import (
    CellStats,
    EnsembleResult,
    ExploreReport,
    LandscapeGrid,
    ensemble,
    explore,
    landscape,
    optimize,
    parse_grid,
    parse_stats,
    render_grid,
    render_stats,
    true_probability,
)

__all__ = [
    "CellStats",
    "ConfigError",
    "EnsembleResult",
    "ExperimentConfig",
    "ExploreReport",
    "LandscapeGrid",
    "ensemble",
    "explore",
    "landscape",
    "optimize",
    "parse_grid",
    "parse_stats",
    "render_grid",
    "render_stats",
    "true_probability",
]
