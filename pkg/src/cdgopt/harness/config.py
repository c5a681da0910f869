"""Experiment configuration: a YAML document with one section per concern.

Unknown keys anywhere in the document are errors, reported with their dotted
path.  ``ExperimentConfig.to_dict`` and ``from_dict`` round-trip exactly.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..objective import TargetSelector, parse_target
from ..optimizers import METHODS, OptimizerConfig
from ..simulators import C_HARD, make_simulator


class ConfigError(ValueError):
    """Invalid or unparseable configuration; the message names the field."""


@dataclass
class SimulatorConfig:
    kind: str = "northstar"
    # number of bins, multiplication model only
    k: int = 100
    # event index, list of indices, or a [C0, S0, C1, S1, CR] event; None picks the hard event
    target: Any = None

    def validate(self, path="simulator"):
        if self.kind not in ("northstar", "multiplication"):
            raise ConfigError(f"{path}.kind: unknown simulator {self.kind!r}")
        if self.kind == "multiplication" and (not isinstance(self.k, int) or self.k < 1):
            raise ConfigError(f"{path}.k: must be a positive integer")
        try:
            self.selector()
        except (ValueError, TypeError, IndexError) as exc:
            raise ConfigError(f"{path}.target: {exc}") from None

    def build(self):
        return make_simulator(self.kind, k=self.k) if self.kind == "multiplication" else make_simulator(self.kind)

    def selector(self) -> TargetSelector:
        sim = self.build()
        if self.target is None:
            default = C_HARD.index if self.kind == "northstar" else self.k - 1
            return TargetSelector((default,))
        return parse_target(self.target, sim.n_events)


@dataclass
class OptimizerSection:
    method: str = "steepest_descent"
    n_directions: int = 25
    samples_per_point: int = 25
    step: float = 5.0
    mu_init: float = 10.0
    max_iters: int = 50
    max_ls_iters: int = 10
    h_min: float = 1e-3
    lbfgs_memory: int = 100
    accept_rule: str = "strict"

    def validate(self, path="optimizer"):
        if self.method not in METHODS:
            raise ConfigError(f"{path}.method: must be one of {sorted(METHODS)}, got {self.method!r}")
        try:
            self.build(0)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def build(self, master_seed, **overrides) -> OptimizerConfig:
        params = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "method"}
        params.update(overrides)
        return OptimizerConfig(master_seed=master_seed, **params)


@dataclass
class EnsembleSection:
    runs: int = 25
    # per-iteration budget N * n every cell must respect; None accepts any cells
    budget: Optional[int] = None
    cells: list = field(default_factory=lambda: [[5, 125], [25, 25], [125, 5]])

    def validate(self, path="ensemble"):
        if not isinstance(self.runs, int) or self.runs < 1:
            raise ConfigError(f"{path}.runs: must be an integer >= 1")
        if not self.cells:
            raise ConfigError(f"{path}.cells: at least one (N, n) cell is required")
        for i, cell in enumerate(self.cells):
            if (not isinstance(cell, (list, tuple)) or len(cell) != 2
                    or not all(isinstance(v, int) and v >= 1 for v in cell)):
                raise ConfigError(f"{path}.cells[{i}]: expected [N, n] with positive integers, got {cell!r}")
            if self.budget is not None and cell[0] * cell[1] != self.budget:
                raise ConfigError(
                    f"{path}.cells[{i}]: N * n = {cell[0] * cell[1]} does not match budget {self.budget}"
                )
        if len({tuple(c) for c in self.cells}) != len(self.cells):
            raise ConfigError(f"{path}.cells: duplicate cells")


@dataclass
class ExploreSection:
    templates: int = 5000
    runs_per_template: int = 100

    def validate(self, path="explore"):
        for name in ("templates", "runs_per_template"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{path}.{name}: must be an integer >= 1")


@dataclass
class LandscapeSection:
    extent: float = 20.0
    points: int = 21
    samples: int = 10
    # raw logits of the grid centre; None is the origin (the uniform template)
    center: Optional[list] = None

    def validate(self, path="landscape"):
        if not isinstance(self.points, int) or self.points < 2:
            raise ConfigError(f"{path}.points: must be an integer >= 2")
        if not isinstance(self.samples, int) or self.samples < 1:
            raise ConfigError(f"{path}.samples: must be an integer >= 1")
        if not isinstance(self.extent, (int, float)) or self.extent < 0:
            raise ConfigError(f"{path}.extent: must be a non-negative number")


@dataclass
class OutputSection:
    dir: str = "runs"


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    reference_samples: int = 100_000
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    explore: ExploreSection = field(default_factory=ExploreSection)
    landscape: LandscapeSection = field(default_factory=LandscapeSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed: must be a non-negative integer")
        if not isinstance(self.reference_samples, int) or self.reference_samples < 1:
            raise ConfigError("reference_samples: must be an integer >= 1")
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            if hasattr(section, "validate"):
                section.validate(f.name)
        if self.landscape.center is not None:
            dim = self.simulator.build().raw_dim
            if len(self.landscape.center) != dim:
                raise ConfigError(f"landscape.center: expected {dim} values")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        return _build(cls, {} if data is None else data, "").validate()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        if data is None:
            raise ConfigError("config: empty document")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_yaml(text)


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"{where}: unknown key")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, {} if value is None else value, sub)
        else:
            kwargs[name] = _coerce(value, hint, sub)
    return cls(**kwargs)


def _coerce(value, hint, path):
    if hint is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if hint is float and isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot (1e-3) as strings
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if hint is int and isinstance(value, bool):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if hint in (int, float, str) and not isinstance(value, hint):
        raise ConfigError(f"{path}: expected {hint.__name__}, got {value!r}")
    return value
