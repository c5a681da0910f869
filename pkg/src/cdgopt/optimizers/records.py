"""Optimizer configuration and the run-record format shared by all drivers."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Optional

import numpy as np

from ..seeding import SeedLike

ACCEPT_RULES = ("strict", "noise_test")


@dataclass(frozen=True)
class OptimizerConfig:
    n_directions: int = 25
    samples_per_point: int = 25
    step: float = 5.0
    mu_init: float = 10.0
    max_iters: int = 50
    max_ls_iters: int = 10
    h_min: float = 1e-3
    lbfgs_memory: int = 100
    master_seed: SeedLike = 0
    # "strict" breaks the line search only on a new best; "noise_test" also
    # moves to a point that merely passes the noise test (t_opt unchanged)
    accept_rule: str = "strict"

    def __post_init__(self):
        for name in ("n_directions", "samples_per_point", "max_iters", "max_ls_iters", "lbfgs_memory"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("step", "mu_init", "h_min"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
            object.__setattr__(self, name, value)
        if self.accept_rule not in ACCEPT_RULES:
            raise ValueError(f"accept_rule must be one of {ACCEPT_RULES}, got {self.accept_rule!r}")
        seed = self.master_seed
        if isinstance(seed, list):
            object.__setattr__(self, "master_seed", tuple(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["master_seed"], tuple):
            d["master_seed"] = list(d["master_seed"])
        return d


@dataclass
class IterationEntry:
    """One estimate or stencil evaluation.

    ``step`` is the stencil size ``h`` for implicit filtering and the line
    search parameter ``mu_ls`` for the gradient methods.  ``final`` marks the
    last line-search row of a main iteration.
    """

    iter: int
    ls_iter: int
    phi_bar: float
    grad_norm: float
    noise_level: float
    step: float
    accepted: bool
    raw_point: list
    evaluations: int
    best: Optional[float]
    f_star: Optional[float] = None
    phi_old: Optional[float] = None
    alpha: Optional[float] = None
    noise_test_only: bool = False
    final: bool = True

    def to_json(self) -> dict:
        d = asdict(self)
        d["type"] = "iteration"
        return d

    @classmethod
    def from_json(cls, d: dict) -> "IterationEntry":
        d = dict(d)
        d.pop("type", None)
        return cls(**d)


@dataclass
class RunRecord:
    method: str
    samples_per_point: int
    config: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    t_opt: list = field(default_factory=list)
    phi_bar_opt: Optional[float] = None
    f_opt: Optional[float] = None
    total_simulations: int = 0
    termination_reason: str = ""

    def add(self, entry: IterationEntry) -> IterationEntry:
        self.entries.append(entry)
        return entry

    @property
    def total_evaluations(self) -> int:
        return sum(e.evaluations for e in self.entries)

    def recomputed_simulations(self) -> int:
        return self.samples_per_point * self.total_evaluations

    @property
    def total_iterations(self) -> int:
        """Rows requiring computation after the initial estimate, line searches included."""
        return sum(1 for e in self.entries if e.iter > 0)

    @property
    def main_iterations(self) -> int:
        return max((e.iter for e in self.entries), default=0)

    def best_sequence(self) -> list:
        return [e.best for e in self.entries if e.best is not None]

    def table_rows(self) -> list:
        return [e for e in self.entries if e.final and e.iter > 0]

    # ---- line-oriented log -----------------------------------------------------

    def to_jsonl(self) -> str:
        head = {"type": "run", "method": self.method, "samples_per_point": self.samples_per_point,
                "config": self.config}
        tail = {"type": "result", "t_opt": list(self.t_opt), "phi_bar_opt": self.phi_bar_opt,
                "f_opt": self.f_opt, "total_simulations": self.total_simulations,
                "termination_reason": self.termination_reason}
        lines = [head, *(e.to_json() for e in self.entries), tail]
        return "".join(json.dumps(line, allow_nan=False) + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text: str | Iterable[str]) -> "RunRecord":
        lines = text.splitlines() if isinstance(text, str) else list(text)
        record = None
        for raw in lines:
            if not raw.strip():
                continue
            obj = json.loads(raw)
            kind = obj.get("type")
            if kind == "run":
                record = cls(obj["method"], obj["samples_per_point"], obj.get("config", {}))
            elif record is None:
                raise ValueError("run log must start with a 'run' line")
            elif kind == "iteration":
                record.entries.append(IterationEntry.from_json(obj))
            elif kind == "result":
                for key in ("t_opt", "phi_bar_opt", "f_opt", "total_simulations", "termination_reason"):
                    setattr(record, key, obj[key])
            else:
                raise ValueError(f"unknown log line type {kind!r}")
        if record is None:
            raise ValueError("empty run log")
        return record


ENTRY_FIELDS = tuple(f.name for f in fields(IterationEntry))


def as_list(x: Any) -> list:
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


def finite_or_none(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) else None


class OptimizationError(RuntimeError):
    """An optimizer aborted; ``record`` holds the trace up to the failure."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record
