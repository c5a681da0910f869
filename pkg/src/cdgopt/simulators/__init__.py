"""Stochastic design-under-test models mapping templates to hit-coverage vectors.

A simulator adapter exposes ``n_events``, ``raw_dim``, ``weights(raw)`` and
``hits(raw, n_runs, rng) -> (n_runs, n_events) bool``.
"""

from .multiplication import MultiplicationSimulator, mult_hits, mult_simulate
from .northstar import (
    C_HARD,
    CoverageEvent,
    Instruction,
    NorthStarSimulator,
    Template,
    event_from_index,
    event_index,
    expert_template,
    legal_events,
    northstar_generate,
    northstar_hits,
    northstar_run,
)

__all__ = [
    "C_HARD",
    "CoverageEvent",
    "Instruction",
    "MultiplicationSimulator",
    "NorthStarSimulator",
    "Template",
    "event_from_index",
    "event_index",
    "expert_template",
    "legal_events",
    "make_simulator",
    "mult_hits",
    "mult_simulate",
    "northstar_generate",
    "northstar_hits",
    "northstar_run",
]


def make_simulator(kind: str, **params):
    if kind == "northstar":
        return NorthStarSimulator()
    if kind == "multiplication":
        return MultiplicationSimulator(**params)
    raise ValueError(f"unknown simulator {kind!r}")
