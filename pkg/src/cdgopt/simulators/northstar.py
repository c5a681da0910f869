"""Abstract model of a two-pipe superscalar in-order processor.

The machine has a simple pipe S (handles Sim only) and a complex pipe C
(handles Cm1/Cm2/Cm3, and Sim when S is busy).  Each pipe has three stages:
0 data fetch, 1 execute, 2 write-back.  Up to two instructions are fetched per
cycle, in program order.  Nop consumes a fetch slot but never enters a pipe.

Timing rules:

* Sim executes for 1 cycle, Cm<k> for k cycles; every instruction spends one
  cycle in write-back.
* An instruction leaves stage 0 only when stage 1 of its pipe is free, no
  older instruction still in flight writes its source register (or, if it
  uses the condition register, no older in-flight instruction uses CR), and
  every older stage-0 instruction has already left stage 0.
* A Sim waiting in C0 moves to S0 as soon as S0 is empty.

Coverage is the cross product (C0 inst, S0 inst, C1 used, S1 used, S1 uses
CR) sampled after every cycle in ``[COVERAGE_START, COVERAGE_STOP)``.

Two implementations share these rules: :class:`Pipeline`, an object model
that exposes per-cycle state, and a compiled batch kernel used for sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from ..seeding import SeedLike, make_rng
from .multiplication import check_distribution

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

MNEMONICS = ("Nop", "Sim", "Cm1", "Cm2", "Cm3")
NOP, SIM, CM1, CM2, CM3 = range(5)
N_REGISTERS = 8
TEMPLATE_SIZE = 23
BLOCKS = {"iw": slice(0, 5), "sw": slice(5, 13), "tw": slice(13, 21), "cw": slice(21, 23)}
N_EVENTS = 80
COVERAGE_START = 10
COVERAGE_STOP = 110
# one cycle can fetch at most two instructions
MAX_PROGRAM = 2 * COVERAGE_STOP
_PREFETCH = 256  # multiple of the 4 draws per instruction


@dataclass(frozen=True)
class Template:
    """Directive weights: instruction, source register, target register, CR."""

    iw: np.ndarray
    sw: np.ndarray
    tw: np.ndarray
    cw: np.ndarray

    def __post_init__(self):
        for name, size in (("iw", 5), ("sw", 8), ("tw", 8), ("cw", 2)):
            w = check_distribution(getattr(self, name), size)
            w.setflags(write=False)
            object.__setattr__(self, name, w)

    @classmethod
    def from_vector(cls, t) -> "Template":
        t = np.asarray(t, dtype=float)
        if t.shape != (TEMPLATE_SIZE,):
            raise ValueError(f"template vector must have {TEMPLATE_SIZE} entries")
        return cls(**{name: t[s].copy() for name, s in BLOCKS.items()})

    @classmethod
    def uniform(cls) -> "Template":
        return cls(np.full(5, 0.2), np.full(8, 0.125), np.full(8, 0.125), np.full(2, 0.5))

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.iw, self.sw, self.tw, self.cw])

    def cumulative(self) -> np.ndarray:
        """(4, 8) table of per-block cumulative weights used by the samplers."""
        table = np.ones((4, 8))
        for row, w in enumerate((self.iw, self.sw, self.tw, self.cw)):
            c = np.cumsum(w) / w.sum()
            # pin the tail to 1 so rounding can never select a zero-weight entry
            c[np.flatnonzero(w)[-1]:] = 1.0
            table[row, : w.size] = c
        return table


def expert_template() -> Template:
    """Hand-built template favouring (Cm2, Nop, 0, 1, 0): Nop/Sim/Cm2 mix, one register, no CR."""
    e0 = np.eye(8)[0]
    return Template(np.array([0.5, 0.2, 0.0, 0.3, 0.0]), e0, e0, np.array([1.0, 0.0]))


class CoverageEvent(NamedTuple):
    c0_inst: str
    s0_inst: str
    c1_used: int
    s1_used: int
    s1_cr: int

    @property
    def index(self) -> int:
        return event_index(self)

    def __str__(self):
        return f"({self.c0_inst}, {self.s0_inst}, {self.c1_used}, {self.s1_used}, {self.s1_cr})"


def event_index(event: CoverageEvent) -> int:
    """Canonical index in [0, 80): C0 inst is the major axis, S1 CR the minor one."""
    c0 = MNEMONICS.index(event.c0_inst)
    s0 = ("Nop", "Sim").index(event.s0_inst)
    bits = (event.c1_used, event.s1_used, event.s1_cr)
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"indicator fields must be 0 or 1: {event}")
    return (((c0 * 2 + s0) * 2 + bits[0]) * 2 + bits[1]) * 2 + bits[2]


def event_from_index(index: int) -> CoverageEvent:
    if not 0 <= index < N_EVENTS:
        raise ValueError(f"event index {index} out of range [0, {N_EVENTS})")
    index, s1_cr = divmod(index, 2)
    index, s1_used = divmod(index, 2)
    index, c1_used = divmod(index, 2)
    c0, s0 = divmod(index, 2)
    return CoverageEvent(MNEMONICS[c0], ("Nop", "Sim")[s0], c1_used, s1_used, s1_cr)


C_HARD = CoverageEvent("Cm2", "Nop", 0, 1, 0)


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    src: int
    tgt: int
    uses_cr: bool

    def __post_init__(self):
        if self.mnemonic not in MNEMONICS:
            raise ValueError(f"unknown mnemonic {self.mnemonic!r}")
        if not (0 <= self.src < N_REGISTERS and 0 <= self.tgt < N_REGISTERS):
            raise ValueError("register index out of range")

    @property
    def latency(self) -> int:
        return 1 if self.mnemonic == "Sim" else MNEMONICS.index(self.mnemonic) - 1


def _draw_instruction(cum, rng) -> Instruction:
    # same draw order and inversion as the compiled kernel
    fields = []
    for row, last in ((0, 4), (1, 7), (2, 7)):
        u = rng.random()
        j = 0
        while j < last and u >= cum[row, j]:
            j += 1
        fields.append(j)
    uses_cr = rng.random() >= cum[3, 0]
    m = fields[0]
    return Instruction(MNEMONICS[m], fields[1], fields[2], bool(uses_cr) and m != NOP)


def instruction_stream(template: Template, rng: np.random.Generator) -> Iterator[Instruction]:
    cum = template.cumulative()
    while True:
        yield _draw_instruction(cum, rng)


def northstar_generate(template: Template, count: int, rng_seed: SeedLike) -> list[Instruction]:
    """The first ``count`` instructions of the program for this seed."""
    if count < 1:
        raise ValueError("count must be positive")
    stream = instruction_stream(template, make_rng(rng_seed))
    return [next(stream) for _ in range(count)]


# ---- object model -----------------------------------------------------------------


@dataclass
class _Slot:
    inst: Instruction
    age: int
    remaining: int = 0


class Pipeline:
    """Cycle-by-cycle machine state; slow but inspectable."""

    def __init__(self):
        # stages[pipe][stage], pipe 0 = S, 1 = C
        self.stages: list[list[_Slot | None]] = [[None] * 3, [None] * 3]
        self.cycle_count = 0
        self.fetched: list[Instruction] = []
        self.retired: list[Instruction] = []
        self.exec_cycles: list[tuple[Instruction, int]] = []
        self._pending: Instruction | None = None
        self._seq = 0
        self._exec_started: dict[int, int] = {}

    def _in_flight(self):
        for pipe in self.stages:
            for slot in pipe:
                if slot is not None:
                    yield slot

    def _hazard(self, slot: _Slot) -> bool:
        for other in self._in_flight():
            if other is slot or other.age > slot.age:
                continue
            if other.inst.tgt == slot.inst.src:
                return True
            if slot.inst.uses_cr and other.inst.uses_cr:
                return True
        return False

    def step(self, program: Iterator[Instruction] | None):
        """Advance one cycle; ``program=None`` stops fetching (drain mode)."""
        S, C = self.stages
        for pipe in self.stages:
            if pipe[2] is not None:
                self.retired.append(pipe[2].inst)
                pipe[2] = None
        for pipe in self.stages:
            slot = pipe[1]
            if slot is not None:
                if slot.remaining > 1:
                    slot.remaining -= 1
                else:
                    self.exec_cycles.append((slot.inst, self.cycle_count - self._exec_started.pop(slot.age)))
                    pipe[2], pipe[1] = slot, None
        waiting = sorted((p for p in (0, 1) if self.stages[p][0] is not None), key=lambda p: self.stages[p][0].age)
        blocked = False
        for p in waiting:
            pipe = self.stages[p]
            slot = pipe[0]
            if not blocked and pipe[1] is None and not self._hazard(slot):
                slot.remaining = slot.inst.latency
                self._exec_started[slot.age] = self.cycle_count
                pipe[1], pipe[0] = slot, None
            else:
                blocked = True
        if C[0] is not None and C[0].inst.mnemonic == "Sim" and S[0] is None:
            S[0], C[0] = C[0], None
        if program is not None:
            for _ in range(2):
                if self._pending is None:
                    self._pending = next(program)
                inst = self._pending
                if inst.mnemonic == "Nop":
                    self.fetched.append(inst)
                    self.retired.append(inst)
                    self._pending = None
                    continue
                if inst.mnemonic == "Sim" and S[0] is None:
                    target = S
                elif C[0] is None:
                    target = C
                else:
                    break
                target[0] = _Slot(inst, self._seq)
                self._seq += 1
                self.fetched.append(inst)
                self._pending = None
        self.cycle_count += 1

    def event(self) -> CoverageEvent:
        S, C = self.stages
        return CoverageEvent(
            C[0].inst.mnemonic if C[0] is not None else "Nop",
            "Sim" if S[0] is not None else "Nop",
            int(C[1] is not None),
            int(S[1] is not None),
            int(S[1] is not None and S[1].inst.uses_cr),
        )

    def snapshot(self) -> tuple:
        return tuple(
            tuple(None if s is None else s.inst.mnemonic for s in pipe) for pipe in self.stages
        )

    @property
    def empty(self) -> bool:
        return all(s is None for pipe in self.stages for s in pipe)


def trace_run(template: Template, rng_seed: SeedLike, cycles: int = COVERAGE_STOP):
    """Run the object model; returns (pipeline, per-cycle snapshots, per-cycle events)."""
    program = instruction_stream(template, make_rng(rng_seed))
    pipe = Pipeline()
    snapshots, events = [], []
    for _ in range(cycles):
        pipe.step(program)
        snapshots.append(pipe.snapshot())
        events.append(pipe.event())
    return pipe, snapshots, events


def reference_hits(template: Template, rng_seed: SeedLike) -> np.ndarray:
    """Hit vector from the object model; used to cross-check the kernel."""
    _, _, events = trace_run(template, rng_seed)
    hits = np.zeros(N_EVENTS, dtype=bool)
    for e in events[COVERAGE_START:COVERAGE_STOP]:
        hits[e.index] = True
    return hits


# ---- compiled batch kernel ------------------------------------------------------------


def _run_batch(cum, n_runs, rng, start, stop, hits):
    # slot k = pipe * 3 + stage, pipe 0 = S, 1 = C
    occ = np.zeros(6, np.bool_)
    mn = np.zeros(6, np.int64)
    src = np.zeros(6, np.int64)
    tgt = np.zeros(6, np.int64)
    usecr = np.zeros(6, np.bool_)
    age = np.zeros(6, np.int64)
    rem = np.zeros(2, np.int64)
    # uniforms are prefetched in blocks; the consumed sequence is unchanged
    buf = np.empty(_PREFETCH)
    bi = _PREFETCH
    for r in range(n_runs):
        occ[:] = False
        have = False
        nm = 0
        ns = 0
        nt = 0
        nc = False
        seq = 0
        for c in range(stop):
            occ[2] = False
            occ[5] = False
            for p in range(2):
                k = 3 * p + 1
                if occ[k]:
                    if rem[p] > 1:
                        rem[p] -= 1
                    else:
                        occ[k + 1] = True
                        mn[k + 1] = mn[k]
                        src[k + 1] = src[k]
                        tgt[k + 1] = tgt[k]
                        usecr[k + 1] = usecr[k]
                        age[k + 1] = age[k]
                        occ[k] = False
            first = 0
            if occ[3] and (not occ[0] or age[3] < age[0]):
                first = 1
            blocked = False
            for i in range(2):
                p = first if i == 0 else 1 - first
                k = 3 * p
                if not occ[k]:
                    continue
                ok = (not blocked) and (not occ[k + 1])
                if ok:
                    for q in range(6):
                        if q != k and occ[q] and age[q] < age[k]:
                            if tgt[q] == src[k] or (usecr[k] and usecr[q]):
                                ok = False
                                break
                if ok:
                    occ[k + 1] = True
                    mn[k + 1] = mn[k]
                    src[k + 1] = src[k]
                    tgt[k + 1] = tgt[k]
                    usecr[k + 1] = usecr[k]
                    age[k + 1] = age[k]
                    rem[p] = 1 if mn[k] == SIM else mn[k] - 1
                    occ[k] = False
                else:
                    blocked = True
            if occ[3] and mn[3] == SIM and not occ[0]:
                occ[0] = True
                mn[0] = SIM
                src[0] = src[3]
                tgt[0] = tgt[3]
                usecr[0] = usecr[3]
                age[0] = age[3]
                occ[3] = False
            for _slot in range(2):
                if not have:
                    if bi == _PREFETCH:
                        for j in range(_PREFETCH):
                            buf[j] = rng.random()
                        bi = 0
                    u = buf[bi]
                    nm = 0
                    while nm < 4 and u >= cum[0, nm]:
                        nm += 1
                    u = buf[bi + 1]
                    ns = 0
                    while ns < 7 and u >= cum[1, ns]:
                        ns += 1
                    u = buf[bi + 2]
                    nt = 0
                    while nt < 7 and u >= cum[2, nt]:
                        nt += 1
                    nc = buf[bi + 3] >= cum[3, 0] and nm != NOP
                    bi += 4
                    have = True
                if nm == NOP:
                    have = False
                    continue
                if nm == SIM and not occ[0]:
                    k = 0
                elif not occ[3]:
                    k = 3
                else:
                    break
                occ[k] = True
                mn[k] = nm
                src[k] = ns
                tgt[k] = nt
                usecr[k] = nc
                age[k] = seq
                seq += 1
                have = False
            if c >= start:
                c0 = mn[3] if occ[3] else 0
                s0 = 1 if occ[0] else 0
                c1 = 1 if occ[4] else 0
                s1 = 1 if occ[1] else 0
                s1cr = 1 if (occ[1] and usecr[1]) else 0
                hits[r, (((c0 * 2 + s0) * 2 + c1) * 2 + s1) * 2 + s1cr] = True


_run_batch_compiled = njit(cache=True, nogil=True)(_run_batch) if njit is not None else _run_batch


def northstar_hits(template: Template, n_runs: int, rng: np.random.Generator, *, compiled: bool = True) -> np.ndarray:
    """(n_runs, 80) boolean hit matrix; runs consume ``rng`` in order.

    Uniforms are drawn from ``rng`` in blocks, so after the call ``rng`` may
    have advanced past the last value actually used.
    """
    if n_runs < 0:
        raise ValueError("n_runs must be non-negative")
    hits = np.zeros((n_runs, N_EVENTS), dtype=np.bool_)
    kernel = _run_batch_compiled if compiled else _run_batch
    kernel(template.cumulative(), n_runs, rng, COVERAGE_START, COVERAGE_STOP, hits)
    return hits


def northstar_run(template: Template, rng_seed: SeedLike) -> np.ndarray:
    """Hit-coverage vector (length 80) of one test instance."""
    return northstar_hits(template, 1, make_rng(rng_seed))[0]


def dirichlet_template(rng: np.random.Generator) -> Template:
    """Template with every directive block drawn from Dirichlet(1)."""
    blocks = []
    for size in (5, 8, 8, 2):
        e = rng.standard_exponential(size)
        blocks.append(e / e.sum())
    return Template(*blocks)


def reachability_counts(n_templates: int = 10_000, runs_per_template: int = 100, seed: SeedLike = 0) -> np.ndarray:
    """Per-event hit counts over a randomized sweep of Dirichlet(1) templates."""
    rng = make_rng(seed)
    counts = np.zeros(N_EVENTS, dtype=np.int64)
    for _ in range(n_templates):
        template = dirichlet_template(rng)
        counts += northstar_hits(template, runs_per_template, rng).sum(axis=0)
    return counts


def legal_events(n_templates: int = 10_000, runs_per_template: int = 100, seed: SeedLike = 0) -> frozenset:
    """Events reached at least once by the randomized sweep."""
    counts = reachability_counts(n_templates, runs_per_template, seed)
    return frozenset(event_from_index(i) for i in np.flatnonzero(counts))


class NorthStarSimulator:
    """Noisy-objective adapter: raw vectors are per-block logits of a Template."""

    name = "northstar"
    n_events = N_EVENTS
    raw_dim = TEMPLATE_SIZE

    def weights(self, raw) -> Template:
        from ..objective import softmax_blocks

        return softmax_blocks(raw)

    def hits(self, raw, n_runs: int, rng: np.random.Generator) -> np.ndarray:
        return northstar_hits(self.weights(raw), n_runs, rng)

    def hits_for_weights(self, template: Template, n_runs: int, rng: np.random.Generator) -> np.ndarray:
        return northstar_hits(template, n_runs, rng)
