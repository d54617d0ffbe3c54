"""Deterministic, seeded execution of a translated program.

A run follows the task body: initialisers and init events once, then per
cycle every procedure in call order (each draws ``r`` first and fires at
most one branch), then the send events, then the read events, then the
output lines.  The PRNG is xorshift64*, so traces replay bit-exactly from
``(program, seed, cycles, guidance)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .codegen import GuidanceConfig, ProcedureIR, ProgramIR
from .model import Env, ModelError, eval_expr

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D
ZERO_SEED_STATE = 0x9E3779B97F4A7C15


def seed_state(seed: int) -> int:
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed or ZERO_SEED_STATE


@dataclass(frozen=True)
class Prng:
    state: int

    def __post_init__(self):
        if not 0 < self.state <= MASK64:
            raise ValueError("PRNG state must be a non-zero 64-bit value")

    @classmethod
    def from_seed(cls, seed: int) -> "Prng":
        return cls(seed_state(seed))


def next_random(p: Prng) -> tuple:
    s = p.state
    s ^= s >> 12
    s ^= (s << 25) & MASK64
    s ^= s >> 27
    return Prng(s), (s * MULTIPLIER) & MASK64


def draw_in_range(p: Prng, n: int) -> tuple:
    """Uniform-ish draw from ``0..n`` inclusive (plain modulo reduction)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p, x = next_random(p)
    return p, x % (n + 1)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    cycles: int = 100
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)

    def __post_init__(self):
        seed_state(self.seed)
        if self.cycles < 0:
            raise ValueError("cycles must be >= 0")


class SimulationError(Exception):
    def __init__(self, message: str, cycle: int, where: str):
        super().__init__(f"cycle {cycle}, {where}: {message}")
        self.cycle = cycle
        self.where = where


@dataclass
class CycleRecord:
    index: int
    fired: dict  # machine -> transition name | None
    snapshot: dict
    outputs: list
    log: list = field(default_factory=list, compare=False)  # (phase, name)

    def to_dict(self) -> dict:
        return {
            "cycle": self.index,
            "fired": dict(self.fired),
            "snapshot": dict(self.snapshot),
            "outputs": list(self.outputs),
        }


@dataclass
class SimTrace:
    model: str
    seed: int
    records: list = field(default_factory=list)

    def text(self) -> str:
        """The console output of the run."""
        return "".join(line + "\n" for r in self.records for line in r.outputs)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "cycles": len(self.records),
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "SimTrace":
        records = [
            CycleRecord(r["cycle"], dict(r["fired"]), dict(r["snapshot"]), list(r["outputs"]))
            for r in data["records"]
        ]
        return cls(data["model"], data["seed"], records)


@dataclass
class CoverageReport:
    counts: dict  # transition key -> traversals, machine then declaration order

    @property
    def covered(self) -> list:
        return [k for k, c in self.counts.items() if c > 0]

    @property
    def uncovered(self) -> list:
        return [k for k, c in self.counts.items() if c == 0]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def ratio(self) -> float:
        if not self.counts:
            return 0.0
        return len(self.covered) / len(self.counts)

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts),
            "covered": self.covered,
            "uncovered": self.uncovered,
            "ratio": self.ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def text(self) -> str:
        lines = [f"transition coverage: {len(self.covered)}/{len(self.counts)} ({self.ratio:.1%})"]
        width = max((len(k) for k in self.counts), default=0)
        for k, c in self.counts.items():
            lines.append(f"  {k.ljust(width)}  {c}")
        if self.uncovered:
            lines.append("uncovered: " + ", ".join(self.uncovered))
        return "\n".join(lines) + "\n"


def tally(records: Sequence[CycleRecord], keys: Sequence[str]) -> CoverageReport:
    counts = {k: 0 for k in keys}
    for r in records:
        for machine, t in r.fired.items():
            if t is not None:
                counts[f"{machine}.{t}"] += 1
    return CoverageReport(counts)


def coverage_report(t: SimTrace, m) -> CoverageReport:
    return tally(t.records, m.transition_keys())


# -- IR interpretation -----------------------------------------------------


def _assign(body, env: Env) -> Env:
    changes = {}
    for a in body:
        changes[a.lhs] = eval_expr(a.rhs, env)
    return env.update(changes)


def execute_procedure(proc: ProcedureIR, env: Env, r: Optional[int] = None) -> tuple:
    """One evaluation of a state-machine procedure with draw ``r``.

    Returns ``(env, fired)``.  A gated branch needs ``r``; passing ``None``
    treats every gate as closed.
    """
    arm = proc.arm(env[proc.state_var])
    for b in arm.branches:
        held = eval_expr(b.condition, env)
        if b.gate is not None:
            held = held and r is not None and b.gate.admits(r)
        if held:
            return _assign(b.body, env), b.comment
    return env, None


def execute_sequence(statements, env: Env, log: Optional[list] = None,
                     phase: str = "") -> Env:
    for s in statements:
        env = _assign(s.body, env)
        if log is not None:
            log.append((phase, s.event))
    return env


def run_cycle(p: ProgramIR, env: Env, draws: Sequence[int]) -> tuple:
    """One task-body iteration with an explicit draw per procedure call.

    Returns ``(env, fired, log)``; ``fired`` maps machine names to the fired
    transition or ``None``.
    """
    loop = p.main_loop
    fired = {}
    log = []
    for name, r in zip(loop.eval, draws, strict=True):
        proc = p.procedure(name)
        env, t = execute_procedure(proc, env, r)
        fired[proc.machine] = t
        log.append(("eval", proc.machine))
    env = execute_sequence(loop.send, env, log, "send")
    env = execute_sequence(loop.read, env, log, "read")
    return env, fired, log


def initial_state(p: ProgramIR) -> Env:
    env = p.initial_env()
    return execute_sequence(p.main_loop.init, env)


def _snapshot(p: ProgramIR, env: Env) -> dict:
    return {v.name: env[v.name] for v in p.variables if not v.constant}


def run_simulation(p: ProgramIR, cfg: SimConfig) -> tuple:
    """Run ``cfg.cycles`` iterations; returns ``(SimTrace, CoverageReport)``.

    One draw is taken per procedure call even when the procedure has no
    gates, so editing the guidance never shifts the random stream.
    """
    n = cfg.guidance.n
    if p.random_bound is not None and p.random_bound != n:
        raise ValueError(
            f"program instrumented with n={p.random_bound}, config has n={n}"
        )
    loop = p.main_loop
    cycles = cfg.cycles if loop.periodic else min(cfg.cycles, 1)
    prng = Prng.from_seed(cfg.seed)
    trace = SimTrace(p.name, cfg.seed)
    try:
        env = initial_state(p)
    except ModelError as exc:
        raise SimulationError(str(exc), 0, "init") from exc

    for index in range(1, cycles + 1):
        draws = []
        for _ in loop.eval:
            prng, r = draw_in_range(prng, n)
            draws.append(r)
        try:
            env, fired, log = run_cycle(p, env, draws)
        except ModelError as exc:
            raise SimulationError(str(exc), index, _locate(p, env, draws)) from exc
        outputs = [o.render(env) for o in loop.outputs]
        log.extend(("output", o.format) for o in loop.outputs)
        trace.records.append(CycleRecord(index, fired, _snapshot(p, env), outputs, log))
    return trace, tally(trace.records, p.transition_keys)


def _locate(p: ProgramIR, env: Env, draws) -> str:
    """Re-run a failing cycle step by step to name the offending statement."""
    loop = p.main_loop
    try:
        for name, r in zip(loop.eval, draws):
            proc = p.procedure(name)
            arm = proc.arm(env[proc.state_var])
            for b in arm.branches:
                held = eval_expr(b.condition, env)
                if b.gate is not None:
                    held = held and b.gate.admits(r)
                if held:
                    try:
                        env = _assign(b.body, env)
                    except ModelError:
                        return f"transition {proc.machine}.{b.comment}"
                    break
        for phase in (loop.send, loop.read):
            for s in phase:
                try:
                    env = _assign(s.body, env)
                except ModelError:
                    return f"event {s.event}"
    except ModelError:
        pass
    return "cycle"
