"""Static checks over a parsed model.

Guard disjointness and completeness are decided by brute-force enumeration
of the finite domains of the variables the guards read, so the answer is
exact for bounded types.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .codegen import GuidanceConfig
from .model import Env, Model, event_enabled, free_vars, render_value
from .parser import Diagnostic, has_errors

DEFAULT_BOUND = 10 ** 7
DEFAULT_WITNESSES = 3


class DomainTooLarge(Exception):
    def __init__(self, size: int, bound: int):
        super().__init__(f"domain space has {size} points, bound is {bound}")
        self.size = size
        self.bound = bound


@dataclass(frozen=True)
class DomainSpace:
    variables: tuple
    domains: tuple

    @property
    def size(self) -> int:
        size = 1
        for d in self.domains:
            size *= len(d)
        return size

    def points(self):
        for values in itertools.product(*self.domains):
            yield dict(zip(self.variables, values))


@dataclass
class GuardReport:
    machine: str
    state: str
    kind: str
    disjoint: bool
    complete: bool
    space_size: int
    disjoint_witnesses: list = field(default_factory=list)
    complete_witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def render(ws):
            return [{k: render_value(v) for k, v in w.items()} for w in ws]

        return {
            "machine": self.machine,
            "state": self.state,
            "kind": self.kind,
            "disjoint": self.disjoint,
            "complete": self.complete,
            "space_size": self.space_size,
            "disjoint_witnesses": render(self.disjoint_witnesses),
            "complete_witnesses": render(self.complete_witnesses),
        }


def domain_space(m: Model, machine: str, state: str) -> DomainSpace:
    """Variables read by the outgoing guards of ``state``.

    The machine's own state variable is pinned to ``state`` and constants to
    their values, so neither grows the space.
    """
    sm = m.machine(machine)
    types = m.types()
    decls = {v.name: v for v in m.variables}
    read = set()
    for t in sm.outgoing(state):
        read.update(free_vars(t.event.guard))
    read.add(sm.state_var)
    names, domains = [], []
    for name in types:
        if name not in read:
            continue
        names.append(name)
        if name == sm.state_var:
            domains.append((state,))
        elif name in decls and decls[name].constant:
            domains.append((decls[name].init,))
        else:
            domains.append(tuple(types[name].domain()))
    return DomainSpace(tuple(names), tuple(domains))


def check_disjoint_complete(m: Model, machine: str, state: str,
                            bound: int = DEFAULT_BOUND,
                            k: int = DEFAULT_WITNESSES) -> GuardReport:
    """Decide whether the outgoing guards of ``state`` are disjoint and complete.

    Completeness means some transition is always taken; the implicit skip
    branch does not count.  Raises :class:`DomainTooLarge` before enumerating
    if the space exceeds ``bound`` points.
    """
    sm = m.machine(machine)
    space = domain_space(m, machine, state)
    if space.size > bound:
        raise DomainTooLarge(space.size, bound)
    guards = [t.event for t in sm.outgoing(state)]
    overlaps, gaps = [], []
    disjoint = complete = True
    for point in space.points():
        env = Env(point)
        enabled = sum(1 for ev in guards if event_enabled(ev, env))
        if enabled >= 2:
            disjoint = False
            if len(overlaps) < k:
                overlaps.append(point)
        elif enabled == 0:
            complete = False
            if len(gaps) < k:
                gaps.append(point)
        if len(overlaps) >= k and len(gaps) >= k:
            break
    return GuardReport(machine, state, sm.kind, disjoint, complete, space.size, overlaps, gaps)


def check_partition(m: Model) -> list:
    diags = []
    for sm in m.statemachines:
        seen = set()
        for s in sm.states:
            if s in seen:
                diags.append(Diagnostic("error", sm.line, 1, "duplicate-state",
                                        f"state {s} appears twice in {sm.name}"))
            seen.add(s)
        if sm.initial not in seen:
            diags.append(Diagnostic("error", sm.line, 1, "missing-initial",
                                    f"initial state {sm.initial} is not a state of {sm.name}"))
        for t in sm.transitions:
            for end in (t.source, t.target):
                if end not in seen:
                    diags.append(Diagnostic("error", t.line, 1, "unknown-state",
                                            f"transition {t.name} names unknown state {end}"))
        reached = {sm.initial}
        todo = deque([sm.initial])
        while todo:
            s = todo.popleft()
            for t in sm.outgoing(s):
                if t.target not in reached:
                    reached.add(t.target)
                    todo.append(t.target)
        for s in dict.fromkeys(sm.states):
            if s not in reached:
                diags.append(Diagnostic("warning", sm.line, 1, "unreachable-state",
                                        f"state {s} of {sm.name} is unreachable from {sm.initial}"))
    return diags


def check_guidance(m: Model, g: GuidanceConfig) -> list:
    diags = []
    if g.n < 1:
        diags.append(Diagnostic("error", 1, 1, "bad-n", f"n = {g.n} must be >= 1"))
    known = {}
    for sm in m.statemachines:
        for t in sm.transitions:
            known[f"{sm.name}.{t.name}"] = (sm, t)
    for key, gate in g.gates.items():
        if key not in known:
            diags.append(Diagnostic("warning", 1, 1, "unknown-transition",
                                    f"guidance names unknown transition {key}"))
            continue
        if not 0 <= gate.q <= g.n:
            sm, t = known[key]
            diags.append(Diagnostic("error", t.line, 1, "q-range",
                                    f"q = {gate.q} of {key} is outside 0..{g.n}"))
    for sm in m.statemachines:
        for state in dict.fromkeys(sm.states):
            owners = {}
            for t in sm.outgoing(state):
                gate = g.gates.get(f"{sm.name}.{t.name}")
                if gate is None or gate.mode != "exact":
                    continue
                if gate.q in owners:
                    diags.append(Diagnostic(
                        "error", t.line, 1, "duplicate-q",
                        f"{sm.name}.{t.name} and {sm.name}.{owners[gate.q]} share exact q = "
                        f"{gate.q} out of {state}"))
                else:
                    owners[gate.q] = t.name
    return diags


@dataclass
class Analysis:
    diagnostics: list
    reports: list

    @property
    def ok(self) -> bool:
        return not has_errors(self.diagnostics)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "diagnostics": [
                {"severity": d.severity, "line": d.line, "column": d.column,
                 "code": d.code, "message": d.message}
                for d in self.diagnostics
            ],
            "guards": [r.to_dict() for r in self.reports],
        }

    def text(self) -> str:
        lines = []
        for r in self.reports:
            verdict = []
            verdict.append("disjoint" if r.disjoint else "NOT disjoint")
            verdict.append("complete" if r.complete else "NOT complete")
            lines.append(f"{r.machine}.{r.state} ({r.kind}, {r.space_size} points): "
                         + ", ".join(verdict))
            for label, ws in (("overlap", r.disjoint_witnesses), ("gap", r.complete_witnesses)):
                for w in ws:
                    shown = ", ".join(f"{k}={render_value(v)}" for k, v in w.items()
                                      if k != r.machine)
                    lines.append(f"  {label}: {shown or '(any)'}")
        errors = sum(1 for d in self.diagnostics if d.is_error)
        warnings = len(self.diagnostics) - errors
        lines.append(f"{errors} error(s), {warnings} warning(s)")
        return "\n".join(lines) + "\n"


def check_model(m: Model, guidance: Optional[GuidanceConfig] = None,
                bound: int = DEFAULT_BOUND, k: int = DEFAULT_WITNESSES) -> Analysis:
    """All static checks.  Guard failures are errors for controller machines
    and warnings for environment machines."""
    diags = check_partition(m)
    reports = []
    for sm in m.statemachines:
        severity = "error" if sm.kind == "controller" else "warning"
        for state in dict.fromkeys(sm.states):
            try:
                r = check_disjoint_complete(m, sm.name, state, bound, k)
            except DomainTooLarge as exc:
                diags.append(Diagnostic("warning", sm.line, 1, "domain-too-large",
                                        f"{sm.name}.{state}: {exc}"))
                continue
            reports.append(r)
            if not r.disjoint:
                diags.append(Diagnostic(severity, sm.line, 1, "not-disjoint",
                                        f"outgoing guards of {sm.name}.{state} overlap"))
            if not r.complete:
                diags.append(Diagnostic(severity, sm.line, 1, "not-complete",
                                        f"outgoing guards of {sm.name}.{state} are not complete"))
    if guidance is not None:
        diags.extend(check_guidance(m, guidance))
    return Analysis(diags, reports)
