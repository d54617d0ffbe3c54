"""Translation of a model into the case-over-state program IR.

Each state machine becomes a procedure holding one case arm per state.  An
arm is an if/elsif chain over the outgoing transitions, in declaration
order, terminated by the do-nothing ``else null;`` branch.  Guidance gates
are attached to branches by :func:`instrument`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from .model import Env, Model, StateMachine, TaskBody, VarDecl

DEFAULT_N = 4000
GATE_MODES = ("exact", "threshold")


@dataclass(frozen=True)
class Gate:
    mode: str  # "exact" (r = q) or "threshold" (r <= q)
    q: int

    def admits(self, r: int) -> bool:
        if self.mode == "exact":
            return r == self.q
        return r <= self.q


@dataclass(frozen=True)
class GuidanceConfig:
    """Range bound ``n`` for the per-evaluation draw and per-transition gates.

    Keys of ``gates`` are ``"<Machine>.<transition>"``; transitions without an
    entry are ungated.
    """

    n: int = DEFAULT_N
    gates: Mapping = field(default_factory=dict)
    warnings: tuple = field(default=(), compare=False)

    def gate(self, machine: str, transition: str) -> Optional[Gate]:
        return self.gates.get(f"{machine}.{transition}")


@dataclass(frozen=True)
class BranchIR:
    condition: object  # Expr, without the implied state_var = source conjunct
    body: tuple  # Assigns; the state update comes first
    comment: str  # transition name
    gate: Optional[Gate] = None


@dataclass(frozen=True)
class CaseArm:
    state: str
    branches: tuple  # non-terminal branches; the null branch is implicit


@dataclass(frozen=True)
class ProcedureIR:
    name: str
    machine: str
    state_var: str
    arms: tuple
    draws_random: bool = False

    def arm(self, state: str) -> CaseArm:
        for a in self.arms:
            if a.state == state:
                return a
        raise KeyError(state)


@dataclass(frozen=True)
class StatementIR:
    """A sequence event of the task body: its action, executed unconditionally."""

    event: str
    body: tuple


@dataclass(frozen=True)
class MainLoopIR:
    init: tuple = ()
    eval: tuple = ()  # procedure names, call order
    send: tuple = ()
    read: tuple = ()
    outputs: tuple = ()
    periodic: bool = True


@dataclass(frozen=True)
class ProgramIR:
    name: str
    enum_types: tuple
    variables: tuple  # VarDecls, including constants and state variables
    procedures: tuple
    main_loop: MainLoopIR
    transition_keys: tuple = ()
    random_bound: Optional[int] = None  # set once instrumented

    @property
    def globals_package(self) -> str:
        return f"{self.name}_Globals"

    @property
    def random_var(self) -> str:
        return f"{self.name}_random"

    def procedure(self, name: str) -> ProcedureIR:
        for p in self.procedures:
            if p.name == name:
                return p
        raise KeyError(name)

    def types(self) -> dict:
        return {v.name: v.type for v in self.variables}

    def initial_env(self) -> Env:
        return Env({v.name: v.init for v in self.variables}, self.types())


def procedure_name(machine: str) -> str:
    return f"{machine}stateMachine"


def translate_statemachine(sm: StateMachine) -> ProcedureIR:
    arms = []
    for state in sm.states:
        branches = tuple(
            BranchIR(t.guard, t.event.action, t.name) for t in sm.outgoing(state)
        )
        arms.append(CaseArm(state, branches))
    return ProcedureIR(procedure_name(sm.name), sm.name, sm.state_var, tuple(arms))


def _statements(m: Model, names) -> tuple:
    return tuple(StatementIR(n, m.event(n).action) for n in names)


def translate_taskbody(m: Model) -> ProgramIR:
    tb: TaskBody = m.taskbody
    procedures = tuple(translate_statemachine(sm) for sm in m.statemachines)
    loop = MainLoopIR(
        init=_statements(m, tb.init),
        eval=tuple(procedure_name(name) for name in tb.eval),
        send=_statements(m, tb.send),
        read=_statements(m, tb.read),
        outputs=tuple(tb.outputs),
        periodic=tb.periodic,
    )
    variables = list(m.variables)
    for sm in m.statemachines:
        variables.append(VarDecl(sm.state_var, sm.state_type, sm.initial))
    return ProgramIR(
        m.name,
        tuple(m.enum_types()),
        tuple(variables),
        procedures,
        loop,
        tuple(m.transition_keys()),
    )


def instrument(p: ProgramIR, g: GuidanceConfig) -> ProgramIR:
    """Attach guidance gates to branches.

    With no gates this is the identity.  Otherwise every procedure gets a
    fresh draw at the top of its body, shared by all of its gated branches.
    """
    if not g.gates:
        return p
    procedures = []
    for proc in p.procedures:
        arms = []
        for arm in proc.arms:
            branches = tuple(
                replace(b, gate=g.gate(proc.machine, b.comment)) for b in arm.branches
            )
            arms.append(CaseArm(arm.state, branches))
        procedures.append(replace(proc, arms=tuple(arms), draws_random=True))
    return replace(p, procedures=tuple(procedures), random_bound=g.n)
