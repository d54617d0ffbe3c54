"""Model types and the reference semantics of guards and events.

Values are plain Python objects: ``bool`` for booleans, ``int`` for
bounded integers and ``str`` for enumeration literals.  Everything here is
immutable; operations return fresh environments instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

Value = Union[bool, int, str]


class ModelError(Exception):
    """Base class for errors raised while evaluating a model."""


class UnboundVariable(ModelError, KeyError):
    def __str__(self):
        return f"unbound variable {self.args[0]!r}"


class TypeMismatch(ModelError):
    pass


class GuardFalse(ModelError):
    pass


class DomainViolation(ModelError):
    pass


# -- types -----------------------------------------------------------------


@dataclass(frozen=True)
class BoolType:
    def contains(self, value) -> bool:
        return type(value) is bool

    def domain(self) -> tuple:
        return (False, True)

    def __str__(self):
        return "bool"


@dataclass(frozen=True)
class IntType:
    lo: int
    hi: int

    def contains(self, value) -> bool:
        return type(value) is int and self.lo <= value <= self.hi

    def domain(self) -> range:
        return range(self.lo, self.hi + 1)

    def __str__(self):
        return f"int {self.lo}..{self.hi}"


@dataclass(frozen=True)
class EnumType:
    name: str
    literals: tuple

    def contains(self, value) -> bool:
        return type(value) is str and value in self.literals

    def domain(self) -> tuple:
        return self.literals

    def __str__(self):
        return self.name


SemType = Union[BoolType, IntType, EnumType]


def value_kind(value) -> str:
    if type(value) is bool:
        return "bool"
    if type(value) is int:
        return "int"
    if type(value) is str:
        return "enum"
    raise TypeMismatch(f"not a model value: {value!r}")


def render_value(value: Value) -> str:
    """Console rendering: TRUE/FALSE, decimal integers, literal names."""
    if type(value) is bool:
        return "TRUE" if value else "FALSE"
    return str(value)


# -- expressions -----------------------------------------------------------

COMPARISONS = ("=", "/=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    operands: tuple


@dataclass(frozen=True)
class Or:
    operands: tuple


Expr = Union[Lit, Var, Cmp, Not, And, Or]

TRUE = Lit(True)
FALSE = Lit(False)


def conj(*exprs: Expr) -> Expr:
    """Flattened conjunction, dropping literal ``true`` operands."""
    ops = []
    for e in exprs:
        if isinstance(e, And):
            ops.extend(e.operands)
        elif e != TRUE:
            ops.append(e)
    if not ops:
        return TRUE
    if len(ops) == 1:
        return ops[0]
    return And(tuple(ops))


def free_vars(e: Expr) -> tuple:
    """Variables read by ``e``, in first-occurrence order."""
    seen: dict = {}

    def walk(x):
        if isinstance(x, Var):
            seen.setdefault(x.name, None)
        elif isinstance(x, Cmp):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, Not):
            walk(x.operand)
        elif isinstance(x, (And, Or)):
            for o in x.operands:
                walk(o)

    walk(e)
    return tuple(seen)


@dataclass(frozen=True)
class Assign:
    lhs: str
    rhs: Expr


# -- environments ----------------------------------------------------------


class Env(Mapping):
    """Immutable variable store.

    ``types`` is optional; when present, :meth:`update` rejects values
    outside a variable's declared domain.
    """

    __slots__ = ("_values", "_types")

    def __init__(self, values: Mapping = (), types: Optional[Mapping] = None):
        self._values = dict(values)
        self._types = types

    def __getitem__(self, name):
        try:
            return self._values[name]
        except KeyError:
            raise UnboundVariable(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __eq__(self, other):
        if isinstance(other, Env):
            return self._values == other._values
        if isinstance(other, Mapping):
            return self._values == dict(other)
        return NotImplemented

    __hash__ = None

    def __repr__(self):
        body = ", ".join(f"{k}={render_value(v)}" for k, v in self._values.items())
        return f"Env({body})"

    @property
    def types(self) -> Optional[Mapping]:
        return self._types

    def update(self, changes: Mapping) -> "Env":
        values = dict(self._values)
        for name, value in changes.items():
            if name not in values:
                raise UnboundVariable(name)
            if self._types is not None and name in self._types:
                t = self._types[name]
                if not t.contains(value):
                    raise DomainViolation(
                        f"{name} := {render_value(value)} leaves domain {t}"
                    )
            values[name] = value
        return Env(values, self._types)

    def to_dict(self) -> dict:
        return dict(self._values)


# -- model structure -------------------------------------------------------


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: SemType
    init: Value
    constant: bool = False
    line: int = field(default=1, compare=False)


@dataclass(frozen=True)
class Event:
    name: str
    guard: Expr = TRUE
    action: tuple = ()
    line: int = field(default=1, compare=False)


@dataclass(frozen=True)
class Transition:
    """A diagram transition and the event it elaborates.

    ``guard`` and ``action`` are the user-written parts; ``event`` carries
    the elaborated guard (``state_var = source`` conjoined in front) and the
    elaborated action (``state_var := target`` first).
    """

    name: str
    source: str
    target: str
    event: Event
    guard: Expr = TRUE
    action: tuple = ()
    line: int = field(default=1, compare=False)


def elaborate(state_var: str, name: str, source: str, target: str,
              guard: Expr = TRUE, action: Iterable[Assign] = (),
              line: int = 1) -> Transition:
    action = tuple(action)
    event = Event(
        name,
        conj(Cmp("=", Var(state_var), Lit(source)), guard),
        (Assign(state_var, Lit(target)),) + action,
        line,
    )
    return Transition(name, source, target, event, guard, action, line)


@dataclass(frozen=True)
class StateMachine:
    name: str
    kind: str  # "controller" | "environment"
    states: tuple
    initial: str
    transitions: tuple = ()
    line: int = field(default=1, compare=False)

    @property
    def state_var(self) -> str:
        return self.name

    @property
    def type_name(self) -> str:
        return f"{self.name}_STATES"

    @property
    def state_type(self) -> EnumType:
        return EnumType(self.type_name, tuple(self.states))

    def outgoing(self, state: str) -> list:
        return [t for t in self.transitions if t.source == state]

    def transition(self, name: str) -> Transition:
        for t in self.transitions:
            if t.name == name:
                return t
        raise KeyError(name)


@dataclass(frozen=True)
class OutputSpec:
    """One console line.

    A format containing ``{}`` placeholders is filled positionally.  A plain
    label is padded to column 18 and followed by the values, which is the
    dotted ``...EngMode        ENG_OFF`` style.
    """

    format: str
    variables: tuple = ()

    LABEL_WIDTH = 18

    def render(self, env: Mapping) -> str:
        values = [render_value(env[v]) for v in self.variables]
        if "{}" in self.format:
            return self.format.format(*values)
        if not values:
            return self.format
        return self.format.ljust(self.LABEL_WIDTH) + " ".join(values)


@dataclass(frozen=True)
class StoreBinding:
    store_var: str
    module_var: str
    line: int = field(default=1, compare=False)


@dataclass(frozen=True)
class TaskBody:
    periodic: bool = True
    init: tuple = ()
    eval: tuple = ()
    send: tuple = ()
    read: tuple = ()
    outputs: tuple = ()


@dataclass(frozen=True)
class Model:
    name: str
    variables: tuple = ()
    statemachines: tuple = ()
    store_bindings: tuple = ()
    taskbody: TaskBody = TaskBody()
    events: tuple = ()

    def machine(self, name: str) -> StateMachine:
        for sm in self.statemachines:
            if sm.name == name:
                return sm
        raise KeyError(name)

    def event(self, name: str) -> Event:
        for ev in self.events:
            if ev.name == name:
                return ev
        for sm in self.statemachines:
            for t in sm.transitions:
                if t.name == name:
                    return t.event
        raise KeyError(name)

    def types(self) -> dict:
        types = {v.name: v.type for v in self.variables}
        for sm in self.statemachines:
            types[sm.state_var] = sm.state_type
        return types

    def enum_types(self) -> list:
        """Distinct enumeration types: machine state types first."""
        seen: dict = {}
        for sm in self.statemachines:
            seen.setdefault(sm.type_name, sm.state_type)
        for v in self.variables:
            if isinstance(v.type, EnumType):
                seen.setdefault(v.type.name, v.type)
        return list(seen.values())

    def constants(self) -> frozenset:
        return frozenset(v.name for v in self.variables if v.constant)

    def initial_env(self) -> Env:
        values = {v.name: v.init for v in self.variables}
        for sm in self.statemachines:
            values[sm.state_var] = sm.initial
        return Env(values, self.types())

    def transition_keys(self) -> list:
        return [f"{sm.name}.{t.name}" for sm in self.statemachines for t in sm.transitions]


# -- semantics -------------------------------------------------------------


def eval_expr(e: Expr, env: Mapping) -> Value:
    """Evaluate ``e`` under ``env``.

    All operands are evaluated (no short-circuit), so a type error anywhere
    in the expression surfaces regardless of operand values.
    """
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Cmp):
        left = eval_expr(e.left, env)
        right = eval_expr(e.right, env)
        lk, rk = value_kind(left), value_kind(right)
        if e.op in ("=", "/="):
            if lk != rk:
                raise TypeMismatch(f"cannot compare {lk} with {rk}")
            return (left == right) if e.op == "=" else (left != right)
        if lk != "int" or rk != "int":
            raise TypeMismatch(f"operator {e.op} needs integers, got {lk} and {rk}")
        if e.op == "<":
            return left < right
        if e.op == "<=":
            return left <= right
        if e.op == ">":
            return left > right
        if e.op == ">=":
            return left >= right
        raise TypeMismatch(f"unknown operator {e.op!r}")
    if isinstance(e, Not):
        return not _bool(eval_expr(e.operand, env), "not")
    if isinstance(e, And):
        vals = [_bool(eval_expr(o, env), "and") for o in e.operands]
        return all(vals)
    if isinstance(e, Or):
        vals = [_bool(eval_expr(o, env), "or") for o in e.operands]
        return any(vals)
    raise TypeMismatch(f"not an expression: {e!r}")


def _bool(value, op: str) -> bool:
    if type(value) is not bool:
        raise TypeMismatch(f"operator {op} needs booleans, got {value_kind(value)}")
    return value


def event_enabled(ev: Event, env: Mapping) -> bool:
    result = eval_expr(ev.guard, env)
    if type(result) is not bool:
        raise TypeMismatch(f"guard of {ev.name} is not boolean")
    return result


def apply_action(action: Iterable[Assign], env: Env) -> Env:
    """Parallel assignment: every right-hand side reads the pre-state."""
    changes: dict = {}
    for a in action:
        if a.lhs in changes:
            raise ModelError(f"{a.lhs} assigned twice in one action")
        changes[a.lhs] = eval_expr(a.rhs, env)
    return env.update(changes)


def apply_event(ev: Event, env: Env) -> Env:
    if not event_enabled(ev, env):
        raise GuardFalse(f"event {ev.name} is not enabled")
    return apply_action(ev.action, env)


def step_statemachine(sm: StateMachine, env: Env,
                      gate: Optional[Mapping] = None) -> tuple:
    """Fire the first enabled outgoing transition of the current state.

    ``gate`` maps transition names to a gate decision; transitions without
    an entry are ungated.  Returns ``(env, fired)`` where ``fired`` is the
    transition name or ``None`` for the do-nothing step.
    """
    current = env[sm.state_var]
    if current not in sm.states:
        raise DomainViolation(f"{sm.state_var} = {current!r} is not a state of {sm.name}")
    for t in sm.outgoing(current):
        enabled = event_enabled(t.event, env)
        if enabled and (gate is None or gate.get(t.name, True)):
            return apply_event(t.event, env), t.name
    return env, None
