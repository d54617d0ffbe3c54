"""Front end for ``.ebsm`` model files and guidance documents.

Parsing is total: malformed input never raises, it yields a list of
:class:`Diagnostic`.  A model is built only when no error was reported.

The grammar is keyword driven and newline-insensitive; ``--`` starts a
comment that runs to the end of the line::

    machine StopStart01b
    const Eng_Idle_Speed : int 0..1000 := 700
    var ENG_Start_Order : bool := FALSE
    statemachine EngMode kind environment initial ENG_OFF
      state ENG_OFF
      state ENG_CRANKING
      transition s1 from ENG_OFF to ENG_CRANKING when ENG_Start_Order = TRUE
    event Eng_send then STO_EngMode := EngMode par STO_Speed := ENG_EngineSpeed
    store STO_EngMode <-> EngMode
    taskbody periodic
      init Eng_send
      eval EngMode
      send Eng_send
      output "...EngMode" EngMode
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .codegen import DEFAULT_N, Gate, GuidanceConfig
from .model import (
    COMPARISONS,
    And,
    Assign,
    BoolType,
    Cmp,
    EnumType,
    Event,
    IntType,
    Lit,
    Model,
    Not,
    Or,
    OutputSpec,
    StateMachine,
    StoreBinding,
    TaskBody,
    Var,
    VarDecl,
    elaborate,
    render_value,
)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    line: int
    column: int
    code: str
    message: str

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity}: {self.message} [{self.code}]"

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


def has_errors(diagnostics) -> bool:
    return any(d.is_error for d in diagnostics)


class ModelSourceError(Exception):
    """Raised by the ``load_*`` helpers when a source has errors."""

    def __init__(self, path, diagnostics):
        self.path = path
        self.diagnostics = list(diagnostics)
        first = next((d for d in self.diagnostics if d.is_error), None)
        super().__init__(f"{path}: {first}" if first else str(path))


# -- lexer -----------------------------------------------------------------

KEYWORDS = frozenset("""
    machine const var statemachine kind controller environment initial state
    transition from to when then par event store bind taskbody periodic init
    eval send read output and or not bool int enum TRUE FALSE true false
""".split())

TOP_LEVEL = frozenset({"const", "var", "statemachine", "event", "store", "taskbody"})
SM_ITEMS = frozenset({"state", "transition"})
TB_CLAUSES = ("init", "eval", "send", "read", "output")

_OPERATORS = (":=", "<->", "<=", ">=", "/=", "..", "=", "<", ">", "(", ")", "{", "}", ",", ":")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"-?[0-9]+")


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | string | op | eof
    text: str
    line: int
    col: int


def tokenize(src: str, diags: list) -> list:
    tokens = []
    for lineno, text in enumerate(src.split("\n"), 1):
        i = 0
        while i < len(text):
            ch = text[i]
            col = i + 1
            if ch in " \t\r\f\v":
                i += 1
                continue
            if text.startswith("--", i):
                break
            if ch == '"':
                j = i + 1
                buf = []
                while j < len(text) and text[j] != '"':
                    if text[j] == "\\" and j + 1 < len(text):
                        j += 1
                    buf.append(text[j])
                    j += 1
                if j >= len(text):
                    diags.append(Diagnostic("error", lineno, col, "syntax", "unterminated string"))
                tokens.append(Token("string", "".join(buf), lineno, col))
                i = j + 1
                continue
            m = _INT.match(text, i)
            if m:
                tokens.append(Token("int", m.group(), lineno, col))
                i = m.end()
                continue
            m = _IDENT.match(text, i)
            if m:
                tokens.append(Token("ident", m.group(), lineno, col))
                i = m.end()
                continue
            for op in _OPERATORS:
                if text.startswith(op, i):
                    tokens.append(Token("op", op, lineno, col))
                    i += len(op)
                    break
            else:
                diags.append(Diagnostic("error", lineno, col, "syntax", f"unexpected character {ch!r}"))
                i += 1
    lines = src.split("\n")
    tokens.append(Token("eof", "", len(lines), len(lines[-1]) + 1))
    return tokens


# -- raw syntax tree -------------------------------------------------------


@dataclass
class _Name:
    text: str
    line: int
    col: int


@dataclass
class _RawVar:
    name: _Name
    type: tuple  # ("bool",) | ("int", lo, hi) | ("enum", [names]) | ("named", _Name)
    init: object  # raw Expr
    init_pos: _Name
    constant: bool


@dataclass
class _RawAssign:
    lhs: _Name
    rhs: object


@dataclass
class _RawTransition:
    name: _Name
    source: _Name
    target: _Name
    guard: object = None
    guard_pos: Optional[_Name] = None
    action: list = field(default_factory=list)


@dataclass
class _RawMachine:
    name: _Name
    kind: str
    initial: _Name
    states: list = field(default_factory=list)
    transitions: list = field(default_factory=list)


@dataclass
class _RawEvent:
    name: _Name
    guard: object = None
    guard_pos: Optional[_Name] = None
    action: list = field(default_factory=list)


@dataclass
class _RawTaskBody:
    pos: _Name
    periodic: bool = False
    clauses: dict = field(default_factory=dict)  # clause -> list of _Name
    outputs: list = field(default_factory=list)  # (format, _Name pos, [names])


@dataclass
class _RawModel:
    name: _Name
    variables: list = field(default_factory=list)
    machines: list = field(default_factory=list)
    events: list = field(default_factory=list)
    stores: list = field(default_factory=list)
    taskbody: Optional[_RawTaskBody] = None


class _Syntax(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list, diags: list):
        self.tokens = tokens
        self.pos = 0
        self.diags = diags

    # token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.tok
        return tok.kind in ("ident", "op") and tok.text == text

    def at_keyword(self, words) -> bool:
        tok = self.tok
        return tok.kind == "ident" and tok.text in words

    def fail(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        self.diags.append(Diagnostic("error", tok.line, tok.col, "syntax", message))
        raise _Syntax()

    def describe(self, tok: Token) -> str:
        if tok.kind == "eof":
            return "end of input"
        if tok.kind == "string":
            return f'"{tok.text}"'
        return repr(tok.text)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected '{text}', found {self.describe(self.tok)}")
        return self.advance()

    def name(self, what: str = "identifier") -> _Name:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.fail(f"expected {what}, found {self.describe(tok)}")
        self.advance()
        return _Name(tok.text, tok.line, tok.col)

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "int":
            self.fail(f"expected integer, found {self.describe(tok)}")
        self.advance()
        return int(tok.text)

    def sync(self, start: int, stops):
        if self.pos == start:
            self.advance()
        while self.tok.kind != "eof" and not self.at_keyword(stops):
            self.advance()

    # grammar

    def parse(self) -> Optional[_RawModel]:
        if not self.at("machine"):
            tok = self.tok
            self.diags.append(Diagnostic("error", tok.line, tok.col, "syntax", "expected 'machine'"))
            self.sync(self.pos, TOP_LEVEL)
            name = _Name("?", tok.line, tok.col)
        else:
            self.advance()
            try:
                name = self.name("model name")
            except _Syntax:
                name = _Name("?", 1, 1)
        model = _RawModel(name)
        while self.tok.kind != "eof":
            start = self.pos
            try:
                self.top_level(model)
            except _Syntax:
                self.sync(start, TOP_LEVEL)
        return model

    def top_level(self, model: _RawModel):
        tok = self.tok
        if self.at("const") or self.at("var"):
            model.variables.append(self.declaration())
        elif self.at("statemachine"):
            self.statemachine(model)
        elif self.at("event"):
            model.events.append(self.event())
        elif self.at("store"):
            model.stores.append(self.store())
        elif self.at("taskbody"):
            tb = self.taskbody()
            if model.taskbody is not None:
                self.diags.append(Diagnostic("error", tok.line, tok.col, "duplicate-identifier",
                                             "task body declared twice"))
            else:
                model.taskbody = tb
        else:
            self.fail(f"unexpected {self.describe(tok)}")

    def declaration(self) -> _RawVar:
        constant = self.advance().text == "const"
        name = self.name("variable name")
        self.expect(":")
        type_spec = self.type_spec()
        self.expect(":=")
        init_pos = _Name("", self.tok.line, self.tok.col)
        init = self.atom()
        return _RawVar(name, type_spec, init, init_pos, constant)

    def type_spec(self) -> tuple:
        if self.at("bool"):
            self.advance()
            return ("bool",)
        if self.at("int"):
            self.advance()
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            return ("int", lo, hi)
        if self.at("enum"):
            self.advance()
            self.expect("{")
            names = [self.name("enumeration literal")]
            while self.at(","):
                self.advance()
                names.append(self.name("enumeration literal"))
            self.expect("}")
            return ("enum", names)
        return ("named", self.name("type"))

    def statemachine(self, model: _RawModel):
        self.advance()
        name = self.name("state-machine name")
        self.expect("kind")
        if not self.at_keyword(("controller", "environment")):
            self.fail(f"expected 'controller' or 'environment', found {self.describe(self.tok)}")
        kind = self.advance().text
        self.expect("initial")
        initial = self.name("initial state")
        sm = _RawMachine(name, kind, initial)
        model.machines.append(sm)
        while self.at_keyword(SM_ITEMS):
            start = self.pos
            try:
                if self.at("state"):
                    self.advance()
                    sm.states.append(self.name("state name"))
                else:
                    sm.transitions.append(self.transition())
            except _Syntax:
                self.sync(start, SM_ITEMS | TOP_LEVEL)

    def transition(self) -> _RawTransition:
        self.advance()
        t = _RawTransition(self.name("transition name"), None, None)
        self.expect("from")
        t.source = self.name("source state")
        self.expect("to")
        t.target = self.name("target state")
        if self.at("when"):
            self.advance()
            t.guard_pos = _Name("", self.tok.line, self.tok.col)
            t.guard = self.expr()
        if self.at("then"):
            t.action = self.action()
        return t

    def event(self) -> _RawEvent:
        self.advance()
        ev = _RawEvent(self.name("event name"))
        if self.at("when"):
            self.advance()
            ev.guard_pos = _Name("", self.tok.line, self.tok.col)
            ev.guard = self.expr()
        if not self.at("then"):
            self.fail(f"expected 'then', found {self.describe(self.tok)}")
        ev.action = self.action()
        return ev

    def action(self) -> list:
        self.expect("then")
        assigns = [self.assign()]
        while self.at("par"):
            self.advance()
            assigns.append(self.assign())
        return assigns

    def assign(self) -> _RawAssign:
        lhs = self.name("assigned variable")
        self.expect(":=")
        return _RawAssign(lhs, self.expr())

    def store(self):
        self.advance()
        if self.at("bind"):
            self.advance()
        sto = self.name("store variable")
        self.expect("<->")
        mod = self.name("module variable")
        return (sto, mod)

    def taskbody(self) -> _RawTaskBody:
        tok = self.advance()
        tb = _RawTaskBody(_Name("taskbody", tok.line, tok.col))
        if self.at("periodic"):
            self.advance()
            tb.periodic = True
        rank = -1
        while self.at_keyword(TB_CLAUSES):
            start = self.pos
            clause_tok = self.tok
            clause = clause_tok.text
            try:
                r = TB_CLAUSES.index(clause)
                if r < rank or (r == rank and clause != "output"):
                    self.diags.append(Diagnostic(
                        "error", clause_tok.line, clause_tok.col, "clause-order",
                        f"'{clause}' clause out of order; expected init, eval, send, read, output"))
                rank = max(rank, r)
                self.advance()
                if clause == "output":
                    tb.outputs.append(self.output(clause_tok))
                else:
                    names = [self.name("name")]
                    while self.at(","):
                        self.advance()
                        names.append(self.name("name"))
                    tb.clauses.setdefault(clause, []).extend(names)
            except _Syntax:
                self.sync(start, frozenset(TB_CLAUSES) | TOP_LEVEL)
        return tb

    def output(self, tok: Token):
        fmt_tok = self.tok
        if fmt_tok.kind != "string":
            self.fail(f"expected format string, found {self.describe(fmt_tok)}")
        self.advance()
        names = []
        while self.tok.kind == "ident" and self.tok.text not in KEYWORDS:
            names.append(self.name())
            if self.at(","):
                self.advance()
        return (fmt_tok.text, _Name("", fmt_tok.line, fmt_tok.col), names)

    # expressions: or < and < not < comparison < atom

    def expr(self):
        ops = [self.conjunction()]
        while self.at("or"):
            self.advance()
            ops.append(self.conjunction())
        return ops[0] if len(ops) == 1 else Or(tuple(ops))

    def conjunction(self):
        ops = [self.negation()]
        while self.at("and"):
            self.advance()
            ops.append(self.negation())
        return ops[0] if len(ops) == 1 else And(tuple(ops))

    def negation(self):
        if self.at("not"):
            self.advance()
            return Not(self.negation())
        return self.comparison()

    def comparison(self):
        left = self.atom()
        if self.tok.kind == "op" and self.tok.text in COMPARISONS:
            op = self.advance().text
            return Cmp(op, left, self.atom())
        return left

    def atom(self):
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return Lit(int(tok.text))
        if tok.kind == "ident":
            if tok.text in ("TRUE", "true"):
                self.advance()
                return Lit(True)
            if tok.text in ("FALSE", "false"):
                self.advance()
                return Lit(False)
            if tok.text not in KEYWORDS:
                self.advance()
                return _Ident(tok.text, tok.line, tok.col)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail(f"expected expression, found {self.describe(tok)}")


@dataclass(frozen=True)
class _Ident:
    """Unresolved identifier inside a raw expression."""

    name: str
    line: int
    col: int


# -- resolution and type checking ------------------------------------------


class _Abort(Exception):
    pass


class _Resolver:
    def __init__(self, raw: _RawModel, diags: list):
        self.raw = raw
        self.diags = diags
        self.literals: dict = {}  # literal -> EnumType
        self.types_by_name: dict = {}
        self.var_types: dict = {}  # variable -> SemType
        self.constants: set = set()
        self.event_names: dict = {}

    def error(self, pos, code: str, message: str):
        self.diags.append(Diagnostic("error", pos.line, pos.col, code, message))

    def resolve(self) -> Optional[Model]:
        raw = self.raw
        self.machine_types()
        self.variable_namespace()
        for rm in raw.machines:
            self.var_types[rm.name.text] = self.types_by_name.get(f"{rm.name.text}_STATES")
        variables = [v for v in (self.variable(rv) for rv in raw.variables) if v is not None]
        machines = [self.machine(rm) for rm in raw.machines]
        events = [self.event(re_) for re_ in raw.events]
        stores = [self.store(s) for s in raw.stores]
        taskbody = self.taskbody(raw.taskbody, machines, events)
        if has_errors(self.diags):
            return None
        return Model(raw.name.text, tuple(variables), tuple(machines), tuple(stores),
                     taskbody, tuple(events))

    # namespaces

    def register_literal(self, name: _Name, t: EnumType):
        prior = self.literals.get(name.text)
        if prior is not None and prior is not t:
            self.error(name, "duplicate-literal",
                       f"literal {name.text} already belongs to {prior.name}")
        else:
            self.literals[name.text] = t

    def machine_types(self):
        seen = {}
        for rm in self.raw.machines:
            if rm.name.text in seen:
                self.error(rm.name, "duplicate-identifier",
                           f"state machine {rm.name.text} declared twice")
                continue
            seen[rm.name.text] = rm
            states = []
            for s in rm.states:
                if s.text in states:
                    self.error(s, "duplicate-state",
                               f"state {s.text} declared twice in {rm.name.text}")
                else:
                    states.append(s.text)
            if not states:
                self.error(rm.name, "no-states", f"state machine {rm.name.text} has no states")
            t = EnumType(f"{rm.name.text}_STATES", tuple(states))
            self.types_by_name[t.name] = t
            for s in rm.states:
                if s.text in t.literals:
                    self.register_literal(s, t)
        # anonymous enumerations unify with any type of identical literal tuple
        by_literals = {t.literals: t for t in self.types_by_name.values()}
        for rv in self.raw.variables:
            if rv.type[0] != "enum":
                continue
            names = rv.type[1]
            lits = []
            for n in names:
                if n.text in lits:
                    self.error(n, "duplicate-literal", f"literal {n.text} repeated")
                else:
                    lits.append(n.text)
            key = tuple(lits)
            t = by_literals.get(key)
            if t is None:
                t = EnumType(f"{rv.name.text}_Type", key)
                by_literals[key] = t
                self.types_by_name.setdefault(t.name, t)
            for n in names:
                self.register_literal(n, t)

    def variable_namespace(self):
        seen: dict = {}

        def claim(name: _Name, what: str):
            if name.text in seen:
                self.error(name, "duplicate-identifier",
                           f"{what} {name.text} clashes with an earlier declaration")
                return False
            if name.text in self.literals:
                self.error(name, "duplicate-identifier",
                           f"{what} {name.text} clashes with an enumeration literal")
                return False
            seen[name.text] = True
            return True

        for rm in self.raw.machines:
            claim(rm.name, "state machine")
        for rv in self.raw.variables:
            claim(rv.name, "constant" if rv.constant else "variable")
        for rm in self.raw.machines:
            for t in rm.transitions:
                self.claim_event(t.name)
        for ev in self.raw.events:
            self.claim_event(ev.name)

    def claim_event(self, name: _Name):
        if name.text in self.event_names:
            self.error(name, "duplicate-identifier", f"event {name.text} declared twice")
        else:
            self.event_names[name.text] = name

    # declarations

    def sem_type(self, spec: tuple, owner: _Name):
        if spec[0] == "bool":
            return BoolType()
        if spec[0] == "int":
            if spec[1] > spec[2]:
                self.error(owner, "bad-range", f"empty range {spec[1]}..{spec[2]}")
                return None
            return IntType(spec[1], spec[2])
        if spec[0] == "enum":
            return self.literals.get(spec[1][0].text)
        t = self.types_by_name.get(spec[1].text)
        if t is None:
            self.error(spec[1], "unknown-type", f"unknown type {spec[1].text}")
        return t

    def variable(self, rv: _RawVar) -> Optional[VarDecl]:
        t = self.sem_type(rv.type, rv.name)
        if t is None:
            return None
        self.var_types.setdefault(rv.name.text, t)
        if rv.constant:
            self.constants.add(rv.name.text)
        init = rv.init
        if isinstance(init, _Ident):
            if init.name not in self.literals:
                self.error(init, "unknown-identifier", f"unknown literal {init.name}")
                return None
            value = init.name
        elif isinstance(init, Lit):
            value = init.value
        else:
            self.error(rv.init_pos, "syntax", "initial value must be a literal")
            return None
        if not t.contains(value):
            self.error(rv.init_pos, "type-mismatch",
                       f"initial value {render_value(value)} is not in {t}")
            return None
        return VarDecl(rv.name.text, t, value, rv.constant, rv.name.line)

    def machine(self, rm: _RawMachine) -> StateMachine:
        states = []
        for s in rm.states:
            if s.text not in states:
                states.append(s.text)
        if rm.initial.text not in states:
            self.error(rm.initial, "missing-initial",
                       f"initial state {rm.initial.text} is not a state of {rm.name.text}")
        transitions = []
        for rt in rm.transitions:
            ok = True
            for end in (rt.source, rt.target):
                if end.text not in states:
                    self.error(end, "unknown-state",
                               f"unknown state {end.text} in transition {rt.name.text} "
                               f"(line {end.line})")
                    ok = False
            guard = self.guard(rt.guard, rt.guard_pos or rt.name)
            action = self.action(rt.action, forbidden=rm.name.text)
            if ok and guard is not None and action is not None:
                transitions.append(elaborate(rm.name.text, rt.name.text, rt.source.text,
                                             rt.target.text, guard, action, rt.name.line))
        return StateMachine(rm.name.text, rm.kind, tuple(states), rm.initial.text,
                            tuple(transitions), rm.name.line)

    def event(self, re_: _RawEvent) -> Event:
        guard = self.guard(re_.guard, re_.guard_pos or re_.name)
        action = self.action(re_.action)
        return Event(re_.name.text, guard if guard is not None else Lit(True),
                     tuple(action or ()), re_.name.line)

    def store(self, pair) -> StoreBinding:
        sto, mod = pair
        types = []
        for n in (sto, mod):
            t = self.var_types.get(n.text)
            if t is None:
                self.error(n, "unknown-identifier", f"store binding names undeclared {n.text}")
            types.append(t)
        if None not in types and types[0] != types[1]:
            self.error(sto, "type-mismatch",
                       f"store variable {sto.text} : {types[0]} does not match "
                       f"{mod.text} : {types[1]}")
        return StoreBinding(sto.text, mod.text, sto.line)

    def taskbody(self, rtb: Optional[_RawTaskBody], machines, events) -> TaskBody:
        if rtb is None:
            eof = self.raw.name
            self.error(eof, "missing-taskbody", "model has no taskbody")
            return TaskBody()
        event_map = {e.name: e for e in events}
        phases = {}
        for clause in ("init", "send", "read"):
            names = []
            for n in rtb.clauses.get(clause, []):
                ev = event_map.get(n.text)
                if ev is None:
                    code = "sequence-transition" if n.text in self.event_names else "unknown-event"
                    self.error(n, code, f"{clause} names {n.text}, which is not a declared event")
                elif ev.guard != Lit(True):
                    self.error(n, "sequence-guard",
                               f"event {n.text} is used in a sequence and must not have a guard")
                names.append(n.text)
            phases[clause] = tuple(names)
        machine_names = [m.name for m in machines]
        eval_names = []
        for n in rtb.clauses.get("eval", []):
            if n.text not in machine_names:
                self.error(n, "unknown-machine", f"eval names unknown state machine {n.text}")
            elif n.text in eval_names:
                self.error(n, "duplicate-eval", f"state machine {n.text} evaluated twice")
            eval_names.append(n.text)
        for m in machine_names:
            if m not in eval_names:
                self.error(rtb.pos, "missing-eval", f"state machine {m} is never evaluated")
        outputs = []
        for fmt, pos, names in rtb.outputs:
            for n in names:
                if n.text not in self.var_types:
                    self.error(n, "unknown-identifier", f"output names unknown variable {n.text}")
            holes = fmt.count("{}")
            if holes and holes != len(names):
                self.error(pos, "output-arity",
                           f"format has {holes} placeholders for {len(names)} variables")
            outputs.append(OutputSpec(fmt, tuple(n.text for n in names)))
        return TaskBody(rtb.periodic, phases["init"], tuple(eval_names), phases["send"],
                        phases["read"], tuple(outputs))

    # expressions

    def guard(self, raw, pos):
        if raw is None:
            return Lit(True)
        try:
            e = self.expr(raw)
            if self.type_of(e, pos) != "bool":
                self.error(pos, "type-mismatch", "guard is not boolean")
                return None
            return e
        except _Abort:
            return None

    def action(self, raw_assigns, forbidden: Optional[str] = None):
        assigns = []
        seen = set()
        failed = False
        for ra in raw_assigns:
            lhs = ra.lhs
            if lhs.text == forbidden:
                self.error(lhs, "state-assignment",
                           f"{lhs.text} is updated by the transition itself")
                failed = True
                continue
            if lhs.text not in self.var_types:
                self.error(lhs, "unknown-identifier", f"assignment to undeclared {lhs.text}")
                failed = True
                continue
            if lhs.text in self.constants:
                self.error(lhs, "type-mismatch", f"cannot assign constant {lhs.text}")
                failed = True
                continue
            if lhs.text in seen:
                self.error(lhs, "duplicate-assignment", f"{lhs.text} assigned twice in one action")
                failed = True
                continue
            seen.add(lhs.text)
            try:
                rhs = self.expr(ra.rhs)
                t = self.var_types[lhs.text]
                if not self.compatible(t, self.type_of(rhs, lhs)):
                    self.error(lhs, "type-mismatch", f"value assigned to {lhs.text} is not {t}")
                    failed = True
                    continue
                if isinstance(rhs, Lit) and not t.contains(rhs.value):
                    self.error(lhs, "type-mismatch",
                               f"{render_value(rhs.value)} is outside {lhs.text} : {t}")
                    failed = True
                    continue
            except _Abort:
                failed = True
                continue
            assigns.append(Assign(lhs.text, rhs))
        return None if failed else assigns

    def expr(self, raw):
        if isinstance(raw, _Ident):
            if raw.name in self.var_types:
                return Var(raw.name)
            if raw.name in self.literals:
                return Lit(raw.name)
            self.error(raw, "unknown-identifier", f"unknown identifier {raw.name}")
            raise _Abort()
        if isinstance(raw, Lit):
            return raw
        if isinstance(raw, Cmp):
            return Cmp(raw.op, self.expr(raw.left), self.expr(raw.right))
        if isinstance(raw, Not):
            return Not(self.expr(raw.operand))
        if isinstance(raw, And):
            return And(tuple(self.expr(o) for o in raw.operands))
        if isinstance(raw, Or):
            return Or(tuple(self.expr(o) for o in raw.operands))
        raise _Abort()

    @staticmethod
    def compatible(t, kind) -> bool:
        if isinstance(t, BoolType):
            return kind == "bool"
        if isinstance(t, IntType):
            return kind == "int"
        return kind == t

    def type_of(self, e, pos):
        """'bool', 'int' or the EnumType of ``e``."""
        if isinstance(e, Lit):
            if type(e.value) is bool:
                return "bool"
            if type(e.value) is int:
                return "int"
            return self.literals[e.value]
        if isinstance(e, Var):
            t = self.var_types[e.name]
            if isinstance(t, BoolType):
                return "bool"
            if isinstance(t, IntType):
                return "int"
            return t
        if isinstance(e, Cmp):
            lt, rt = self.type_of(e.left, pos), self.type_of(e.right, pos)
            if e.op in ("=", "/="):
                if lt != rt:
                    self.error(pos, "type-mismatch", f"cannot compare {_kind(lt)} with {_kind(rt)}")
                    raise _Abort()
            elif lt != "int" or rt != "int":
                self.error(pos, "type-mismatch", f"operator {e.op} needs integer operands")
                raise _Abort()
            return "bool"
        operands = (e.operand,) if isinstance(e, Not) else e.operands
        for o in operands:
            if self.type_of(o, pos) != "bool":
                word = "not" if isinstance(e, Not) else ("and" if isinstance(e, And) else "or")
                self.error(pos, "type-mismatch", f"operator {word} needs boolean operands")
                raise _Abort()
        return "bool"


def _kind(t) -> str:
    return t if isinstance(t, str) else t.name


def parse_model(src: str) -> Union[Model, list]:
    """Parse ``.ebsm`` text into a :class:`Model`, or return its diagnostics."""
    diags: list = []
    tokens = tokenize(src, diags)
    raw = _Parser(tokens, diags).parse()
    if has_errors(diags):
        return _sorted(diags)
    model = _Resolver(raw, diags).resolve()
    if model is None:
        return _sorted(diags)
    return model


def _sorted(diags):
    return sorted(diags, key=lambda d: (d.line, d.column))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as f:
        result = parse_model(f.read())
    if isinstance(result, Model):
        return result
    raise ModelSourceError(path, result)


# -- pretty printer --------------------------------------------------------

_PREC = {Or: 1, And: 2, Not: 3, Cmp: 4}


def format_expr(e, min_prec: int = 0) -> str:
    prec = _PREC.get(type(e), 5)
    if isinstance(e, Lit):
        text = render_value(e.value)
    elif isinstance(e, Var):
        text = e.name
    elif isinstance(e, Cmp):
        text = f"{format_expr(e.left, 5)} {e.op} {format_expr(e.right, 5)}"
    elif isinstance(e, Not):
        text = f"not {format_expr(e.operand, 3)}"
    elif isinstance(e, And):
        text = " and ".join(format_expr(o, 3) for o in e.operands)
    elif isinstance(e, Or):
        text = " or ".join(format_expr(o, 2) for o in e.operands)
    else:
        raise TypeError(f"not an expression: {e!r}")
    return f"({text})" if prec < min_prec else text


def _format_action(action) -> str:
    return " par ".join(f"{a.lhs} := {format_expr(a.rhs)}" for a in action)


def _format_type(t, machine_types) -> str:
    if isinstance(t, EnumType):
        if t.name in machine_types:
            return t.name
        return "enum {" + ", ".join(t.literals) + "}"
    return str(t)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_model(m: Model) -> str:
    """Render ``m`` back to ``.ebsm`` source that reparses to an equal model."""
    machine_types = {sm.type_name for sm in m.statemachines}
    out = [f"machine {m.name}", ""]
    for v in m.variables:
        word = "const" if v.constant else "var"
        out.append(f"{word} {v.name} : {_format_type(v.type, machine_types)} := {render_value(v.init)}")
    for sm in m.statemachines:
        out.append("")
        out.append(f"statemachine {sm.name} kind {sm.kind} initial {sm.initial}")
        for s in sm.states:
            out.append(f"  state {s}")
        for t in sm.transitions:
            line = f"  transition {t.name} from {t.source} to {t.target}"
            if t.guard != Lit(True):
                line += f" when {format_expr(t.guard)}"
            if t.action:
                line += f" then {_format_action(t.action)}"
            out.append(line)
    if m.events:
        out.append("")
    for ev in m.events:
        line = f"event {ev.name}"
        if ev.guard != Lit(True):
            line += f" when {format_expr(ev.guard)}"
        out.append(f"{line} then {_format_action(ev.action)}")
    if m.store_bindings:
        out.append("")
    for b in m.store_bindings:
        out.append(f"store {b.store_var} <-> {b.module_var}")
    tb = m.taskbody
    out.append("")
    out.append("taskbody periodic" if tb.periodic else "taskbody")
    for clause in ("init", "eval", "send", "read"):
        names = getattr(tb, clause)
        if names:
            out.append(f"  {clause} {', '.join(names)}")
    for o in tb.outputs:
        out.append(f"  output {' '.join([_quote(o.format), *o.variables])}")
    return "\n".join(out) + "\n"


# -- guidance --------------------------------------------------------------


def _position(src: str, needle: str) -> tuple:
    idx = src.find(needle)
    if idx < 0:
        return 1, 1
    line = src.count("\n", 0, idx) + 1
    col = idx - (src.rfind("\n", 0, idx) + 1) + 1
    return line, col


def _is_int(x) -> bool:
    return type(x) is int


def parse_guidance(src: str, model: Optional[Model] = None) -> Union[GuidanceConfig, list]:
    """Parse a guidance document.

    ``{"n": 4000, "transitions": {"EngMode.s5": {"mode": "exact", "q": 3990}}}``

    When ``model`` is given, keys naming no transition are dropped with a
    warning, kept on the result's ``warnings`` attribute.
    """
    diags: list = []

    def report(severity, code, message, needle=None):
        line, col = _position(src, needle) if needle else (1, 1)
        diags.append(Diagnostic(severity, line, col, code, message))

    def pairs(items):
        obj = {}
        for k, v in items:
            if k in obj:
                report("error", "duplicate-key", f"duplicate key {k!r}", json.dumps(k))
            obj[k] = v
        return obj

    try:
        data = json.loads(src, object_pairs_hook=pairs)
    except json.JSONDecodeError as exc:
        return [Diagnostic("error", exc.lineno, exc.colno, "syntax", exc.msg)]
    except (RecursionError, ValueError) as exc:
        return [Diagnostic("error", 1, 1, "syntax", str(exc))]
    if not isinstance(data, dict):
        return [Diagnostic("error", 1, 1, "syntax", "guidance must be an object")]
    for key in data:
        if key not in ("n", "transitions"):
            report("warning", "unknown-field", f"ignored field {key!r}", json.dumps(key))
    n = data.get("n", DEFAULT_N)
    if not _is_int(n) or n < 1:
        report("error", "bad-n", "n must be an integer >= 1", '"n"')
        n = None
    entries = data.get("transitions", {})
    if not isinstance(entries, dict):
        report("error", "syntax", "transitions must be an object", '"transitions"')
        entries = {}
    known = set(model.transition_keys()) if model is not None else None
    gates = {}
    for key, spec in entries.items():
        needle = json.dumps(key)
        parts = key.split(".")
        if len(parts) != 2 or not all(_IDENT.fullmatch(p) for p in parts):
            report("error", "bad-key", f"key {key!r} is not <Machine>.<transition>", needle)
            continue
        if not isinstance(spec, dict):
            report("error", "syntax", f"entry {key!r} must be an object", needle)
            continue
        mode = spec.get("mode")
        if mode == "ungated":
            continue
        if mode not in ("exact", "threshold"):
            report("error", "bad-mode", f"mode of {key!r} must be exact, threshold or ungated", needle)
            continue
        q = spec.get("q")
        if not _is_int(q) or q < 0:
            report("error", "bad-q", f"q of {key!r} must be a non-negative integer", needle)
            continue
        if n is not None and q > n:
            report("error", "q-range", f"q = {q} of {key!r} exceeds n = {n}", needle)
            continue
        if known is not None and key not in known:
            report("warning", "unknown-transition", f"no transition {key!r}; entry ignored", needle)
            continue
        gates[key] = Gate(mode, q)
    if has_errors(diags):
        return _sorted(diags)
    return GuidanceConfig(n, gates, tuple(_sorted(diags)))


def load_guidance(path, model: Optional[Model] = None) -> GuidanceConfig:
    with open(path, encoding="utf-8") as f:
        result = parse_guidance(f.read(), model)
    if isinstance(result, GuidanceConfig):
        return result
    raise ModelSourceError(path, result)
