"""Ada source emission for a :class:`~ebsm.codegen.ProgramIR`.

Output is deterministic text: a globals package spec and a main procedure
that nests one procedure per state machine.  Indentation steps are three
spaces and branch conditions are wrapped in an extra pair of parentheses,
giving lines such as ``if ((ENG_EngineSpeed = 0)) then``.
"""

from __future__ import annotations

from .codegen import BranchIR, ProcedureIR, ProgramIR
from .model import (
    And,
    BoolType,
    Cmp,
    IntType,
    Lit,
    Not,
    Or,
    Var,
    free_vars,
)
from .simulator import seed_state

INDENT = "   "
MULTIPLIER_LITERAL = "16#2545F4914F6CDD1D#"
EMPTY_STRING = '""'


def ada_expr(e) -> str:
    if isinstance(e, Lit):
        if type(e.value) is bool:
            return "true" if e.value else "false"
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Cmp):
        return f"({ada_expr(e.left)} {e.op} {ada_expr(e.right)})"
    if isinstance(e, Not):
        operand = ada_expr(e.operand)
        if isinstance(e.operand, (And, Or)):
            operand = f"({operand})"
        return f"(not {operand})"
    if isinstance(e, (And, Or)):
        word = " and " if isinstance(e, And) else " or "
        parts = []
        for o in e.operands:
            text = ada_expr(o)
            # Ada forbids mixing and/or without parentheses
            if isinstance(o, (And, Or)):
                text = f"({text})"
            parts.append(text)
        return word.join(parts)
    raise TypeError(f"not an expression: {e!r}")


def ada_condition(b: BranchIR, random_var: str) -> str:
    text = f"({ada_expr(b.condition)})"
    if b.gate is not None:
        op = "=" if b.gate.mode == "exact" else "<="
        text += f" and ({random_var} {op} {b.gate.q})"
    return text


def ada_type(t) -> str:
    if isinstance(t, BoolType):
        return "Boolean"
    if isinstance(t, IntType):
        return f"Integer range {t.lo} .. {t.hi}"
    return t.name


def _temp_type(t) -> str:
    if isinstance(t, IntType):
        return "Integer"
    return ada_type(t)


def ada_literal(value) -> str:
    return ada_expr(Lit(value))


class _Writer:
    def __init__(self):
        self.lines: list = []
        self.level = 0

    def line(self, text: str = ""):
        self.lines.append(INDENT * self.level + text if text else "")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _assignments(w: _Writer, body, comment, types):
    """Emit a parallel assignment; temporaries only when a later rhs reads an
    earlier lhs."""
    needs_temps = False
    assigned: set = set()
    for a in body:
        if assigned.intersection(free_vars(a.rhs)):
            needs_temps = True
            break
        assigned.add(a.lhs)

    suffix = f" -- {comment}" if comment else ""
    if not needs_temps:
        for i, a in enumerate(body):
            w.line(f"{a.lhs} := {ada_expr(a.rhs)};{suffix if i == 0 else ''}")
        return

    w.line(f"declare{suffix}")
    w.level += 1
    for i, a in enumerate(body, 1):
        w.line(f"Tmp_{i} : constant {_temp_type(types[a.lhs])} := {ada_expr(a.rhs)};")
    w.level -= 1
    w.line("begin")
    w.level += 1
    for i, a in enumerate(body, 1):
        w.line(f"{a.lhs} := Tmp_{i};")
    w.level -= 1
    w.line("end;")


def emit_globals(p: ProgramIR) -> str:
    w = _Writer()
    w.line(f"package {p.globals_package} is")
    w.level += 1
    for t in p.enum_types:
        w.line(f"type {t.name} is ({', '.join(t.literals)});")
    if p.random_bound is not None:
        w.line(f"subtype {p.name}_Random_Range is Integer range 0 .. {p.random_bound};")
    for v in p.variables:
        if v.constant:
            w.line(f"{v.name} : constant {_temp_type(v.type)} := {ada_literal(v.init)};")
    for v in p.variables:
        if not v.constant:
            w.line(f"{v.name} : {ada_type(v.type)} := {ada_literal(v.init)};")
    if p.random_bound is not None:
        w.line(f"{p.random_var} : {p.name}_Random_Range := 0;")
    w.level -= 1
    w.line(f"end {p.globals_package};")
    return w.text()


def _procedure(w: _Writer, proc: ProcedureIR, p: ProgramIR, types):
    w.line(f"procedure {proc.name} is")
    w.line("begin")
    w.level += 1
    if proc.draws_random:
        w.line(f"{p.random_var} := Next_Random;")
    w.line(f"case {proc.state_var} is")
    w.level += 1
    for arm in proc.arms:
        if not arm.branches:
            w.line(f"when {arm.state} => null;")
            continue
        w.line(f"when {arm.state} =>")
        w.level += 1
        for i, b in enumerate(arm.branches):
            keyword = "if" if i == 0 else "elsif"
            w.line(f"{keyword} {ada_condition(b, p.random_var)} then")
            w.level += 1
            _assignments(w, b.body, b.comment, types)
            w.level -= 1
        w.line("else null;")
        w.line("end if;")
        w.level -= 1
    w.level -= 1
    w.line("end case;")
    w.level -= 1
    w.line(f"end {proc.name};")


def _image(name: str, types) -> str:
    t = types[name]
    if isinstance(t, BoolType):
        return f"Boolean'Image ({name})"
    if isinstance(t, IntType):
        return f"Ada.Strings.Fixed.Trim (Integer'Image ({name}), Ada.Strings.Left)"
    return f"{t.name}'Image ({name})"


def _string_literal(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def _output(w: _Writer, out, types):
    images = [_image(v, types) for v in out.variables]
    if "{}" in out.format:
        pieces = out.format.split("{}")
        parts = []
        for i, piece in enumerate(pieces):
            if piece:
                parts.append(_string_literal(piece))
            if i < len(images):
                parts.append(images[i])
    elif images:
        parts = [_string_literal(out.format.ljust(out.LABEL_WIDTH))]
        for i, image in enumerate(images):
            if i:
                parts.append('" "')
            parts.append(image)
    else:
        parts = [_string_literal(out.format)]
    w.line(f"Put_Line ({' & '.join(parts) or EMPTY_STRING});")


def _sequence(w: _Writer, statements, types):
    for s in statements:
        _assignments(w, s.body, s.event, types)


def emit_main(p: ProgramIR, seed: int = 1) -> str:
    types = p.types()
    uses_int_image = any(
        isinstance(types[v], IntType) for o in p.main_loop.outputs for v in o.variables
    )
    w = _Writer()
    w.line("with Ada.Text_IO; use Ada.Text_IO;")
    if uses_int_image:
        w.line("with Ada.Strings;")
        w.line("with Ada.Strings.Fixed;")
    if p.random_bound is not None:
        w.line("with Interfaces; use Interfaces;")
    w.line(f"with {p.globals_package}; use {p.globals_package};")
    w.line()
    w.line(f"procedure {p.name}_Main is")
    w.level += 1
    if p.random_bound is not None:
        rng = f"{p.name}_Random_Range"
        state = f"{p.name}_Prng_State"
        w.line()
        w.line(f"{state} : Unsigned_64 := 16#{seed_state(seed):016X}#;")
        w.line()
        w.line(f"function Next_Random return {rng} is")
        w.line("begin")
        w.level += 1
        w.line(f"{state} := {state} xor Shift_Right ({state}, 12);")
        w.line(f"{state} := {state} xor Shift_Left ({state}, 25);")
        w.line(f"{state} := {state} xor Shift_Right ({state}, 27);")
        w.line(f"return {rng} (({state} * {MULTIPLIER_LITERAL}) mod Unsigned_64 ({rng}'Last + 1));")
        w.level -= 1
        w.line("end Next_Random;")
    for proc in p.procedures:
        w.line()
        _procedure(w, proc, p, types)
    w.line()
    w.level -= 1
    w.line("begin")
    w.level += 1
    loop = p.main_loop
    _sequence(w, loop.init, types)
    if loop.periodic:
        w.line("loop")
        w.level += 1
    for name in loop.eval:
        w.line(f"{name};")
    _sequence(w, loop.send, types)
    _sequence(w, loop.read, types)
    for out in loop.outputs:
        _output(w, out, types)
    if not (loop.eval or loop.send or loop.read or loop.outputs):
        w.line("null;")
    if loop.periodic:
        w.level -= 1
        w.line("end loop;")
    w.level -= 1
    w.line(f"end {p.name}_Main;")
    return w.text()


def source_files(p: ProgramIR, seed: int = 1) -> dict:
    """File name -> text, GNAT-style lower-case unit file names."""
    base = p.name.lower()
    return {
        f"{base}_globals.ads": emit_globals(p),
        f"{base}_main.adb": emit_main(p, seed),
    }


def emit_ada(p: ProgramIR, seed: int = 1) -> str:
    """Both compilation units concatenated, globals first."""
    files = source_files(p, seed)
    return "\n".join(files.values())
