"""Abstract syntax tree for cQPL programs.

Node equality ignores source positions and checker annotations so that
structural comparison (e.g. for the pretty-print round-trip) works as
expected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import SourcePos

_NOPOS = SourcePos(0, 0)


def _pos_field():
    return field(default=_NOPOS, compare=False)


# ---------------------------------------------------------------------------
# Expressions


@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int
    pos: SourcePos = _pos_field()
    sig: object = field(default=None, compare=False)  # filled by the checker


@dataclass
class FloatLit(Expr):
    value: float
    pos: SourcePos = _pos_field()
    sig: object = field(default=None, compare=False)


@dataclass
class BoolLit(Expr):
    value: bool
    pos: SourcePos = _pos_field()
    sig: object = field(default=None, compare=False)


@dataclass
class Ident(Expr):
    name: str
    pos: SourcePos = _pos_field()
    sig: object = field(default=None, compare=False)


@dataclass
class BinOp(Expr):
    op: str  # + - * / < > <= >= == != & |
    left: Expr
    right: Expr
    pos: SourcePos = _pos_field()
    sig: object = field(default=None, compare=False)


@dataclass
class UnOp(Expr):
    op: str  # - !
    operand: Expr
    pos: SourcePos = _pos_field()
    sig: object = field(default=None, compare=False)


# ---------------------------------------------------------------------------
# Gates


@dataclass
class Gate:
    pos: SourcePos = _pos_field()


@dataclass
class BuiltinGate(Gate):
    name: str = ""  # H | Not | CNot
    pos: SourcePos = _pos_field()


@dataclass
class PhaseGate(Gate):
    shift: Expr = None
    pos: SourcePos = _pos_field()


@dataclass
class FTGate(Gate):
    n: int = 0
    pos: SourcePos = _pos_field()


@dataclass
class MatrixGate(Gate):
    entries: list[complex] = field(default_factory=list)
    pos: SourcePos = _pos_field()


# ---------------------------------------------------------------------------
# Statements


@dataclass
class Stmt:
    pass


@dataclass
class Allocate(Stmt):
    var_type: str
    name: str
    init: Expr
    pos: SourcePos = _pos_field()


@dataclass
class Assign(Stmt):
    name: str
    expr: Expr
    pos: SourcePos = _pos_field()


@dataclass
class AssignMeasure(Stmt):
    target: str
    source: str
    pos: SourcePos = _pos_field()


@dataclass
class MeasureBranch(Stmt):
    qvar: str
    then_branch: Stmt
    else_branch: Stmt
    pos: SourcePos = _pos_field()


@dataclass
class If(Stmt):
    cond: Expr
    then_branch: Stmt
    else_branch: Optional[Stmt]
    pos: SourcePos = _pos_field()


@dataclass
class While(Stmt):
    cond: Expr
    body: Stmt
    pos: SourcePos = _pos_field()


@dataclass
class GateApply(Stmt):
    vars: list[str]
    gate: Gate
    pos: SourcePos = _pos_field()


@dataclass
class Send(Stmt):
    vars: list[str]
    dest: str
    pos: SourcePos = _pos_field()


@dataclass
class Receive(Stmt):
    bindings: list[tuple[str, str]]  # (name, var_type)
    source: str
    pos: SourcePos = _pos_field()


@dataclass
class ProcDecl(Stmt):
    name: str
    params: list[tuple[str, str]]  # (name, var_type)
    body: "Block"
    in_stmt: Stmt
    ret: Optional[list[tuple[str, str]]] = None  # explicit -> context, if any
    pos: SourcePos = _pos_field()


@dataclass
class ProcCall(Stmt):
    results: Optional[list[str]]  # None when the result tuple is ignored
    name: str
    args: list[Expr]
    pos: SourcePos = _pos_field()


@dataclass
class Print(Stmt):
    value: Union[str, Expr]  # str for string literals, printed verbatim
    pos: SourcePos = _pos_field()


@dataclass
class Dump(Stmt):
    vars: list[str]
    pos: SourcePos = _pos_field()


@dataclass
class Skip(Stmt):
    pos: SourcePos = _pos_field()


@dataclass
class Block(Stmt):
    stmts: list[Stmt]
    pos: SourcePos = _pos_field()


# ---------------------------------------------------------------------------
# Program


@dataclass
class ModuleDef:
    name: str
    body: list[Stmt]
    pos: SourcePos = _pos_field()


@dataclass
class Program:
    """Either a plain statement list or a non-empty module list, never both."""

    stmts: Optional[list[Stmt]] = None
    modules: Optional[list[ModuleDef]] = None

    @property
    def is_module_form(self) -> bool:
        return self.modules is not None


# ---------------------------------------------------------------------------
# Pretty printer

_PRECEDENCE = {"|": 1, "&": 2, "<": 3, ">": 3, "<=": 3, ">=": 3, "==": 3, "!=": 3,
               "+": 4, "-": 4, "*": 5, "/": 5}


def expr_to_source(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return repr(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, UnOp):
        return f"{e.op}{expr_to_source(e.operand, 6)}"
    if isinstance(e, BinOp):
        prec = _PRECEDENCE[e.op]
        # left-associative: right child needs parens at equal precedence
        s = f"{expr_to_source(e.left, prec)} {e.op} {expr_to_source(e.right, prec + 1)}"
        return f"({s})" if prec < parent_prec else s
    raise TypeError(f"unknown expression node {e!r}")


def _complex_to_source(z: complex) -> str:
    re, im = z.real, z.imag

    def num(x: float) -> str:
        return str(int(x)) if float(x).is_integer() else repr(x)

    if im == 0:
        return num(re)
    if re == 0:
        return f"{num(im)}i"
    joiner = "+" if im >= 0 else "-"
    return f"{num(re)}{joiner}{num(abs(im))}i"


def gate_to_source(g: Gate) -> str:
    if isinstance(g, BuiltinGate):
        return g.name
    if isinstance(g, PhaseGate):
        return f"Phase {expr_to_source(g.shift)}"
    if isinstance(g, FTGate):
        return f"FT({g.n})"
    if isinstance(g, MatrixGate):
        return "[[" + ", ".join(_complex_to_source(z) for z in g.entries) + "]]"
    raise TypeError(f"unknown gate node {g!r}")


def _ctx_to_source(ctx: list[tuple[str, str]]) -> str:
    return ", ".join(f"{n}:{t}" for n, t in ctx)


def stmt_to_source(s: Stmt, indent: int = 0) -> str:
    pad = "  " * indent

    def blk(st: Stmt) -> str:
        # blocks render multi-line; any other statement renders inline
        if isinstance(st, Block):
            inner = "".join(stmt_to_source(t, indent + 1) + ";\n" for t in st.stmts)
            return "{\n" + inner + pad + "}"
        return stmt_to_source(st, 0)

    if isinstance(s, Allocate):
        return f"{pad}new {s.var_type} {s.name} := {expr_to_source(s.init)}"
    if isinstance(s, Assign):
        return f"{pad}{s.name} := {expr_to_source(s.expr)}"
    if isinstance(s, AssignMeasure):
        return f"{pad}{s.target} := measure {s.source}"
    if isinstance(s, MeasureBranch):
        return f"{pad}measure {s.qvar} then {blk(s.then_branch)} else {blk(s.else_branch)}"
    if isinstance(s, If):
        out = f"{pad}if {expr_to_source(s.cond)} then {blk(s.then_branch)}"
        if s.else_branch is not None:
            out += f" else {blk(s.else_branch)}"
        return out
    if isinstance(s, While):
        return f"{pad}while {expr_to_source(s.cond)} do {blk(s.body)}"
    if isinstance(s, GateApply):
        return f"{pad}{', '.join(s.vars)} *= {gate_to_source(s.gate)}"
    if isinstance(s, Send):
        return f"{pad}send {', '.join(s.vars)} to {s.dest}"
    if isinstance(s, Receive):
        return f"{pad}receive {_ctx_to_source(s.bindings)} from {s.source}"
    if isinstance(s, ProcDecl):
        ret = f" -> {_ctx_to_source(s.ret)}" if s.ret is not None else ""
        return (f"{pad}proc {s.name}: {_ctx_to_source(s.params)}{ret} "
                f"{blk(s.body)} in {blk(s.in_stmt)}")
    if isinstance(s, ProcCall):
        args = ", ".join(expr_to_source(a) for a in s.args)
        call = f"call {s.name}({args})"
        if s.results is not None:
            return f"{pad}({', '.join(s.results)}) := {call}"
        return pad + call
    if isinstance(s, Print):
        if isinstance(s.value, str):
            return f'{pad}print "{s.value}"'
        return f"{pad}print {expr_to_source(s.value)}"
    if isinstance(s, Dump):
        return f"{pad}dump {', '.join(s.vars)}"
    if isinstance(s, Skip):
        return pad + "skip"
    if isinstance(s, Block):
        inner = "".join(stmt_to_source(t, indent + 1) + ";\n" for t in s.stmts)
        return pad + "{\n" + inner + pad + "}"
    raise TypeError(f"unknown statement node {s!r}")


def program_to_source(p: Program) -> str:
    if p.is_module_form:
        parts = []
        for m in p.modules:
            inner = "".join(stmt_to_source(s, 1) + ";\n" for s in m.body)
            parts.append(f"module {m.name} {{\n{inner}}};\n")
        return "\n".join(parts)
    return "".join(stmt_to_source(s) + ";\n" for s in p.stmts)
