"""Static semantic analysis: scoping, typing judgements, no-cloning tuple
checks, dimension matching, send/receive ownership typing and the advisory
communication-balance check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ast
from . import errors as E
from .errors import Diagnostic, SourcePos

UNITARY_TOL = 1e-9

CLASSICAL = "classical"
QUANTUM = "quantum"


@dataclass(frozen=True)
class TypeSignature:
    """Classical-or-quantum kind plus bit/qbit width (0 = void)."""

    kind: str
    width: int
    is_float: bool = False

    @property
    def is_quantum(self) -> bool:
        return self.kind == QUANTUM and self.width > 0

    @property
    def is_classical(self) -> bool:
        return self.kind == CLASSICAL

    def __str__(self) -> str:
        return _MNEMONIC.get(self, f"{self.kind}({self.width})")


BIT = TypeSignature(CLASSICAL, 1)
QBIT = TypeSignature(QUANTUM, 1)
SHORT = TypeSignature(CLASSICAL, 8)
QSHORT = TypeSignature(QUANTUM, 8)
INT = TypeSignature(CLASSICAL, 16)
QINT = TypeSignature(QUANTUM, 16)
FLOAT = TypeSignature(CLASSICAL, 64, is_float=True)
VOID = TypeSignature(CLASSICAL, 0)

SIGNATURES = {
    "bit": BIT, "qbit": QBIT, "short": SHORT, "qshort": QSHORT,
    "int": INT, "qint": QINT, "float": FLOAT, "void": VOID,
}
_MNEMONIC = {sig: name for name, sig in SIGNATURES.items()}


def type_equiv(a: TypeSignature, b: TypeSignature) -> bool:
    """Type equality up to isomorphism: kind and width must agree."""
    return a.kind == b.kind and a.width == b.width and a.is_float == b.is_float


# ---------------------------------------------------------------------------
# Typing context

OWNED = "owned"
SENT = "sent-away"


@dataclass
class VarInfo:
    sig: TypeSignature
    state: str = OWNED
    is_alias: bool = False  # quantum procedure parameter (caller owns it)


class TypingContext:
    """Scope stack with innermost-first lookup; overshading is allowed."""

    def __init__(self, module: str | None = None):
        self.scopes: list[dict[str, VarInfo]] = [{}]
        self.procs: list[dict[str, ast.ProcDecl]] = [{}]
        self.module = module

    def push(self):
        self.scopes.append({})
        self.procs.append({})

    def pop(self):
        self.scopes.pop()
        self.procs.pop()

    def declare(self, name: str, sig: TypeSignature, is_alias: bool = False) -> bool:
        if name in self.scopes[-1]:
            return False
        self.scopes[-1][name] = VarInfo(sig, is_alias=is_alias)
        return True

    def lookup(self, name: str) -> VarInfo | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def declare_proc(self, decl: ast.ProcDecl) -> bool:
        if decl.name in self.procs[-1]:
            return False
        self.procs[-1][decl.name] = decl
        return True

    def lookup_proc(self, name: str) -> ast.ProcDecl | None:
        for scope in reversed(self.procs):
            if name in scope:
                return scope[name]
        return None

    def sent_marks(self) -> list[tuple[int, str]]:
        return [(i, name) for i, scope in enumerate(self.scopes)
                for name, info in scope.items() if info.state == SENT]


@dataclass
class CheckedProgram:
    program: ast.Program
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors


# ---------------------------------------------------------------------------
# The checker


class Checker:
    def __init__(self, filename: str = "<input>"):
        self.filename = filename
        self.diagnostics: list[Diagnostic] = []
        self.module_names: set[str] = set()
        self._mute = 0  # suppress diagnostics during fixpoint trial passes
        self._in_proc = 0

    def report(self, pos: SourcePos | None, code: str, message: str,
               severity: str = "error"):
        if not self._mute:
            self.diagnostics.append(
                Diagnostic(severity, pos, code, message, self.filename))

    # -- entry point --------------------------------------------------------

    def check_program(self, program: ast.Program) -> CheckedProgram:
        if program.is_module_form:
            self.module_names = {m.name for m in program.modules}
            for mod in program.modules:
                ctx = TypingContext(module=mod.name)
                for stmt in mod.body:
                    self.check_stmt(stmt, ctx)
        else:
            ctx = TypingContext()
            for stmt in program.stmts:
                self.check_stmt(stmt, ctx)
        return CheckedProgram(program, self.diagnostics)

    # -- expressions ----------------------------------------------------------

    def type_expr(self, e: ast.Expr, ctx: TypingContext) -> TypeSignature:
        sig = self._type_expr(e, ctx)
        e.sig = sig
        return sig

    def _type_expr(self, e: ast.Expr, ctx: TypingContext) -> TypeSignature:
        if isinstance(e, ast.IntLit):
            return INT
        if isinstance(e, ast.FloatLit):
            return FLOAT
        if isinstance(e, ast.BoolLit):
            return BIT
        if isinstance(e, ast.Ident):
            info = self._resolve(e.name, e.pos, ctx)
            if info is None:
                return VOID
            if info.sig.is_quantum:
                self.report(e.pos, E.E_NOT_CLASSICAL,
                            f"quantum variable '{e.name}' cannot appear in a "
                            "classical expression")
                return VOID
            return info.sig
        if isinstance(e, ast.UnOp):
            sub = self.type_expr(e.operand, ctx)
            if sub == VOID:
                return BIT if e.op == "!" else VOID  # already reported
            if e.op == "!":
                if not self._is_bit(sub):
                    self.report(e.pos, E.E_TYPE_MISMATCH,
                                f"operator '!' needs a bit operand, got {sub}")
                return BIT
            if sub.is_float or self._is_intlike(sub):
                return sub
            self.report(e.pos, E.E_TYPE_MISMATCH,
                        f"operator '-' needs a numeric operand, got {sub}")
            return VOID
        if isinstance(e, ast.BinOp):
            lt = self.type_expr(e.left, ctx)
            rt = self.type_expr(e.right, ctx)
            if e.op in ("+", "-", "*", "/"):
                if not (self._is_numeric(lt) and self._is_numeric(rt)):
                    self.report(e.pos, E.E_TYPE_MISMATCH,
                                f"arithmetic needs numeric operands, got {lt} and {rt}")
                    return VOID
                if lt.is_float or rt.is_float:
                    return FLOAT
                # integer literals adapt to the other operand's width
                if isinstance(e.left, ast.IntLit) and not isinstance(e.right, ast.IntLit):
                    return rt
                if isinstance(e.right, ast.IntLit) and not isinstance(e.left, ast.IntLit):
                    return lt
                return lt if lt.width >= rt.width else rt
            if e.op in ("<", ">", "<=", ">=", "==", "!="):
                if not (lt.is_classical and rt.is_classical):
                    self.report(e.pos, E.E_TYPE_MISMATCH,
                                "comparisons need classical operands")
                return BIT
            if e.op in ("&", "|"):
                if not (self._is_bit(lt) and self._is_bit(rt)):
                    self.report(e.pos, E.E_TYPE_MISMATCH,
                                f"operator '{e.op}' needs bit operands, "
                                f"got {lt} and {rt}")
                return BIT
        raise TypeError(f"unknown expression node {e!r}")

    @staticmethod
    def _is_bit(sig: TypeSignature) -> bool:
        return sig.is_classical and sig.width == 1

    @staticmethod
    def _is_intlike(sig: TypeSignature) -> bool:
        return sig.is_classical and not sig.is_float and sig.width > 0

    @classmethod
    def _is_numeric(cls, sig: TypeSignature) -> bool:
        return sig.is_float or cls._is_intlike(sig)

    def _resolve(self, name: str, pos: SourcePos,
                 ctx: TypingContext) -> VarInfo | None:
        info = ctx.lookup(name)
        if info is None:
            self.report(pos, E.E_UNDECLARED, f"'{name}' is not declared")
            return None
        if info.state == SENT:
            self.report(pos, E.E_USE_AFTER_SEND,
                        f"'{name}' was sent away and is no longer accessible")
            return None
        return info

    def _assignable(self, target: TypeSignature, expr_sig: TypeSignature,
                    expr: ast.Expr) -> bool:
        if type_equiv(target, expr_sig):
            return True
        if target.is_float and self._is_intlike(expr_sig):
            return True  # implicit int -> float widening
        if self._is_intlike(target) and isinstance(expr, ast.IntLit):
            return 0 <= expr.value < (1 << target.width)
        if self._is_intlike(target) and self._is_intlike(expr_sig):
            return expr_sig.width <= target.width
        return False

    # -- statements ---------------------------------------------------------

    def check_stmt(self, s: ast.Stmt, ctx: TypingContext):
        method = getattr(self, "_check_" + type(s).__name__.lower(), None)
        if method is None:
            raise TypeError(f"unknown statement node {s!r}")
        method(s, ctx)

    def _check_allocate(self, s: ast.Allocate, ctx: TypingContext):
        sig = SIGNATURES[s.var_type]
        if sig.is_quantum:
            if not (isinstance(s.init, ast.IntLit) and s.init.value in (0, 1)):
                self.report(s.pos, E.E_QUANTUM_INIT,
                            "quantum variables must be initialised with the "
                            "literal 0 or 1")
            else:
                s.init.sig = INT
        else:
            init_sig = self.type_expr(s.init, ctx)
            if not self._assignable(sig, init_sig, s.init):
                self.report(s.pos, E.E_TYPE_MISMATCH,
                            f"cannot initialise {s.var_type} '{s.name}' "
                            f"from {init_sig}")
        if not ctx.declare(s.name, sig):
            self.report(s.pos, E.E_REDECLARED,
                        f"'{s.name}' is already declared in this scope")

    def _check_assign(self, s: ast.Assign, ctx: TypingContext):
        expr_sig = self.type_expr(s.expr, ctx)
        info = self._resolve(s.name, s.pos, ctx)
        if info is None:
            return
        if info.sig.is_quantum:
            self.report(s.pos, E.E_NOT_CLASSICAL,
                        f"cannot assign to quantum variable '{s.name}'")
            return
        if not self._assignable(info.sig, expr_sig, s.expr):
            self.report(s.pos, E.E_TYPE_MISMATCH,
                        f"cannot assign {expr_sig} to {info.sig} '{s.name}'")

    def check_measure(self, s: ast.AssignMeasure, ctx: TypingContext):
        """Measurement targets need exactly as many bits as there are qbits."""
        target = self._resolve(s.target, s.pos, ctx)
        source = self._resolve(s.source, s.pos, ctx)
        if source is not None and not source.sig.is_quantum:
            self.report(s.pos, E.E_NOT_QUANTUM,
                        f"measure needs a quantum source, '{s.source}' is "
                        f"{source.sig}")
            source = None
        if target is None or source is None:
            return
        if target.sig.is_quantum:
            self.report(s.pos, E.E_NOT_CLASSICAL,
                        f"measurement target '{s.target}' must be classical")
            return
        if target.sig.is_float:
            self.report(s.pos, E.E_MEASURE_FLOAT,
                        "float variables cannot store measurement results")
            return
        if target.sig.width != source.sig.width:
            self.report(s.pos, E.E_MEASURE_WIDTH,
                        f"measuring {source.sig.width} qbit(s) into "
                        f"{target.sig.width} bit(s)")

    _check_assignmeasure = check_measure

    def _check_measurebranch(self, s: ast.MeasureBranch, ctx: TypingContext):
        info = self._resolve(s.qvar, s.pos, ctx)
        if info is not None and not info.sig.is_quantum:
            self.report(s.pos, E.E_NOT_QUANTUM,
                        f"measure needs a quantum variable, '{s.qvar}' is "
                        f"{info.sig}")
        self._check_branches(s.then_branch, s.else_branch, ctx)

    def _check_if(self, s: ast.If, ctx: TypingContext):
        cond_sig = self.type_expr(s.cond, ctx)
        if not self._is_bit(cond_sig):
            self.report(s.cond.pos if hasattr(s.cond, "pos") else s.pos,
                        E.E_COND_NOT_BIT,
                        f"condition must have type bit, got {cond_sig}")
        self._check_branches(s.then_branch, s.else_branch, ctx)

    def _check_branches(self, then_branch: ast.Stmt,
                        else_branch: ast.Stmt | None, ctx: TypingContext):
        # sent-away marks are merged as the union of both branches
        baseline = ctx.sent_marks()
        self.check_stmt(then_branch, ctx)
        after_then = ctx.sent_marks()
        for i, name in set(after_then) - set(baseline):
            ctx.scopes[i][name].state = OWNED
        if else_branch is not None:
            self.check_stmt(else_branch, ctx)
        for i, name in after_then:
            if name in ctx.scopes[i]:
                ctx.scopes[i][name].state = SENT

    def _check_while(self, s: ast.While, ctx: TypingContext):
        cond_sig = self.type_expr(s.cond, ctx)
        if not self._is_bit(cond_sig):
            self.report(s.pos, E.E_COND_NOT_BIT,
                        f"condition must have type bit, got {cond_sig}")
        # iterate the body to a fixpoint of sent-away marks so a variable
        # sent in iteration k is flagged when reused in iteration k+1
        self._mute += 1
        for _ in range(len(ctx.sent_marks()) + len(ctx.scopes[-1]) + 2):
            before = ctx.sent_marks()
            self.check_stmt(s.body, ctx)
            if ctx.sent_marks() == before:
                break
        self._mute -= 1
        self.check_stmt(s.body, ctx)

    def check_gate_apply(self, s: ast.GateApply, ctx: TypingContext):
        infos = []
        for name in s.vars:
            info = self._resolve(name, s.pos, ctx)
            if info is None:
                continue
            if not info.sig.is_quantum:
                self.report(s.pos, E.E_NOT_QUANTUM,
                            f"gate target '{name}' is {info.sig}, not quantum")
                continue
            infos.append((name, info))
        if self._has_duplicates([n for n, _ in infos], s.pos):
            return
        if len(infos) != len(s.vars):
            return
        total_width = sum(info.sig.width for _, info in infos)
        gate_width = self._gate_width(s.gate, ctx)
        if gate_width is not None and gate_width != total_width:
            self.report(s.pos, E.E_DIM_MISMATCH,
                        f"gate acts on {gate_width} qbit(s) but the tuple "
                        f"has {total_width}")

    _check_gateapply = check_gate_apply

    def _gate_width(self, g: ast.Gate, ctx: TypingContext) -> int | None:
        if isinstance(g, ast.BuiltinGate):
            return {"H": 1, "Not": 1, "CNot": 2}[g.name]
        if isinstance(g, ast.PhaseGate):
            shift_sig = self.type_expr(g.shift, ctx)
            if not self._is_numeric(shift_sig):
                self.report(g.pos, E.E_BAD_PARAM,
                            f"Phase shift must be numeric, got {shift_sig}")
            return 1
        if isinstance(g, ast.FTGate):
            if g.n < 1:
                self.report(g.pos, E.E_BAD_PARAM,
                            f"FT needs a positive qbit count, got {g.n}")
                return None
            return g.n
        if isinstance(g, ast.MatrixGate):
            side = math.isqrt(len(g.entries))
            mat = np.array(g.entries, dtype=complex).reshape(side, side)
            defect = np.max(np.abs(mat.conj().T @ mat - np.eye(side)))
            if defect > UNITARY_TOL:
                self.report(g.pos, E.E_NOT_UNITARY,
                            f"matrix is not unitary (deviation {defect:.3g})")
                return None
            return side.bit_length() - 1
        raise TypeError(f"unknown gate node {g!r}")

    def _has_duplicates(self, names: list[str], pos: SourcePos) -> bool:
        seen = set()
        for name in names:
            if name in seen:
                self.report(pos, E.E_DUP_TUPLE,
                            f"'{name}' appears more than once in the tuple")
                return True
            seen.add(name)
        return False

    def check_send_receive(self, s: ast.Stmt, ctx: TypingContext):
        if isinstance(s, ast.Send):
            self._check_peer(s.dest, s.pos, ctx)
            if self._has_duplicates(s.vars, s.pos):
                return
            for name in s.vars:
                info = self._resolve(name, s.pos, ctx)
                if info is None:
                    continue
                if info.sig.is_quantum:
                    info.state = SENT
        elif isinstance(s, ast.Receive):
            self._check_peer(s.source, s.pos, ctx)
            self._has_duplicates([n for n, _ in s.bindings], s.pos)
            for name, var_type in s.bindings:
                if ctx.lookup(name) is not None:
                    self.report(s.pos, E.E_RECV_SHADOW,
                                f"receive would shadow existing variable "
                                f"'{name}'")
                    continue
                ctx.declare(name, SIGNATURES[var_type])

    _check_send = check_send_receive
    _check_receive = check_send_receive

    def _check_peer(self, peer: str, pos: SourcePos, ctx: TypingContext):
        if self._in_proc:
            self.report(pos, E.E_COMM_IN_PROC,
                        "send/receive is not allowed inside a procedure body")
        if ctx.module is None:
            self.report(pos, E.E_UNKNOWN_MODULE,
                        "communication needs a module-form program")
        elif peer == ctx.module:
            self.report(pos, E.E_SELF_SEND,
                        f"module '{peer}' cannot communicate with itself")
        elif peer not in self.module_names:
            self.report(pos, E.E_UNKNOWN_MODULE, f"no module named '{peer}'")

    def _check_procdecl(self, s: ast.ProcDecl, ctx: TypingContext):
        if self._has_duplicates([n for n, _ in s.params], s.pos):
            return
        if not ctx.declare_proc(s):
            self.report(s.pos, E.E_REDECLARED,
                        f"procedure '{s.name}' is already declared")
        body_ctx = TypingContext(module=ctx.module)
        body_ctx.procs = ctx.procs + [{s.name: s}]
        for name, var_type in s.params:
            sig = SIGNATURES[var_type]
            body_ctx.declare(name, sig, is_alias=sig.is_quantum)
        self._in_proc += 1
        for stmt in s.body.stmts:
            self.check_stmt(stmt, body_ctx)
        self._in_proc -= 1
        ctx.push()
        ctx.declare_proc(s)
        self.check_stmt(s.in_stmt, ctx)
        ctx.pop()

    def _check_proccall(self, s: ast.ProcCall, ctx: TypingContext):
        decl = ctx.lookup_proc(s.name)
        if decl is None:
            self.report(s.pos, E.E_UNKNOWN_PROC,
                        f"no procedure named '{s.name}'")
            for arg in s.args:
                if not isinstance(arg, ast.Ident):
                    self.type_expr(arg, ctx)
            return
        if len(s.args) != len(decl.params):
            self.report(s.pos, E.E_ARITY,
                        f"'{s.name}' takes {len(decl.params)} argument(s), "
                        f"got {len(s.args)}")
            return
        quantum_args = []
        for arg, (pname, ptype) in zip(s.args, decl.params):
            psig = SIGNATURES[ptype]
            if psig.is_quantum:
                if not isinstance(arg, ast.Ident):
                    self.report(s.pos, E.E_NOT_QUANTUM,
                                f"quantum parameter '{pname}' needs a "
                                "variable argument")
                    continue
                info = self._resolve(arg.name, arg.pos, ctx)
                if info is None:
                    continue
                if not info.sig.is_quantum:
                    self.report(arg.pos, E.E_NOT_QUANTUM,
                                f"argument for quantum parameter '{pname}' "
                                f"is {info.sig}")
                    continue
                arg.sig = info.sig
                if not type_equiv(info.sig, psig):
                    self.report(arg.pos, E.E_TYPE_MISMATCH,
                                f"argument '{arg.name}' is {info.sig}, "
                                f"parameter '{pname}' is {ptype}")
                quantum_args.append(arg.name)
            else:
                asig = self.type_expr(arg, ctx)
                if not self._assignable(psig, asig, arg):
                    self.report(s.pos, E.E_TYPE_MISMATCH,
                                f"argument for '{pname}' is {asig}, "
                                f"expected {ptype}")
        self._has_duplicates(quantum_args, s.pos)
        if s.results is not None:
            classical = [(n, t) for n, t in decl.params
                         if not SIGNATURES[t].is_quantum]
            if len(s.results) != len(classical):
                self.report(s.pos, E.E_ARITY,
                            f"'{s.name}' returns {len(classical)} classical "
                            f"value(s), result tuple has {len(s.results)}")
                return
            for rname, (pname, ptype) in zip(s.results, classical):
                info = self._resolve(rname, s.pos, ctx)
                if info is None:
                    continue
                if info.sig.is_quantum:
                    self.report(s.pos, E.E_NOT_CLASSICAL,
                                f"result target '{rname}' must be classical")
                elif not self._assignable(info.sig, SIGNATURES[ptype], None):
                    self.report(s.pos, E.E_TYPE_MISMATCH,
                                f"result '{rname}' is {info.sig}, parameter "
                                f"'{pname}' is {ptype}")

    def _check_print(self, s: ast.Print, ctx: TypingContext):
        if not isinstance(s.value, str):
            self.type_expr(s.value, ctx)

    def _check_dump(self, s: ast.Dump, ctx: TypingContext):
        if self._has_duplicates(s.vars, s.pos):
            return
        for name in s.vars:
            info = self._resolve(name, s.pos, ctx)
            if info is not None and not info.sig.is_quantum:
                self.report(s.pos, E.E_NOT_QUANTUM,
                            f"dump target '{name}' is {info.sig}, not quantum")

    def _check_skip(self, s: ast.Skip, ctx: TypingContext):
        pass

    def _check_block(self, s: ast.Block, ctx: TypingContext):
        ctx.push()
        for stmt in s.stmts:
            self.check_stmt(stmt, ctx)
        ctx.pop()


def check_program(program: ast.Program, filename: str = "<input>") -> CheckedProgram:
    return Checker(filename).check_program(program)


# ---------------------------------------------------------------------------
# Communication balance (advisory)

_BALANCE_LOOP_CAP = 4096
UNKNOWN = object()


@dataclass
class BalanceResult:
    status: str  # "balanced" | "unknown" | "imbalanced"
    warnings: list[Diagnostic] = field(default_factory=list)


def _contains_comm(s: ast.Stmt) -> bool:
    if isinstance(s, (ast.Send, ast.Receive)):
        return True
    if isinstance(s, ast.Block):
        return any(_contains_comm(t) for t in s.stmts)
    if isinstance(s, (ast.If, ast.MeasureBranch)):
        branches = [s.then_branch, s.else_branch]
        return any(b is not None and _contains_comm(b) for b in branches)
    if isinstance(s, ast.While):
        return _contains_comm(s.body)
    if isinstance(s, ast.ProcDecl):
        return _contains_comm(s.body) or _contains_comm(s.in_stmt)
    return False


class _ConstWalker:
    """Collects the exact comm-event sequence of a straight-line module.

    Compile-time-constant ifs and while loops are resolved/unrolled; any
    construct whose communication behaviour depends on a probabilistic
    value makes the module's sequence unknown.
    """

    def __init__(self):
        self.env: dict[str, object] = {}
        self.events: list[tuple[str, str, TypeSignature]] = []
        self.unknown = False

    def eval(self, e: ast.Expr):
        if isinstance(e, (ast.IntLit, ast.FloatLit)):
            return e.value
        if isinstance(e, ast.BoolLit):
            return 1 if e.value else 0
        if isinstance(e, ast.Ident):
            return self.env.get(e.name, UNKNOWN)
        if isinstance(e, ast.UnOp):
            v = self.eval(e.operand)
            if v is UNKNOWN:
                return UNKNOWN
            return -v if e.op == "-" else (0 if v else 1)
        if isinstance(e, ast.BinOp):
            a, b = self.eval(e.left), self.eval(e.right)
            if a is UNKNOWN or b is UNKNOWN:
                return UNKNOWN
            table = {
                "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
                "/": lambda: (a // b if isinstance(a, int) and isinstance(b, int)
                              else a / b) if b != 0 else UNKNOWN,
                "<": lambda: int(a < b), ">": lambda: int(a > b),
                "<=": lambda: int(a <= b), ">=": lambda: int(a >= b),
                "==": lambda: int(a == b), "!=": lambda: int(a != b),
                "&": lambda: int(bool(a) and bool(b)),
                "|": lambda: int(bool(a) or bool(b)),
            }
            return table[e.op]()
        return UNKNOWN

    def _assigned_names(self, s: ast.Stmt) -> set[str]:
        if isinstance(s, ast.Assign):
            return {s.name}
        if isinstance(s, (ast.Allocate, ast.AssignMeasure)):
            return {s.name if isinstance(s, ast.Allocate) else s.target}
        if isinstance(s, ast.Block):
            return set().union(*(self._assigned_names(t) for t in s.stmts)) \
                if s.stmts else set()
        if isinstance(s, (ast.If, ast.MeasureBranch)):
            out = self._assigned_names(s.then_branch)
            if s.else_branch is not None:
                out |= self._assigned_names(s.else_branch)
            return out
        if isinstance(s, ast.While):
            return self._assigned_names(s.body)
        if isinstance(s, ast.ProcCall) and s.results:
            return set(s.results)
        return set()

    def _forget(self, s: ast.Stmt):
        for name in self._assigned_names(s):
            self.env[name] = UNKNOWN

    def walk(self, s: ast.Stmt):
        if self.unknown:
            return
        if isinstance(s, ast.Allocate):
            self.env[s.name] = self.eval(s.init)
        elif isinstance(s, ast.Assign):
            self.env[s.name] = self.eval(s.expr)
        elif isinstance(s, ast.AssignMeasure):
            self.env[s.target] = UNKNOWN
        elif isinstance(s, ast.Send):
            for name in s.vars:
                self.events.append(("send", s.dest, name))
        elif isinstance(s, ast.Receive):
            for name, var_type in s.bindings:
                self.events.append(("recv", s.source, SIGNATURES[var_type]))
                self.env[name] = UNKNOWN
        elif isinstance(s, ast.Block):
            for t in s.stmts:
                self.walk(t)
        elif isinstance(s, ast.MeasureBranch):
            if _contains_comm(s.then_branch) or _contains_comm(s.else_branch):
                self.unknown = True
                return
            self._forget(s)
        elif isinstance(s, ast.If):
            cond = self.eval(s.cond)
            if cond is UNKNOWN:
                branches = [b for b in (s.then_branch, s.else_branch) if b]
                if any(_contains_comm(b) for b in branches):
                    self.unknown = True
                    return
                self._forget(s)
            elif cond:
                self.walk(s.then_branch)
            elif s.else_branch is not None:
                self.walk(s.else_branch)
        elif isinstance(s, ast.While):
            for _ in range(_BALANCE_LOOP_CAP):
                cond = self.eval(s.cond)
                if cond is UNKNOWN:
                    if _contains_comm(s.body):
                        self.unknown = True
                    else:
                        self._forget(s)
                    return
                if not cond:
                    return
                self.walk(s.body)
                if self.unknown:
                    return
            self.unknown = True  # did not settle within the unroll cap
        elif isinstance(s, ast.ProcDecl):
            self.walk(s.in_stmt)
        elif isinstance(s, ast.ProcCall):
            if s.results:
                self._forget(s)
        # print/dump/skip/gate have no communication effect


def comm_balance_check(program: ast.Program,
                       checked: CheckedProgram | None = None,
                       filename: str = "<input>") -> BalanceResult:
    """Compare per-channel send/receive sequences of straight-line modules.

    Returns `unknown` as soon as one module's communication behaviour is not
    compile-time determined. Mismatches are reported as W_COMM_IMBALANCE
    warnings; this check is advisory only.
    """
    if not program.is_module_form:
        return BalanceResult("balanced")
    per_module: dict[str, _ConstWalker] = {}
    for mod in program.modules:
        walker = _ConstWalker()
        for stmt in mod.body:
            walker.walk(stmt)
        if walker.unknown:
            return BalanceResult("unknown")
        per_module[mod.name] = walker

    # sends carry variable names; resolve their declared types by a light
    # scan of the module's declarations
    warnings: list[Diagnostic] = []
    names = [m.name for m in program.modules]
    sig_of_var: dict[tuple[str, str], TypeSignature] = {}
    for mod in program.modules:
        def collect(s: ast.Stmt):
            if isinstance(s, ast.Allocate):
                sig_of_var[(mod.name, s.name)] = SIGNATURES[s.var_type]
            elif isinstance(s, ast.Receive):
                for n, t in s.bindings:
                    sig_of_var[(mod.name, n)] = SIGNATURES[t]
            elif isinstance(s, ast.Block):
                for t in s.stmts:
                    collect(t)
            elif isinstance(s, (ast.If, ast.MeasureBranch)):
                collect(s.then_branch)
                if s.else_branch is not None:
                    collect(s.else_branch)
            elif isinstance(s, ast.While):
                collect(s.body)
            elif isinstance(s, ast.ProcDecl):
                collect(s.in_stmt)
        for stmt in mod.body:
            collect(stmt)

    for origin in names:
        for dest in names:
            if origin == dest:
                continue
            sends = [sig_of_var.get((origin, var), VOID)
                     for kind, peer, var in per_module[origin].events
                     if kind == "send" and peer == dest]
            recvs = [sig for kind, peer, sig in per_module[dest].events
                     if kind == "recv" and peer == origin]
            if len(sends) != len(recvs) or not all(
                    type_equiv(a, b) for a, b in zip(sends, recvs)):
                warnings.append(Diagnostic(
                    "warning", None, E.W_COMM_IMBALANCE,
                    f"channel {origin}->{dest}: {len(sends)} send(s) vs "
                    f"{len(recvs)} receive(s) do not line up", filename))
    if warnings:
        return BalanceResult("imbalanced", warnings)
    return BalanceResult("balanced")
