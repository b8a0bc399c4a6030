"""Operational execution of type-checked programs.

Each module runs on its own interpreter instance holding classical frames;
quantum statements are dispatched to the shared QuantumState. Execution is
an explicit work-stack machine so a scheduler can advance one statement at
a time and suspend cleanly on a blocking receive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from . import ast
from .errors import (E_DIV_ZERO, E_RECURSION_LIMIT, E_RECV_TYPE,
                     RuntimeFailure)
from .qstate import QuantumState, builtin_gate, format_probability
from .typecheck import SIGNATURES, TypeSignature, type_equiv

RUNNING = "Running"
BLOCKED_ON_RECEIVE = "BlockedOnReceive"
# channels are unbounded, so sends never block; the status exists only to
# complete the execution-state vocabulary
BLOCKED_ON_SEND = "BlockedOnSend"
FINISHED = "Finished"
FAILED = "Failed"

DEFAULT_RECURSION_LIMIT = 4096


@dataclass
class QuantumRef:
    indices: list[int]
    is_alias: bool = False  # procedure parameter aliasing the caller's qbits


@dataclass
class Binding:
    sig: TypeSignature
    value: object  # int | float for classical, QuantumRef for quantum


@dataclass
class Message:
    sig: TypeSignature
    value: object = None            # classical payload (copied)
    indices: list[int] | None = None  # quantum payload (moved)

    @property
    def is_quantum(self) -> bool:
        return self.indices is not None


class OutputSink:
    """Collects program output as completed lines.

    A `dump` joins the preceding `print` of the same module when both stem
    from the same source line, mirroring how the reference outputs lay out
    `print "...:"; dump v;` pairs. Output from another module flushes any
    pending fragment first so global ordering is preserved.
    """

    def __init__(self, stream=None, trace: bool = False):
        self.lines: list[str] = []
        self.stream = stream
        self.trace = trace
        self._pending: tuple[str, int, str] | None = None

    def _flush_pending(self):
        if self._pending is not None:
            module, _, text = self._pending
            self._pending = None
            self._complete(module, text)

    def _complete(self, module: str, text: str):
        line = f"{module}: {text}" if self.trace else text
        self.lines.append(line)
        if self.stream is not None:
            self.stream.write(line + "\n")
            self.stream.flush()

    def emit_print(self, module: str, src_line: int, text: str):
        if self._pending is not None:
            self._flush_pending()
        self._pending = (module, src_line, text)

    def emit_dump(self, module: str, src_line: int, text: str):
        if self._pending is not None:
            pmod, pline, ptext = self._pending
            if pmod == module and pline == src_line:
                self._pending = None
                self._complete(module, f"{ptext} {text}")
                return
            self._flush_pending()
        self._complete(module, text)

    def flush(self):
        self._flush_pending()


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(int(v))


def format_spectrum(entries: list[tuple[int, float]], width: int) -> str:
    return ", ".join(f"{format_probability(p)} |{pattern:0{width}b}>"
                     for pattern, p in entries)


def eval_expr(e: ast.Expr, lookup) -> object:
    """Evaluate a type-checked classical expression.

    `lookup` maps an identifier to its current value. Integer division
    truncates toward zero; division by zero is a runtime failure.
    """
    if isinstance(e, ast.IntLit):
        return e.value
    if isinstance(e, ast.FloatLit):
        return e.value
    if isinstance(e, ast.BoolLit):
        return 1 if e.value else 0
    if isinstance(e, ast.Ident):
        return lookup(e.name)
    if isinstance(e, ast.UnOp):
        v = eval_expr(e.operand, lookup)
        if e.op == "-":
            return -v
        return 0 if v else 1
    if isinstance(e, ast.BinOp):
        a = eval_expr(e.left, lookup)
        b = eval_expr(e.right, lookup)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise RuntimeFailure(E_DIV_ZERO, "division by zero", e.pos)
            if isinstance(a, int) and isinstance(b, int):
                # integer division truncates toward zero
                q = abs(a) // abs(b)
                return q if (a >= 0) == (b >= 0) else -q
            return a / b
        if op == "<":
            return int(a < b)
        if op == ">":
            return int(a > b)
        if op == "<=":
            return int(a <= b)
        if op == ">=":
            return int(a >= b)
        if op == "==":
            return int(a == b)
        if op == "!=":
            return int(a != b)
        if op == "&":
            return int(bool(a) and bool(b))
        if op == "|":
            return int(bool(a) or bool(b))
    raise TypeError(f"unknown expression node {e!r}")


# Work-stack item tags.
_STMT = 0
_SCOPE_EXIT = 1
_WHILE = 2
_CALL_RETURN = 3


class ModuleInterp:
    """Executes one module's statement list, one statement per step."""

    def __init__(self, name: str, body: list[ast.Stmt], qstate: QuantumState,
                 rng: np.random.Generator, sink: OutputSink,
                 channels=None, recursion_limit: int = DEFAULT_RECURSION_LIMIT):
        self.name = name
        self.qstate = qstate
        self.rng = rng
        self.sink = sink
        self.channels = channels
        self.recursion_limit = recursion_limit
        self.scopes: list[dict[str, Binding]] = [{}]
        self.procs: list[dict[str, ast.ProcDecl]] = [{}]
        self.depth = 0
        self.status = RUNNING
        self.blocked_channel: tuple[str, str] | None = None
        self.failure: RuntimeFailure | None = None
        self.work: list = [(_STMT, s) for s in reversed(body)]

    # -- frame helpers ------------------------------------------------------

    def lookup(self, name: str) -> Binding:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        raise KeyError(name)  # unreachable after type checking

    def _lookup_value(self, name: str):
        return self.lookup(name).value

    def declare(self, name: str, binding: Binding):
        self.scopes[-1][name] = binding

    def delete(self, name: str):
        for scope in reversed(self.scopes):
            if name in scope:
                del scope[name]
                return

    def lookup_proc(self, name: str) -> ast.ProcDecl:
        for scope in reversed(self.procs):
            if name in scope:
                return scope[name]
        raise KeyError(name)

    def owned_indices(self) -> list[int]:
        out = []
        for scope in self.scopes:
            for binding in scope.values():
                if isinstance(binding.value, QuantumRef) and not binding.value.is_alias:
                    out.extend(binding.value.indices)
        return out

    # -- stepping -------------------------------------------------------------

    def step(self) -> bool:
        """Execute bookkeeping items plus at most one statement.

        Returns True if the module progressed (executed a statement or
        finished), False if it is (still) blocked on a receive.
        """
        if self.status in (FINISHED, FAILED):
            return False
        try:
            return self._step_inner()
        except RuntimeFailure as failure:
            self.status = FAILED
            self.failure = failure
            self.sink.flush()
            return True

    def _step_inner(self) -> bool:
        while self.work:
            tag, payload = self.work[-1]
            if tag == _SCOPE_EXIT:
                self.work.pop()
                self._exit_scope()
                continue
            if tag == _CALL_RETURN:
                self.work.pop()
                self._return_from_call(payload)
                continue
            if tag == _WHILE:
                self.work.pop()
                node = payload
                if eval_expr(node.cond, self._lookup_value):
                    self.work.append((_WHILE, node))
                    self.work.append((_STMT, node.body))
                return True
            # a real statement
            node = payload
            if isinstance(node, ast.Receive) and not self._receive_ready(node):
                self.status = BLOCKED_ON_RECEIVE
                return False
            self.work.pop()
            self.status = RUNNING
            self.blocked_channel = None
            self.exec_stmt(node)
            return True
        # out of work: leave all remaining scopes, then finish
        while self.scopes:
            self._exit_scope()
        self.status = FINISHED
        self.sink.flush()
        return True

    def _exit_scope(self):
        scope = self.scopes.pop()
        if self.procs:
            self.procs.pop()
        doomed = []
        for binding in scope.values():
            if isinstance(binding.value, QuantumRef) and not binding.value.is_alias:
                doomed.extend(binding.value.indices)
        if doomed:
            self.qstate.release(doomed, self.rng)

    # -- statements -----------------------------------------------------------

    def exec_stmt(self, s: ast.Stmt):
        method = getattr(self, "_exec_" + type(s).__name__.lower())
        method(s)

    def _exec_allocate(self, s: ast.Allocate):
        sig = SIGNATURES[s.var_type]
        if sig.is_quantum:
            pattern = (1 << sig.width) - 1 if s.init.value == 1 else 0
            indices = self.qstate.alloc(sig.width, pattern)
            self.declare(s.name, Binding(sig, QuantumRef(indices)))
        else:
            value = eval_expr(s.init, self._lookup_value)
            if sig.is_float:
                value = float(value)
            self.declare(s.name, Binding(sig, value))

    def _exec_assign(self, s: ast.Assign):
        value = eval_expr(s.expr, self._lookup_value)
        binding = self.lookup(s.name)
        if binding.sig.is_float:
            value = float(value)
        binding.value = value

    def _exec_assignmeasure(self, s: ast.AssignMeasure):
        ref: QuantumRef = self.lookup(s.source).value
        outcome = self.qstate.measure(ref.indices, self.rng)
        self.lookup(s.target).value = outcome

    def _exec_measurebranch(self, s: ast.MeasureBranch):
        ref: QuantumRef = self.lookup(s.qvar).value
        outcome = self.qstate.measure(ref.indices, self.rng)
        # then-branch iff the outcome is non-zero
        branch = s.then_branch if outcome != 0 else s.else_branch
        self.work.append((_STMT, branch))

    def _exec_if(self, s: ast.If):
        if eval_expr(s.cond, self._lookup_value):
            self.work.append((_STMT, s.then_branch))
        elif s.else_branch is not None:
            self.work.append((_STMT, s.else_branch))

    def _exec_while(self, s: ast.While):
        if eval_expr(s.cond, self._lookup_value):
            self.work.append((_WHILE, s))
            self.work.append((_STMT, s.body))

    def _gate_matrix(self, g: ast.Gate) -> np.ndarray:
        if isinstance(g, ast.BuiltinGate):
            return builtin_gate(g.name)
        if isinstance(g, ast.PhaseGate):
            shift = eval_expr(g.shift, self._lookup_value)
            return builtin_gate("Phase", (float(shift),))
        if isinstance(g, ast.FTGate):
            return builtin_gate("FT", (g.n,))
        if isinstance(g, ast.MatrixGate):
            side = math.isqrt(len(g.entries))
            return np.array(g.entries, dtype=complex).reshape(side, side)
        raise TypeError(f"unknown gate node {g!r}")

    def _exec_gateapply(self, s: ast.GateApply):
        targets: list[int] = []
        for name in s.vars:
            targets.extend(self.lookup(name).value.indices)
        self.qstate.apply(self._gate_matrix(s.gate), targets)

    def _exec_send(self, s: ast.Send):
        channel = self.channels.get(self.name, s.dest)
        for name in s.vars:
            binding = self.lookup(name)
            if isinstance(binding.value, QuantumRef):
                channel.push(Message(binding.sig,
                                     indices=list(binding.value.indices)))
                self.delete(name)
            else:
                channel.push(Message(binding.sig, value=binding.value))

    def _receive_ready(self, s: ast.Receive) -> bool:
        channel = self.channels.get(s.source, self.name)
        self.blocked_channel = (s.source, self.name)
        return channel.size() >= len(s.bindings)

    def _exec_receive(self, s: ast.Receive):
        channel = self.channels.get(s.source, self.name)
        messages = channel.pop(len(s.bindings))
        for (name, var_type), msg in zip(s.bindings, messages):
            sig = SIGNATURES[var_type]
            if not type_equiv(sig, msg.sig):
                raise RuntimeFailure(
                    E_RECV_TYPE,
                    f"received {msg.sig} where '{name}:{var_type}' was "
                    f"declared", s.pos)
            if msg.is_quantum:
                self.declare(name, Binding(sig, QuantumRef(msg.indices)))
            else:
                self.declare(name, Binding(sig, msg.value))

    def _exec_procdecl(self, s: ast.ProcDecl):
        self.procs[-1][s.name] = s
        self.work.append((_STMT, s.in_stmt))

    def _exec_proccall(self, s: ast.ProcCall):
        decl = self.lookup_proc(s.name)
        if self.depth >= self.recursion_limit:
            raise RuntimeFailure(E_RECURSION_LIMIT,
                                 f"recursion depth {self.recursion_limit} "
                                 f"exceeded calling '{s.name}'", s.pos)
        new_scope: dict[str, Binding] = {}
        for arg, (pname, ptype) in zip(s.args, decl.params):
            sig = SIGNATURES[ptype]
            if sig.is_quantum:
                caller_ref: QuantumRef = self.lookup(arg.name).value
                new_scope[pname] = Binding(sig, QuantumRef(caller_ref.indices,
                                                           is_alias=True))
            else:
                value = eval_expr(arg, self._lookup_value)
                if sig.is_float:
                    value = float(value)
                new_scope[pname] = Binding(sig, value)
        saved = (self.scopes, self.procs, s,
                 [p for p, t in decl.params if not SIGNATURES[t].is_quantum])
        self.work.append((_CALL_RETURN, saved))
        self.scopes = [new_scope]
        self.procs = self.procs + [{decl.name: decl}]
        self.depth += 1
        self.work.append((_STMT, ast.Block(stmts=decl.body.stmts, pos=decl.pos)))

    def _return_from_call(self, saved):
        scopes, procs, call, classical_params = saved
        final = {}
        for pname in classical_params:
            for scope in reversed(self.scopes):
                if pname in scope:
                    final[pname] = scope[pname].value
                    break
        # any quantum variable allocated inside the body but not yet
        # released belongs to scopes we are abandoning; release them
        doomed = []
        for scope in self.scopes:
            for binding in scope.values():
                if isinstance(binding.value, QuantumRef) and not binding.value.is_alias:
                    doomed.extend(binding.value.indices)
        if doomed:
            self.qstate.release(doomed, self.rng)
        self.scopes = scopes
        self.procs = procs
        self.depth -= 1
        if call.results is not None:
            for rname, pname in zip(call.results, classical_params):
                binding = self.lookup(rname)
                value = final[pname]
                binding.value = float(value) if binding.sig.is_float else value

    def _exec_print(self, s: ast.Print):
        if isinstance(s.value, str):
            text = s.value
        else:
            text = format_value(eval_expr(s.value, self._lookup_value))
        self.sink.emit_print(self.name, s.pos.line, text)

    def _exec_dump(self, s: ast.Dump):
        targets: list[int] = []
        for name in s.vars:
            targets.extend(self.lookup(name).value.indices)
        entries = self.qstate.spectrum(targets)
        self.sink.emit_dump(self.name, s.pos.line,
                            format_spectrum(entries, len(targets)))

    def _exec_skip(self, s: ast.Skip):
        pass

    def _exec_block(self, s: ast.Block):
        self.scopes.append({})
        self.procs.append({})
        self.work.append((_SCOPE_EXIT, None))
        for stmt in reversed(s.stmts):
            self.work.append((_STMT, stmt))
