"""Symbolic trace extraction and program equivalence.

A type-checked program is turned into one trace per module: an ordered list
of Kraus-style elements (qbit creation, gate application, measurement
branch sums with projector sets, send/receive placeholders). Loops and
recursion must be boundedly unrollable. Traces can be compared exactly, up
to reordering of operations on disjoint qbits, or as completely positive
maps via Choi matrices; they can also be resolved numerically against an
initial state to predict output distributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ast
from .errors import E_TOO_LARGE, E_UNBOUNDED, ExtractError
from .kraus import choi_matrix
from .qstate import builtin_gate
from .typecheck import SIGNATURES, CheckedProgram

_LOOP_CAP = 4096
_LEAF_CAP = 4096
_CALL_DEPTH_CAP = 256

UNKNOWN = object()


# ---------------------------------------------------------------------------
# Trace elements


@dataclass
class Create:
    targets: tuple[int, ...]
    pattern: int  # initial basis state across the created qbits

    def render(self) -> str:
        return f"create |{self.pattern:0{len(self.targets)}b}> @ {list(self.targets)}"


@dataclass
class GateOp:
    name: str  # builtin name, "Phase(x)", "FT(n)" or "matrix"
    matrix: np.ndarray
    targets: tuple[int, ...]

    def render(self) -> str:
        return f"gate {self.name} @ {list(self.targets)}"


@dataclass
class Proj:
    value: int
    targets: tuple[int, ...]

    def render(self) -> str:
        return f"proj |{self.value:0{len(self.targets)}b}> @ {list(self.targets)}"


@dataclass
class SendPh:
    peer: str
    quantum: bool
    width: int
    targets: tuple[int, ...]  # empty for classical payloads

    def render(self) -> str:
        what = f"@ {list(self.targets)}" if self.quantum else f"({self.width} bit)"
        return f"send {{S}} -> {self.peer} {what}"


@dataclass
class RecvPh:
    peer: str
    quantum: bool
    width: int
    targets: tuple[int, ...]

    def render(self) -> str:
        what = f"@ {list(self.targets)}" if self.quantum else f"({self.width} bit)"
        return f"recv {{R}} <- {self.peer} {what}"


@dataclass
class BranchSum:
    branch_id: int
    kind: str  # "measure" | "if"
    targets: tuple[int, ...]  # measured positions; empty for "if"
    branches: list[tuple[int, list]]  # (outcome/condition value, elements)

    def render(self) -> str:
        head = f"branch #{self.branch_id} {self.kind}"
        if self.targets:
            head += f" @ {list(self.targets)}"
        return head


Element = object  # Create | GateOp | Proj | SendPh | RecvPh | BranchSum


def targets_of(elem) -> tuple[int, ...]:
    return getattr(elem, "targets", ())


# ---------------------------------------------------------------------------
# Constant evaluation over the abstract classical environment


def _const_eval(e: ast.Expr, env: dict):
    if isinstance(e, (ast.IntLit, ast.FloatLit)):
        return e.value
    if isinstance(e, ast.BoolLit):
        return 1 if e.value else 0
    if isinstance(e, ast.Ident):
        return env.get(e.name, UNKNOWN)
    if isinstance(e, ast.UnOp):
        v = _const_eval(e.operand, env)
        if v is UNKNOWN:
            return UNKNOWN
        return -v if e.op == "-" else (0 if v else 1)
    if isinstance(e, ast.BinOp):
        a = _const_eval(e.left, env)
        b = _const_eval(e.right, env)
        if a is UNKNOWN or b is UNKNOWN:
            return UNKNOWN
        if e.op == "/" and b == 0:
            return UNKNOWN
        ops = {
            "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
            "/": lambda: ((abs(a) // abs(b)) * (1 if (a >= 0) == (b >= 0) else -1)
                          if isinstance(a, int) and isinstance(b, int) else a / b),
            "<": lambda: int(a < b), ">": lambda: int(a > b),
            "<=": lambda: int(a <= b), ">=": lambda: int(a >= b),
            "==": lambda: int(a == b), "!=": lambda: int(a != b),
            "&": lambda: int(bool(a) and bool(b)),
            "|": lambda: int(bool(a) or bool(b)),
        }
        return ops[e.op]()
    return UNKNOWN


# ---------------------------------------------------------------------------
# Extraction


class _Extractor:
    """Walks one module body, splitting on measurements and probabilistic
    branches; the continuation is carried into every branch."""

    def __init__(self, module: str):
        self.module = module
        self.branch_counter = 0
        self.leaves = 1

    def extract(self, body: list[ast.Stmt]) -> list:
        state = _ExtState()
        work = [("stmt", s) for s in reversed(body)]
        return self._run(work, state)

    def _fresh_branch_id(self) -> int:
        bid = self.branch_counter
        self.branch_counter += 1
        return bid

    def _run(self, work: list, state: "_ExtState") -> list:
        out: list = []

        def drain():
            while state.emitted:
                out.append(state.emitted.pop(0))

        drain()
        while work:
            tag, payload = work.pop()
            if tag == "scope_exit":
                state.pop_scope()
                continue
            if tag == "call_return":
                state.return_from_call(payload)
                continue
            if tag == "while":
                node, remaining = payload
                cond = _const_eval(node.cond, state.env)
                if cond is UNKNOWN:
                    raise ExtractError(E_UNBOUNDED,
                                       "while condition depends on a "
                                       "probabilistic value", node.pos)
                if cond:
                    if remaining <= 0:
                        raise ExtractError(E_UNBOUNDED,
                                           f"loop did not settle within "
                                           f"{_LOOP_CAP} iterations", node.pos)
                    work.append(("while", (node, remaining - 1)))
                    work.append(("stmt", node.body))
                continue
            stmt = payload
            result = self._exec(stmt, work, state)
            drain()
            if result is not None:  # a branch sum terminates this level
                out.append(result)
                return out
        return out

    # Returns a BranchSum when control splits, else None.
    def _exec(self, s: ast.Stmt, work: list, state: "_ExtState"):
        if isinstance(s, ast.Allocate):
            sig = SIGNATURES[s.var_type]
            if sig.is_quantum:
                pattern = (1 << sig.width) - 1 if s.init.value == 1 else 0
                positions = state.alloc(s.name, sig.width)
                state.emitted.append(Create(targets=positions, pattern=pattern))
            else:
                state.set_var(s.name, _const_eval(s.init, state.env), declare=True)
            return None
        if isinstance(s, ast.Assign):
            state.set_var(s.name, _const_eval(s.expr, state.env))
            return None
        if isinstance(s, ast.AssignMeasure):
            positions = state.var_pos[s.source]
            return self._split_measure(positions, work, state,
                                       bind=(s.target,), stmt=s)
        if isinstance(s, ast.MeasureBranch):
            positions = state.var_pos[s.qvar]
            return self._split_measure(positions, work, state,
                                       then_else=(s.then_branch, s.else_branch),
                                       stmt=s)
        if isinstance(s, ast.If):
            cond = _const_eval(s.cond, state.env)
            if cond is not UNKNOWN:
                if cond:
                    work.append(("stmt", s.then_branch))
                elif s.else_branch is not None:
                    work.append(("stmt", s.else_branch))
                return None
            return self._split_if(s, work, state)
        if isinstance(s, ast.While):
            work.append(("while", (s, _LOOP_CAP)))
            return None
        if isinstance(s, ast.GateApply):
            matrix, name = self._gate_matrix(s.gate, state)
            targets = []
            for var in s.vars:
                targets.extend(state.var_pos[var])
            state.emitted.append(GateOp(name=name, matrix=matrix,
                                        targets=tuple(targets)))
            return None
        if isinstance(s, ast.Send):
            for var in s.vars:
                if var in state.var_pos:
                    positions = state.var_pos.pop(var)
                    state.emitted.append(SendPh(peer=s.dest, quantum=True,
                                                width=len(positions),
                                                targets=positions))
                else:
                    width = state.widths.get(var, 1)
                    state.emitted.append(SendPh(peer=s.dest, quantum=False,
                                                width=width, targets=()))
            return None
        if isinstance(s, ast.Receive):
            for name, var_type in s.bindings:
                sig = SIGNATURES[var_type]
                if sig.is_quantum:
                    positions = state.alloc(name, sig.width)
                    state.emitted.append(RecvPh(peer=s.source, quantum=True,
                                                width=sig.width,
                                                targets=positions))
                else:
                    state.set_var(name, UNKNOWN, declare=True)
                    state.widths[name] = sig.width
                    state.emitted.append(RecvPh(peer=s.source, quantum=False,
                                                width=sig.width, targets=()))
            return None
        if isinstance(s, ast.ProcDecl):
            state.declare_proc(s)
            work.append(("stmt", s.in_stmt))
            return None
        if isinstance(s, ast.ProcCall):
            self._inline_call(s, work, state)
            return None
        if isinstance(s, (ast.Print, ast.Dump, ast.Skip)):
            return None  # no quantum-operational content
        if isinstance(s, ast.Block):
            state.push_scope()
            work.append(("scope_exit", None))
            for stmt in reversed(s.stmts):
                work.append(("stmt", stmt))
            return None
        raise TypeError(f"unknown statement node {s!r}")

    def _gate_matrix(self, g: ast.Gate, state: "_ExtState"):
        if isinstance(g, ast.BuiltinGate):
            return builtin_gate(g.name), g.name
        if isinstance(g, ast.PhaseGate):
            shift = _const_eval(g.shift, state.env)
            if shift is UNKNOWN:
                raise ExtractError(E_UNBOUNDED,
                                   "Phase parameter depends on a "
                                   "probabilistic value", g.pos)
            return builtin_gate("Phase", (float(shift),)), f"Phase({shift})"
        if isinstance(g, ast.FTGate):
            return builtin_gate("FT", (g.n,)), f"FT({g.n})"
        if isinstance(g, ast.MatrixGate):
            side = math.isqrt(len(g.entries))
            return (np.array(g.entries, dtype=complex).reshape(side, side),
                    "matrix")
        raise TypeError(f"unknown gate node {g!r}")

    def _split_measure(self, positions, work, state, stmt,
                       bind: tuple[str, ...] = (), then_else=None):
        width = len(positions)
        count = 1 << width
        self.leaves *= count
        if self.leaves > _LEAF_CAP:
            raise ExtractError(E_TOO_LARGE,
                               f"more than {_LEAF_CAP} measurement branches",
                               stmt.pos)
        bid = self._fresh_branch_id()
        branches = []
        for value in range(count):
            sub_state = state.clone()
            sub_work = list(work)
            sub_state.emitted.append(Proj(value=value, targets=positions))
            for name in bind:
                sub_state.set_var(name, value)
            if then_else is not None:
                chosen = then_else[0] if value != 0 else then_else[1]
                sub_work.append(("stmt", chosen))
            branches.append((value, self._run(sub_work, sub_state)))
        return BranchSum(branch_id=bid, kind="measure",
                         targets=positions, branches=branches)

    def _split_if(self, s: ast.If, work, state):
        self.leaves *= 2
        if self.leaves > _LEAF_CAP:
            raise ExtractError(E_TOO_LARGE,
                               f"more than {_LEAF_CAP} branches", s.pos)
        bid = self._fresh_branch_id()
        branches = []
        for value, branch in ((1, s.then_branch), (0, s.else_branch)):
            sub_state = state.clone()
            sub_work = list(work)
            if branch is not None:
                sub_work.append(("stmt", branch))
            branches.append((value, self._run(sub_work, sub_state)))
        return BranchSum(branch_id=bid, kind="if", targets=(),
                         branches=branches)

    def _inline_call(self, s: ast.ProcCall, work, state: "_ExtState"):
        decl = state.lookup_proc(s.name)
        if state.call_depth >= _CALL_DEPTH_CAP:
            raise ExtractError(E_UNBOUNDED,
                               f"recursion deeper than {_CALL_DEPTH_CAP} "
                               "cannot be unrolled", s.pos)
        new_env: dict = {}
        new_pos: dict = {}
        classical_params = []
        for arg, (pname, ptype) in zip(s.args, decl.params):
            sig = SIGNATURES[ptype]
            if sig.is_quantum:
                new_pos[pname] = state.var_pos[arg.name]
            else:
                new_env[pname] = _const_eval(arg, state.env)
                classical_params.append(pname)
        saved = state.enter_call(new_env, new_pos, s, classical_params, decl)
        work.append(("call_return", saved))
        work.append(("stmt", ast.Block(stmts=decl.body.stmts, pos=decl.pos)))


class _ExtState:
    """Classical environment, quantum positions and scope bookkeeping."""

    def __init__(self):
        self.env: dict[str, object] = {}
        self.var_pos: dict[str, tuple[int, ...]] = {}
        self.widths: dict[str, int] = {}
        self.scopes: list[set[str]] = [set()]
        self.procs: list[dict[str, ast.ProcDecl]] = [{}]
        self.next_pos = 0
        self.call_depth = 0
        self.call_stack: list = []
        self.emitted: list = []

    def clone(self) -> "_ExtState":
        other = _ExtState.__new__(_ExtState)
        other.env = dict(self.env)
        other.var_pos = dict(self.var_pos)
        other.widths = dict(self.widths)
        other.scopes = [set(s) for s in self.scopes]
        other.procs = [dict(p) for p in self.procs]
        other.next_pos = self.next_pos
        other.call_depth = self.call_depth
        other.call_stack = list(self.call_stack)
        other.emitted = []
        return other

    def alloc(self, name: str, width: int) -> tuple[int, ...]:
        positions = tuple(range(self.next_pos, self.next_pos + width))
        self.next_pos += width
        self.var_pos[name] = positions
        self.widths[name] = width
        self.scopes[-1].add(name)
        return positions

    def set_var(self, name: str, value, declare: bool = False):
        if declare:
            self.scopes[-1].add(name)
        self.env[name] = value

    def push_scope(self):
        self.scopes.append(set())
        self.procs.append({})

    def pop_scope(self):
        for name in self.scopes.pop():
            self.env.pop(name, None)
            self.var_pos.pop(name, None)
        self.procs.pop()

    def declare_proc(self, decl: ast.ProcDecl):
        self.procs[-1][decl.name] = decl

    def lookup_proc(self, name: str) -> ast.ProcDecl:
        for scope in reversed(self.procs):
            if name in scope:
                return scope[name]
        raise KeyError(name)

    def enter_call(self, new_env, new_pos, call, classical_params, decl):
        saved = (self.env, self.var_pos, self.widths, self.scopes, self.procs,
                 call, classical_params)
        self.env = new_env
        self.var_pos = new_pos
        self.widths = dict(self.widths)
        self.scopes = [set(new_env) | set(new_pos)]
        self.procs = self.procs + [{decl.name: decl}]
        self.call_depth += 1
        return saved

    def return_from_call(self, saved):
        env, var_pos, widths, scopes, procs, call, classical_params = saved
        finals = [self.env.get(p) for p in classical_params]
        # copy on restore: the saved dicts may be shared with a sibling
        # measurement branch that carries the same call_return item
        self.env = dict(env)
        self.var_pos = dict(var_pos)
        self.widths = dict(widths)
        self.scopes = [set(s) for s in scopes]
        self.procs = [dict(p) for p in procs]
        self.call_depth -= 1
        if call.results is not None:
            for rname, value in zip(call.results, finals):
                self.env[rname] = value


def extract_semantics(checked: CheckedProgram | ast.Program) -> dict[str, list]:
    """Per-module symbolic Kraus trace of a type-checked program."""
    program = checked.program if isinstance(checked, CheckedProgram) else checked
    if program.is_module_form:
        items = [(m.name, m.body) for m in program.modules]
    else:
        items = [("main", program.stmts)]
    return {name: _Extractor(name).extract(body) for name, body in items}


# ---------------------------------------------------------------------------
# Trace rendering (the documented plain-text schema)


def render_trace(traces: dict[str, list]) -> str:
    lines: list[str] = []

    def walk(elements: list, depth: int):
        pad = "  " * depth
        for elem in elements:
            if isinstance(elem, BranchSum):
                lines.append(pad + elem.render() + ":")
                for value, sub in elem.branches:
                    lines.append(f"{pad}  p[#{elem.branch_id}={value}]:")
                    walk(sub, depth + 2)
            else:
                lines.append(pad + elem.render())

    for name, elements in traces.items():
        lines.append(f"module {name}:")
        walk(elements, 1)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Canonicalisation and comparison


def _canonical_ids(elements: list, counter=None) -> list:
    """Relabel branch ids in traversal order so equal programs align."""
    if counter is None:
        counter = [0]
    out = []
    for elem in elements:
        if isinstance(elem, BranchSum):
            bid = counter[0]
            counter[0] += 1
            branches = [(v, _canonical_ids(sub, counter))
                        for v, sub in elem.branches]
            out.append(BranchSum(branch_id=bid, kind=elem.kind,
                                 targets=elem.targets, branches=branches))
        else:
            out.append(elem)
    return out


def _elements_equal(a, b, tol: float) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Create):
        return a.targets == b.targets and a.pattern == b.pattern
    if isinstance(a, GateOp):
        return (a.targets == b.targets and a.matrix.shape == b.matrix.shape
                and np.max(np.abs(a.matrix - b.matrix)) <= tol)
    if isinstance(a, Proj):
        return a.targets == b.targets and a.value == b.value
    if isinstance(a, (SendPh, RecvPh)):
        return (a.peer == b.peer and a.quantum == b.quantum
                and a.width == b.width and a.targets == b.targets)
    if isinstance(a, BranchSum):
        if (a.branch_id != b.branch_id or a.kind != b.kind
                or a.targets != b.targets
                or len(a.branches) != len(b.branches)):
            return False
        for (va, suba), (vb, subb) in zip(a.branches, b.branches):
            if va != vb or not _traces_equal(suba, subb, tol):
                return False
        return True
    raise TypeError(f"unknown element {a!r}")


def _traces_equal(a: list, b: list, tol: float) -> bool:
    return len(a) == len(b) and all(
        _elements_equal(x, y, tol) for x, y in zip(a, b))


def _commutes(a, b) -> bool:
    """May two adjacent trace elements be swapped without changing meaning?"""
    if isinstance(a, BranchSum) or isinstance(b, BranchSum):
        return False
    # send/receive order on a channel is part of the meaning; placeholders
    # only move past plain operations on disjoint qbits
    if isinstance(a, (SendPh, RecvPh)) and isinstance(b, (SendPh, RecvPh)):
        return False
    ta, tb = set(targets_of(a)), set(targets_of(b))
    return not (ta & tb)


def _sort_key(elem):
    rank = {Create: 0, GateOp: 1, Proj: 2, SendPh: 3, RecvPh: 4, BranchSum: 5}
    extra: tuple = ()
    if isinstance(elem, GateOp):
        extra = (elem.name, np.round(elem.matrix, 9).tobytes().hex())
    elif isinstance(elem, Create):
        extra = (elem.pattern,)
    elif isinstance(elem, Proj):
        extra = (elem.value,)
    elif isinstance(elem, (SendPh, RecvPh)):
        extra = (elem.peer, elem.width)
    return (targets_of(elem), rank[type(elem)], extra)


def _normal_form(elements: list) -> list:
    """Least reordering reachable by swapping adjacent commuting elements.

    Greedy Foata-style normal form of the partially commutative word:
    repeatedly emit the smallest element that commutes with everything
    still in front of it.
    """
    remaining = []
    for elem in elements:
        if isinstance(elem, BranchSum):
            elem = BranchSum(branch_id=elem.branch_id, kind=elem.kind,
                             targets=elem.targets,
                             branches=[(v, _normal_form(sub))
                                       for v, sub in elem.branches])
        remaining.append(elem)
    out = []
    while remaining:
        best = None
        for idx, elem in enumerate(remaining):
            if all(_commutes(prev, elem) for prev in remaining[:idx]):
                if best is None or _sort_key(elem) < _sort_key(remaining[best]):
                    best = idx
        out.append(remaining.pop(best))
    return out


# ---------------------------------------------------------------------------
# Numeric resolution


def _embed(op: np.ndarray, slots: list[int], m: int) -> np.ndarray:
    """Extend an operator on `slots` (first slot = leftmost factor) to m qbits."""
    k = len(slots)
    rest = [i for i in range(m) if i not in slots]
    full = np.kron(op, np.eye(1 << (m - k), dtype=complex))
    order = list(slots) + rest
    perm = [order.index(i) for i in range(m)]
    t = full.reshape([2] * (2 * m))
    t = np.transpose(t, perm + [m + p for p in perm])
    return t.reshape(1 << m, 1 << m)


@dataclass
class ResolvedPath:
    assignments: dict[int, int]      # branch id -> chosen value
    weight: float                    # trace of the final (sub-normalised) state
    rho: np.ndarray                  # final state, sub-normalised
    slot_of: dict[int, int]          # global position -> tensor slot


def _resolve_elements(elements: list, rho: np.ndarray,
                      slot_of: dict[int, int], assignments: dict[int, int],
                      max_qbits: int) -> list[ResolvedPath]:
    for idx, elem in enumerate(elements):
        m = len(slot_of)
        if isinstance(elem, Create):
            if m + len(elem.targets) > max_qbits:
                raise ExtractError(E_TOO_LARGE,
                                   f"resolution needs more than {max_qbits} "
                                   "qbits")
            w = len(elem.targets)
            basis = np.zeros((1 << w, 1), dtype=complex)
            basis[elem.pattern] = 1.0
            rho = np.kron(rho, basis @ basis.conj().T)
            slot_of = dict(slot_of)
            for j, pos in enumerate(elem.targets):
                slot_of[pos] = m + j
        elif isinstance(elem, GateOp):
            u = _embed(elem.matrix, [slot_of[t] for t in elem.targets], m)
            rho = u @ rho @ u.conj().T
        elif isinstance(elem, Proj):
            w = len(elem.targets)
            p = np.zeros((1 << w, 1 << w), dtype=complex)
            p[elem.value, elem.value] = 1.0
            pe = _embed(p, [slot_of[t] for t in elem.targets], m)
            rho = pe @ rho @ pe.conj().T
        elif isinstance(elem, (SendPh, RecvPh)):
            raise ExtractError(E_UNBOUNDED,
                               "cannot resolve an unpaired communication "
                               "placeholder; merge module traces first")
        elif isinstance(elem, BranchSum):
            if elem.kind == "if":
                raise ExtractError(E_UNBOUNDED,
                                   "branch condition is not determined by "
                                   "measurements; cannot resolve numerically")
            leaves = []
            for value, sub in elem.branches:
                sub_assign = dict(assignments)
                sub_assign[elem.branch_id] = value
                leaves.extend(_resolve_elements(sub + elements[idx + 1:],
                                                rho.copy(), dict(slot_of),
                                                sub_assign, max_qbits))
            return leaves
        else:
            raise TypeError(f"unknown element {elem!r}")
    weight = float(np.real(np.trace(rho)))
    return [ResolvedPath(assignments=assignments, weight=weight, rho=rho,
                         slot_of=slot_of)]


def resolve_trace(elements: list, max_qbits: int = 12) -> list[ResolvedPath]:
    """Apply a placeholder-free trace to the empty initial state.

    Returns one entry per measurement branch path with its probability
    weight and final sub-normalised state.
    """
    rho0 = np.ones((1, 1), dtype=complex)
    return _resolve_elements(elements, rho0, {}, {}, max_qbits)


# ---------------------------------------------------------------------------
# Parallel merge of module traces


def merge_module_traces(traces: dict[str, list]) -> list:
    """Combine per-module traces into one global trace.

    Quantum send/receive pairs are matched in FIFO order per ordered module
    pair; the receiver's positions are identified with the sender's. The
    result uses global positions (module-local creations are renumbered).
    Communication inside measurement branches is supported as long as the
    matching operations pair up within the same branch structure.
    """
    order = list(traces.keys())
    offset: dict[str, int] = {}
    base = 0

    # global position space: each module's local positions are mapped
    # through a per-module dict as elements are consumed
    class Ctx:
        def __init__(self, name):
            self.name = name
            self.map: dict[int, int] = {}

    ctxs = {name: Ctx(name) for name in order}
    next_global = [0]
    channels: dict[tuple[str, str], list] = {}

    def map_targets(ctx: Ctx, targets, create: bool) -> tuple[int, ...]:
        out = []
        for t in targets:
            if create:
                ctx.map[t] = next_global[0]
                next_global[0] += 1
            out.append(ctx.map[t])
        return tuple(out)

    def rewrite(ctx: Ctx, elem):
        if isinstance(elem, Create):
            return Create(targets=map_targets(ctx, elem.targets, True),
                          pattern=elem.pattern)
        if isinstance(elem, GateOp):
            return GateOp(name=elem.name, matrix=elem.matrix,
                          targets=map_targets(ctx, elem.targets, False))
        if isinstance(elem, Proj):
            return Proj(value=elem.value,
                        targets=map_targets(ctx, elem.targets, False))
        raise TypeError(f"cannot rewrite {elem!r}")

    def run(queues: dict[str, list]) -> list:
        out = []
        while True:
            progressed = False
            for name in order:
                queue = queues[name]
                ctx = ctxs[name]
                while queue:
                    head = queue[0]
                    if isinstance(head, (Create, GateOp, Proj)):
                        out.append(rewrite(ctx, head))
                        queue.pop(0)
                        progressed = True
                        continue
                    if isinstance(head, SendPh):
                        key = (name, head.peer)
                        payload = (map_targets(ctx, head.targets, False)
                                   if head.quantum else None)
                        channels.setdefault(key, []).append(
                            (head.quantum, head.width, payload))
                        queue.pop(0)
                        progressed = True
                        continue
                    if isinstance(head, RecvPh):
                        key = (head.peer, name)
                        pending = channels.get(key, [])
                        if not pending:
                            break
                        quantum, width, payload = pending.pop(0)
                        if quantum != head.quantum or width != head.width:
                            raise ExtractError(
                                E_UNBOUNDED,
                                f"channel {key[0]}->{key[1]} payload type "
                                "mismatch during merge")
                        if head.quantum:
                            for local, glob in zip(head.targets, payload):
                                ctx.map[local] = glob
                        queue.pop(0)
                        progressed = True
                        continue
                    break  # BranchSum: handled below
            if not progressed:
                break
        for name in order:
            queue = queues[name]
            if queue and isinstance(queue[0], BranchSum):
                head = queue.pop(0)
                if queue:
                    raise ExtractError(E_UNBOUNDED,
                                       "branch sum must end its trace level")
                branches = []
                for value, sub in head.branches:
                    sub_queues = {n: list(q) for n, q in queues.items()}
                    sub_queues[name] = list(sub)
                    saved_channels = {k: list(v) for k, v in channels.items()}
                    saved_maps = {n: dict(ctxs[n].map) for n in order}
                    saved_next = next_global[0]
                    branches.append((value, run(sub_queues)))
                    for k in list(channels):
                        channels[k] = saved_channels.get(k, [])
                    for n in order:
                        ctxs[n].map = saved_maps[n]
                    next_global[0] = saved_next
                return out + [BranchSum(
                    branch_id=head.branch_id, kind=head.kind,
                    targets=tuple(ctxs[name].map[t] for t in head.targets),
                    branches=branches)]
        stuck = [name for name in order if queues[name]]
        if stuck:
            raise ExtractError(E_UNBOUNDED,
                               f"unmatched communication leaves modules "
                               f"{stuck} stuck during merge")
        return out

    merged = run({name: list(elems) for name, elems in traces.items()})
    return _canonical_ids(merged)


# ---------------------------------------------------------------------------
# Program equivalence


def _paths(elements: list, prefix: tuple = ()):
    """Yield (tag-sequence, flat element list) per fully resolved branch path."""
    for idx, elem in enumerate(elements):
        if isinstance(elem, BranchSum):
            head = list(elements[:idx])
            for value, sub in elem.branches:
                tag = prefix + ((elem.branch_id, value),)
                for tags, flat in _paths(sub + elements[idx + 1:], tag):
                    yield tags, head + flat
            return
    yield prefix, list(elements)


def _path_operator(flat: list, max_qbits: int) -> np.ndarray:
    """Single Kraus operator of a branch path (Create/Gate/Proj only)."""
    op = np.ones((1, 1), dtype=complex)
    slot_of: dict[int, int] = {}
    for elem in flat:
        m = len(slot_of)
        if isinstance(elem, Create):
            if m + len(elem.targets) > max_qbits:
                raise ExtractError(E_TOO_LARGE,
                                   f"more than {max_qbits} qbits in channel "
                                   "comparison")
            w = len(elem.targets)
            basis = np.zeros((1 << w, 1), dtype=complex)
            basis[elem.pattern] = 1.0
            op = np.kron(op, basis)  # new qbits enter at the least significant end
            for j, pos in enumerate(elem.targets):
                slot_of[pos] = m + j
        elif isinstance(elem, GateOp):
            op = _embed(elem.matrix, [slot_of[t] for t in elem.targets],
                        len(slot_of)) @ op
        elif isinstance(elem, Proj):
            w = len(elem.targets)
            p = np.zeros((1 << w, 1 << w), dtype=complex)
            p[elem.value, elem.value] = 1.0
            op = _embed(p, [slot_of[t] for t in elem.targets],
                        len(slot_of)) @ op
        elif isinstance(elem, (SendPh, RecvPh)):
            raise ExtractError(E_UNBOUNDED,
                               "channel-mode comparison across communication "
                               "placeholders is not supported")
    return op


def programs_equiv(p1, p2, mode: str = "exact", max_qbits: int = 6,
                   tol: float = 1e-9) -> bool:
    """Compare two programs' denotations.

    exact   - trace lists identical after canonical renaming
    reorder - identical up to swaps of operations on disjoint qbits
    channel - per branch path, equal completely positive maps (Choi test)
    """
    t1 = {n: _canonical_ids(e) for n, e in extract_semantics(p1).items()}
    t2 = {n: _canonical_ids(e) for n, e in extract_semantics(p2).items()}
    if set(t1) != set(t2):
        return False
    for name in t1:
        a, b = t1[name], t2[name]
        if mode == "exact":
            if not _traces_equal(a, b, tol):
                return False
        elif mode == "reorder":
            if not _traces_equal(_normal_form(a), _normal_form(b), tol):
                return False
        elif mode == "channel":
            paths_a = {tags: flat for tags, flat in _paths(a)}
            paths_b = {tags: flat for tags, flat in _paths(b)}
            if set(paths_a) != set(paths_b):
                return False
            for tags in paths_a:
                op_a = _path_operator(paths_a[tags], max_qbits)
                op_b = _path_operator(paths_b[tags], max_qbits)
                if op_a.shape != op_b.shape:
                    return False
                if np.max(np.abs(choi_matrix([op_a]) -
                                 choi_matrix([op_b]))) > tol:
                    return False
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return True
