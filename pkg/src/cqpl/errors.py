"""Errors and diagnostics shared by all compiler passes and the runtime."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SourcePos:
    """1-based source position."""

    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class CqplError(Exception):
    """Base class for all cQPL front-end and runtime errors."""


class LexError(CqplError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"{line}:{column}: lex error: {message}")
        self.line = line
        self.column = column
        self.message = message


class ParseError(CqplError):
    def __init__(self, pos: SourcePos, expected: str, found: str):
        super().__init__(f"{pos}: parse error: expected {expected}, found {found}")
        self.pos = pos
        self.expected = expected
        self.found = found


# Diagnostic codes emitted by the static checker.
E_UNDECLARED = "E_UNDECLARED"
E_REDECLARED = "E_REDECLARED"
E_DUP_TUPLE = "E_DUP_TUPLE"
E_DIM_MISMATCH = "E_DIM_MISMATCH"
E_NOT_QUANTUM = "E_NOT_QUANTUM"
E_NOT_CLASSICAL = "E_NOT_CLASSICAL"
E_NOT_UNITARY = "E_NOT_UNITARY"
E_MEASURE_WIDTH = "E_MEASURE_WIDTH"
E_MEASURE_FLOAT = "E_MEASURE_FLOAT"
E_USE_AFTER_SEND = "E_USE_AFTER_SEND"
E_RECV_SHADOW = "E_RECV_SHADOW"
E_UNKNOWN_MODULE = "E_UNKNOWN_MODULE"
E_SELF_SEND = "E_SELF_SEND"
E_COND_NOT_BIT = "E_COND_NOT_BIT"
E_TYPE_MISMATCH = "E_TYPE_MISMATCH"
E_QUANTUM_INIT = "E_QUANTUM_INIT"
E_ARITY = "E_ARITY"
E_UNKNOWN_PROC = "E_UNKNOWN_PROC"
E_BAD_PARAM = "E_BAD_PARAM"
E_COMM_IN_PROC = "E_COMM_IN_PROC"
W_COMM_IMBALANCE = "W_COMM_IMBALANCE"

# Runtime failure codes.
E_DIV_ZERO = "E_DIV_ZERO"
E_HEAP_EXHAUSTED = "E_HEAP_EXHAUSTED"
E_SIM_CAP = "E_SIM_CAP"
E_RECV_TYPE = "E_RECV_TYPE"
E_RECURSION_LIMIT = "E_RECURSION_LIMIT"
E_DEADLOCK = "E_DEADLOCK"

# Semantics-extraction failure codes.
E_UNBOUNDED = "E_UNBOUNDED"
E_TOO_LARGE = "E_TOO_LARGE"


@dataclass
class Diagnostic:
    """One rejection or warning produced by semantic analysis.

    Rendered as ``file:line:col: error[CODE]: message`` so editors can jump
    to the offending position.
    """

    severity: str  # "error" | "warning"
    pos: SourcePos | None
    code: str
    message: str
    filename: str = "<input>"

    def render(self) -> str:
        where = f"{self.filename}:{self.pos}" if self.pos else self.filename
        return f"{where}: {self.severity}[{self.code}]: {self.message}"

    def __str__(self) -> str:
        return self.render()


class CheckFailure(CqplError):
    """Raised when static analysis rejects a program."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(d.render() for d in diagnostics))
        self.diagnostics = diagnostics


class RuntimeFailure(CqplError):
    """Raised when a program fails during execution (e.g. division by zero)."""

    def __init__(self, code: str, message: str, pos: SourcePos | None = None):
        where = f"{pos}: " if pos else ""
        super().__init__(f"{where}error[{code}]: {message}")
        self.code = code
        self.message = message
        self.pos = pos


class ExtractError(CqplError):
    """Raised when semantics extraction cannot produce a bounded trace."""

    def __init__(self, code: str, message: str, pos: SourcePos | None = None):
        where = f"{pos}: " if pos else ""
        super().__init__(f"{where}error[{code}]: {message}")
        self.code = code
        self.message = message
        self.pos = pos
