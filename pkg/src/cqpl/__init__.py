"""cQPL: a compiler, interpreter and simulator for a communication-capable
quantum programming language, plus a Kraus-operator semantics engine.
"""
from .errors import (CheckFailure, CqplError, Diagnostic, ExtractError,
                     LexError, ParseError, RuntimeFailure)
from .lexer import Token, tokenize
from .parser import parse
from .typecheck import (CheckedProgram, TypeSignature, check_program,
                        comm_balance_check, type_equiv)

__version__ = "0.1.0"


def compile_source(source: str, filename: str = "<input>") -> CheckedProgram:
    """Parse and type-check source text; raises on lex/parse errors."""
    program = parse(source)
    return check_program(program, filename=filename)
