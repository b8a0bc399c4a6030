"""Tokenizer for cQPL source text."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import LexError

KEYWORDS = frozenset({
    "new", "qbit", "bit", "int", "float", "qint", "if", "then", "else",
    "while", "do", "measure", "proc", "call", "in", "module", "send", "to",
    "receive", "from", "print", "dump", "skip", "true", "false",
    "H", "CNot", "Not", "Phase", "FT",
})

# Multi-character operators/punctuation, longest first.
_MULTI = ("[[", "]]", "*=", ":=", "->", "==", "!=", "<=", ">=")
_SINGLE_OPS = set("=<>+-*/&|!")
_SINGLE_PUNCT = set(";,:(){}")

KIND_KEYWORD = "keyword"
KIND_IDENT = "identifier"
KIND_INT = "int-literal"
KIND_FLOAT = "float-literal"
KIND_IMAG = "imaginary-literal"
KIND_STRING = "string-literal"
KIND_OP = "operator"
KIND_PUNCT = "punctuation"
KIND_EOF = "eof"


@dataclass(frozen=True)
class Token:
    kind: str
    lexeme: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.kind} {self.lexeme!r} at {self.line}:{self.column}"


def tokenize(source: str) -> list[Token]:
    """Turn source text into a token stream; comments are skipped.

    Both ``/* ... */`` block comments and ``//`` line comments are
    recognised. Raises LexError on characters outside the grammar's
    alphabet, digit-led identifiers and unterminated strings/comments.
    """
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)

    def error(msg: str, l: int | None = None, c: int | None = None):
        raise LexError(l if l is not None else line,
                       c if c is not None else col, msg)

    def advance(k: int = 1):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance()
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance()
            continue
        if source.startswith("/*", i):
            start_line, start_col = line, col
            advance(2)
            while i < n and not source.startswith("*/", i):
                advance()
            if i >= n:
                error("unterminated comment", start_line, start_col)
            advance(2)
            continue
        if ch == '"':
            start_line, start_col = line, col
            advance()
            begin = i
            while i < n and source[i] not in '"\n':
                advance()
            if i >= n or source[i] == "\n":
                error("unterminated string literal", start_line, start_col)
            text = source[begin:i]
            advance()
            tokens.append(Token(KIND_STRING, text, start_line, start_col))
            continue
        if ch.isdigit():
            start_line, start_col = line, col
            begin = i
            while i < n and source[i].isdigit():
                advance()
            is_float = False
            if i < n and source[i] == "." and i + 1 < n and source[i + 1].isdigit():
                is_float = True
                advance()
                while i < n and source[i].isdigit():
                    advance()
            if i < n and source[i] in "eE" and (
                    (i + 1 < n and source[i + 1].isdigit())
                    or (i + 2 < n and source[i + 1] in "+-" and source[i + 2].isdigit())):
                is_float = True
                advance()
                if source[i] in "+-":
                    advance()
                while i < n and source[i].isdigit():
                    advance()
            if i < n and source[i] == "i":
                # imaginary literal: number immediately followed by `i`,
                # provided no identifier continues (2if is `2` `if`? no:
                # digits may not start identifiers, so reject that too)
                nxt = source[i + 1] if i + 1 < n else ""
                if not (nxt.isalnum() or nxt == "_"):
                    advance()
                    tokens.append(Token(KIND_IMAG, source[begin:i], start_line, start_col))
                    continue
            if i < n and (source[i].isalpha() or source[i] == "_"):
                error("identifier must not begin with a digit", start_line, start_col)
            kind = KIND_FLOAT if is_float else KIND_INT
            tokens.append(Token(kind, source[begin:i], start_line, start_col))
            continue
        if ch.isalpha() or ch == "_":
            start_line, start_col = line, col
            begin = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                advance()
            text = source[begin:i]
            kind = KIND_KEYWORD if text in KEYWORDS else KIND_IDENT
            tokens.append(Token(kind, text, start_line, start_col))
            continue
        matched = False
        for op in _MULTI:
            if source.startswith(op, i):
                kind = KIND_PUNCT if op in ("[[", "]]") else KIND_OP
                tokens.append(Token(kind, op, line, col))
                advance(len(op))
                matched = True
                break
        if matched:
            continue
        if ch in _SINGLE_OPS:
            tokens.append(Token(KIND_OP, ch, line, col))
            advance()
            continue
        if ch in _SINGLE_PUNCT:
            tokens.append(Token(KIND_PUNCT, ch, line, col))
            advance()
            continue
        error(f"unexpected character {ch!r}")

    tokens.append(Token(KIND_EOF, "", line, col))
    return tokens
