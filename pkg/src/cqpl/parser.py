"""Recursive-descent parser producing the cQPL abstract syntax tree.

The concrete grammar follows the language reference: a program is either a
plain statement list or a list of modules; every statement (including
blocks used as statements) is terminated by `;`. The first error aborts
parsing; no recovery is attempted.
"""
from __future__ import annotations

import math

from . import ast
from .errors import ParseError, SourcePos
from .lexer import (KIND_EOF, KIND_FLOAT, KIND_IDENT, KIND_IMAG, KIND_INT,
                    KIND_KEYWORD, KIND_OP, KIND_PUNCT, KIND_STRING, Token,
                    tokenize)

# `short`/`qshort` are accepted in type position (documented aliases) but are
# not reserved words, so they arrive as plain identifiers.
_TYPE_KEYWORDS = ("bit", "qbit", "int", "qint", "float")
_TYPE_ALIASES = ("short", "qshort")

_COMPARISONS = ("<", ">", "<=", ">=", "==", "!=", "=")


class Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    # -- token helpers ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != KIND_EOF:
            self.i += 1
        return tok

    def at(self, kind: str, lexeme: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (lexeme is None or tok.lexeme == lexeme)

    def at_keyword(self, word: str) -> bool:
        return self.at(KIND_KEYWORD, word)

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        found = tok.lexeme if tok.kind != KIND_EOF else "end of input"
        return ParseError(SourcePos(tok.line, tok.column), expected, repr(found))

    def expect(self, kind: str, lexeme: str | None = None) -> Token:
        if not self.at(kind, lexeme):
            raise self.error(lexeme if lexeme is not None else kind)
        return self.advance()

    def pos(self) -> SourcePos:
        tok = self.peek()
        return SourcePos(tok.line, tok.column)

    # -- program structure -------------------------------------------------

    def parse_program(self) -> ast.Program:
        if self.at_keyword("module"):
            modules = []
            while self.at_keyword("module"):
                modules.append(self.parse_module())
            self.expect(KIND_EOF)
            names = [m.name for m in modules]
            for name in names:
                if names.count(name) > 1:
                    raise ParseError(modules[names.index(name)].pos,
                                     "distinct module names",
                                     repr(name))
            return ast.Program(modules=modules)
        stmts = self.parse_stmt_list(KIND_EOF)
        self.expect(KIND_EOF)
        return ast.Program(stmts=stmts)

    def parse_module(self) -> ast.ModuleDef:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "module")
        name = self.expect(KIND_IDENT).lexeme
        self.expect(KIND_PUNCT, "{")
        body = self.parse_stmt_list("}")
        self.expect(KIND_PUNCT, "}")
        self.expect(KIND_PUNCT, ";")
        return ast.ModuleDef(name=name, body=body, pos=pos)

    def parse_stmt_list(self, stop) -> list[ast.Stmt]:
        stmts = []
        while not (self.at(KIND_EOF) or self.at(KIND_PUNCT, stop)):
            stmts.append(self.parse_statement())
            self.expect(KIND_PUNCT, ";")
        return stmts

    def parse_block(self) -> ast.Block:
        pos = self.pos()
        self.expect(KIND_PUNCT, "{")
        stmts = self.parse_stmt_list("}")
        self.expect(KIND_PUNCT, "}")
        return ast.Block(stmts=stmts, pos=pos)

    # -- statements ---------------------------------------------------------

    def parse_statement(self) -> ast.Stmt:
        tok = self.peek()
        if tok.kind == KIND_KEYWORD:
            handler = {
                "new": self.parse_allocate,
                "if": self.parse_if,
                "while": self.parse_while,
                "measure": self.parse_measure_branch,
                "skip": self.parse_skip,
                "print": self.parse_print,
                "dump": self.parse_dump,
                "send": self.parse_send,
                "receive": self.parse_receive,
                "proc": self.parse_proc_decl,
                "call": self.parse_proc_call,
            }.get(tok.lexeme)
            if handler is None:
                raise self.error("statement")
            return handler()
        if self.at(KIND_PUNCT, "{"):
            return self.parse_block()
        if self.at(KIND_PUNCT, "("):
            return self.parse_result_call()
        if tok.kind == KIND_IDENT:
            nxt = self.peek(1)
            if nxt.kind == KIND_OP and nxt.lexeme == ":=":
                return self.parse_assign()
            return self.parse_gate_stmt()
        raise self.error("statement")

    def parse_var_type(self) -> str:
        tok = self.peek()
        if tok.kind == KIND_KEYWORD and tok.lexeme in _TYPE_KEYWORDS:
            return self.advance().lexeme
        if tok.kind == KIND_IDENT and tok.lexeme in _TYPE_ALIASES:
            return self.advance().lexeme
        raise self.error("type name (bit, qbit, int, qint, float, short, qshort)")

    def parse_allocate(self) -> ast.Allocate:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "new")
        var_type = self.parse_var_type()
        name = self.expect(KIND_IDENT).lexeme
        self.expect(KIND_OP, ":=")
        init = self.parse_expr()
        return ast.Allocate(var_type=var_type, name=name, init=init, pos=pos)

    def parse_assign(self) -> ast.Stmt:
        pos = self.pos()
        name = self.expect(KIND_IDENT).lexeme
        self.expect(KIND_OP, ":=")
        if self.at_keyword("measure"):
            self.advance()
            source = self.expect(KIND_IDENT).lexeme
            return ast.AssignMeasure(target=name, source=source, pos=pos)
        return ast.Assign(name=name, expr=self.parse_expr(), pos=pos)

    def parse_if(self) -> ast.If:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "if")
        cond = self.parse_expr()
        self.expect(KIND_KEYWORD, "then")
        then_branch = self.parse_statement()
        else_branch = None
        if self.at_keyword("else"):
            self.advance()
            else_branch = self.parse_statement()
        return ast.If(cond=cond, then_branch=then_branch,
                      else_branch=else_branch, pos=pos)

    def parse_while(self) -> ast.While:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "while")
        cond = self.parse_expr()
        self.expect(KIND_KEYWORD, "do")
        body = self.parse_statement()
        return ast.While(cond=cond, body=body, pos=pos)

    def parse_measure_branch(self) -> ast.MeasureBranch:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "measure")
        qvar = self.expect(KIND_IDENT).lexeme
        self.expect(KIND_KEYWORD, "then")
        then_branch = self.parse_statement()
        self.expect(KIND_KEYWORD, "else")
        else_branch = self.parse_statement()
        return ast.MeasureBranch(qvar=qvar, then_branch=then_branch,
                                 else_branch=else_branch, pos=pos)

    def parse_skip(self) -> ast.Skip:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "skip")
        return ast.Skip(pos=pos)

    def parse_print(self) -> ast.Print:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "print")
        if self.at(KIND_STRING):
            return ast.Print(value=self.advance().lexeme, pos=pos)
        return ast.Print(value=self.parse_expr(), pos=pos)

    def parse_dump(self) -> ast.Dump:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "dump")
        return ast.Dump(vars=self.parse_var_list(), pos=pos)

    def parse_send(self) -> ast.Send:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "send")
        vars = self.parse_var_list()
        self.expect(KIND_KEYWORD, "to")
        dest = self.expect(KIND_IDENT).lexeme
        return ast.Send(vars=vars, dest=dest, pos=pos)

    def parse_receive(self) -> ast.Receive:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "receive")
        bindings = self.parse_context(nonempty=True)
        self.expect(KIND_KEYWORD, "from")
        source = self.expect(KIND_IDENT).lexeme
        return ast.Receive(bindings=bindings, source=source, pos=pos)

    def parse_context(self, nonempty: bool) -> list[tuple[str, str]]:
        items: list[tuple[str, str]] = []
        if not self.at(KIND_IDENT):
            if nonempty:
                raise self.error("name:type")
            return items
        while True:
            name = self.expect(KIND_IDENT).lexeme
            self.expect(KIND_PUNCT, ":")
            items.append((name, self.parse_var_type()))
            if self.at(KIND_PUNCT, ","):
                self.advance()
                continue
            return items

    def parse_proc_decl(self) -> ast.ProcDecl:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "proc")
        name = self.expect(KIND_IDENT).lexeme
        self.expect(KIND_PUNCT, ":")
        params = self.parse_context(nonempty=False)
        ret = None
        if self.at(KIND_OP, "->"):
            self.advance()
            ret = self.parse_context(nonempty=False)
        body = self.parse_block()
        self.expect(KIND_KEYWORD, "in")
        in_stmt = self.parse_statement()
        decl = ast.ProcDecl(name=name, params=params, body=body,
                            in_stmt=in_stmt, ret=ret, pos=pos)
        if ret is not None:
            classical = [(n, t) for n, t in params if not t.startswith("q")]
            if ret != classical:
                raise ParseError(pos, "return context equal to the classical "
                                 "subset of the parameter context",
                                 repr(ret))
        return decl

    def parse_proc_call(self) -> ast.ProcCall:
        pos = self.pos()
        self.expect(KIND_KEYWORD, "call")
        name = self.expect(KIND_IDENT).lexeme
        self.expect(KIND_PUNCT, "(")
        args: list[ast.Expr] = []
        if not self.at(KIND_PUNCT, ")"):
            while True:
                args.append(self.parse_expr())
                if self.at(KIND_PUNCT, ","):
                    self.advance()
                    continue
                break
        self.expect(KIND_PUNCT, ")")
        return ast.ProcCall(results=None, name=name, args=args, pos=pos)

    def parse_result_call(self) -> ast.ProcCall:
        pos = self.pos()
        self.expect(KIND_PUNCT, "(")
        results = self.parse_var_list()
        self.expect(KIND_PUNCT, ")")
        self.expect(KIND_OP, ":=")
        call = self.parse_proc_call()
        call.results = results
        call.pos = pos
        return call

    def parse_var_list(self) -> list[str]:
        names = [self.expect(KIND_IDENT).lexeme]
        while self.at(KIND_PUNCT, ","):
            self.advance()
            names.append(self.expect(KIND_IDENT).lexeme)
        return names

    def parse_gate_stmt(self) -> ast.GateApply:
        pos = self.pos()
        vars = self.parse_var_list()
        self.expect(KIND_OP, "*=")
        gate = self.parse_gate()
        return ast.GateApply(vars=vars, gate=gate, pos=pos)

    # -- gates ---------------------------------------------------------------

    def parse_gate(self) -> ast.Gate:
        pos = self.pos()
        if self.at_keyword("H") or self.at_keyword("CNot") or self.at_keyword("Not"):
            return ast.BuiltinGate(name=self.advance().lexeme, pos=pos)
        if self.at_keyword("Phase"):
            self.advance()
            return ast.PhaseGate(shift=self.parse_expr(), pos=pos)
        if self.at_keyword("FT"):
            self.advance()
            self.expect(KIND_PUNCT, "(")
            n = int(self.expect(KIND_INT).lexeme)
            self.expect(KIND_PUNCT, ")")
            return ast.FTGate(n=n, pos=pos)
        if self.at(KIND_PUNCT, "[["):
            return self.parse_matrix_literal()
        raise self.error("gate (H, CNot, Not, Phase, FT or [[ ... ]])")

    def parse_matrix_literal(self) -> ast.MatrixGate:
        pos = self.pos()
        self.expect(KIND_PUNCT, "[[")
        entries = [self.parse_complex_entry()]
        while self.at(KIND_PUNCT, ","):
            self.advance()
            entries.append(self.parse_complex_entry())
        self.expect(KIND_PUNCT, "]]")
        side = math.isqrt(len(entries))
        if side * side != len(entries) or side & (side - 1):
            raise ParseError(pos, "a square matrix with power-of-two side",
                             f"{len(entries)} entries")
        return ast.MatrixGate(entries=entries, pos=pos)

    def _signed_number(self) -> tuple[float, bool]:
        """Parse [sign] number; returns (value, is_imaginary)."""
        sign = 1.0
        if self.at(KIND_OP, "-"):
            self.advance()
            sign = -1.0
        elif self.at(KIND_OP, "+"):
            self.advance()
        tok = self.peek()
        if tok.kind == KIND_IMAG:
            self.advance()
            return sign * float(tok.lexeme[:-1]), True
        if tok.kind in (KIND_INT, KIND_FLOAT):
            self.advance()
            return sign * float(tok.lexeme), False
        raise self.error("number")

    def parse_complex_entry(self) -> complex:
        value, imag = self._signed_number()
        if imag:
            return complex(0.0, value)
        real = value
        # optional imaginary part joined by + or - (`a + bi`, `a - bi`)
        if (self.at(KIND_OP, "+") or self.at(KIND_OP, "-")) and \
                self._imag_follows():
            joiner = self.advance().lexeme
            part, imag = self._signed_number()
            if not imag:
                raise self.error("imaginary part")
            return complex(real, part if joiner == "+" else -part)
        return complex(real, 0.0)

    def _imag_follows(self) -> bool:
        ahead = self.peek(1)
        if ahead.kind == KIND_IMAG:
            return True
        if ahead.kind == KIND_OP and ahead.lexeme in ("+", "-"):
            return self.peek(2).kind == KIND_IMAG
        return False

    # -- expressions -----------------------------------------------------------
    # precedence: unary > * / > + - > comparisons > & > |

    def parse_expr(self) -> ast.Expr:
        return self.parse_or()

    def _binary(self, sub, ops) -> ast.Expr:
        left = sub()
        while self.at(KIND_OP) and self.peek().lexeme in ops:
            tok = self.advance()
            op = "==" if tok.lexeme == "=" else tok.lexeme
            right = sub()
            left = ast.BinOp(op=op, left=left, right=right,
                             pos=SourcePos(tok.line, tok.column))
        return left

    def parse_or(self) -> ast.Expr:
        return self._binary(self.parse_and, ("|",))

    def parse_and(self) -> ast.Expr:
        return self._binary(self.parse_comparison, ("&",))

    def parse_comparison(self) -> ast.Expr:
        # `=` is accepted as equality: the worked examples use it even though
        # the reference grammar spells it `==`
        return self._binary(self.parse_additive, _COMPARISONS)

    def parse_additive(self) -> ast.Expr:
        return self._binary(self.parse_multiplicative, ("+", "-"))

    def parse_multiplicative(self) -> ast.Expr:
        return self._binary(self.parse_unary, ("*", "/"))

    def parse_unary(self) -> ast.Expr:
        if self.at(KIND_OP, "-") or self.at(KIND_OP, "!"):
            tok = self.advance()
            return ast.UnOp(op=tok.lexeme, operand=self.parse_unary(),
                            pos=SourcePos(tok.line, tok.column))
        return self.parse_primary()

    def parse_primary(self) -> ast.Expr:
        tok = self.peek()
        pos = SourcePos(tok.line, tok.column)
        if tok.kind == KIND_INT:
            self.advance()
            return ast.IntLit(value=int(tok.lexeme), pos=pos)
        if tok.kind == KIND_FLOAT:
            self.advance()
            return ast.FloatLit(value=float(tok.lexeme), pos=pos)
        if tok.kind == KIND_KEYWORD and tok.lexeme in ("true", "false"):
            self.advance()
            return ast.BoolLit(value=tok.lexeme == "true", pos=pos)
        if tok.kind == KIND_IDENT:
            self.advance()
            return ast.Ident(name=tok.lexeme, pos=pos)
        if tok.kind == KIND_PUNCT and tok.lexeme == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect(KIND_PUNCT, ")")
            return inner
        raise self.error("expression")


def parse(source_or_tokens) -> ast.Program:
    """Parse source text (or a token list) into a Program."""
    if isinstance(source_or_tokens, str):
        tokens = tokenize(source_or_tokens)
    else:
        tokens = source_or_tokens
    return Parser(tokens).parse_program()
