"""Declarative model language: lexer, parser, AST, unparser.

The surface syntax is a block of statements, optionally wrapped in
braces:

    x0 ~ dnorm(0, 1)
    for (t in 2:T) {
        x[t] ~ dnorm(.8 * x[t - 1], 1)
        y[t] ~ dnorm(x[t], 2)
    }
    s <- 2 * a - 1

``~`` declares a stochastic node, ``<-`` a deterministic one.  Loop
bounds may reference constants supplied later at compile time.
Operator precedence follows R: ``^`` is right-associative and binds
tighter than unary minus, so ``-2^2`` is ``-(2^2)``.

Newlines end statements except inside parentheses or brackets, or after
a token that cannot end a statement (an operator, comma, ``~`` or
``<-``), so long statements can wrap naturally.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .dists import REGISTRY, resolve_params
from .errors import ParseError, UnknownDistributionError

MATH_FUNCS = ("exp", "log", "sqrt", "abs")


# --- AST ----------------------------------------------------------------

def _pos_field():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: float
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Name:
    id: str
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Subscript:
    id: str
    index: object
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Bin:
    op: str
    lhs: object
    rhs: object
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class DistCall:
    dist: str
    args: tuple
    kwargs: tuple  # of (name, expr) pairs, declaration order
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Stochastic:
    target: object  # Name or Subscript
    dist: DistCall
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Assign:
    target: object
    expr: object
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Loop:
    var: str
    lo: object
    hi: object
    body: tuple
    pos: tuple = _pos_field()


@dataclass(frozen=True)
class Model:
    stmts: tuple
    pos: tuple = _pos_field()


# --- Lexer --------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z][A-Za-z0-9_.]*)
  | (?P<arrow><-)
  | (?P<op>[~+\-*/^:,=(){}\[\]])
    """,
    re.VERBOSE,
)

# Tokens after which a newline cannot end a statement.
_CONTINUATION = {"~", "<-", "+", "-", "*", "/", "^", ":", ",", "=", "(", "[", "in", "for"}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    depth = 0
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", line, col)
        kind = m.lastgroup
        raw = m.group()
        if kind == "ws" or kind == "comment":
            pass
        elif kind == "newline":
            prev = tokens[-1].text if tokens else None
            if depth == 0 and prev is not None and prev not in _CONTINUATION:
                if not tokens or tokens[-1].kind != "newline":
                    tokens.append(Token("newline", "\n", line, col))
        else:
            if raw in "([":
                depth += 1
            elif raw in ")]":
                depth = max(0, depth - 1)
            tokens.append(
                Token(raw if kind in ("op", "arrow") else kind, raw, line, col)
            )
        if kind == "newline":
            line += 1
            col = 1
        else:
            col += len(raw)
        i = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# --- Parser -------------------------------------------------------------

_PREC = {"+": 4, "-": 4, "*": 5, "/": 5, "^": 7}
_UNARY_PREC = 6


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(
                f"expected {kind!r}, found {tok.text or 'end of input'!r}",
                tok.line,
                tok.col,
            )
        return self.next()

    def skip_newlines(self) -> None:
        while self.peek().kind == "newline":
            self.next()

    def parse_model(self) -> Model:
        self.skip_newlines()
        first = self.peek()
        if first.kind == "{":
            self.next()
            stmts = self.statements(until="}")
            self.expect("}")
            self.skip_newlines()
        else:
            stmts = self.statements(until="eof")
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return Model(tuple(stmts), pos=(first.line, first.col))

    def statements(self, until: str) -> list:
        stmts = []
        self.skip_newlines()
        while self.peek().kind != until and self.peek().kind != "eof":
            stmts.append(self.statement())
            self.skip_newlines()
        return stmts

    def statement(self):
        tok = self.peek()
        if tok.kind == "name" and tok.text == "for":
            return self.for_loop()
        return self.declaration()

    def for_loop(self) -> Loop:
        start = self.next()
        self.expect("(")
        var = self.expect("name")
        kw = self.expect("name")
        if kw.text != "in":
            raise ParseError("expected 'in' after loop variable", kw.line, kw.col)
        lo = self.expr()
        self.expect(":")
        hi = self.expr()
        self.expect(")")
        self.skip_newlines()
        self.expect("{")
        body = self.statements(until="}")
        self.expect("}")
        return Loop(var.text, lo, hi, tuple(body), pos=(start.line, start.col))

    def declaration(self):
        target = self.target()
        tok = self.next()
        if tok.kind == "~":
            dist = self.dist_call()
            return Stochastic(target, dist, pos=target.pos)
        if tok.kind == "<-":
            return Assign(target, self.expr(), pos=target.pos)
        raise ParseError(
            f"expected '~' or '<-' after {target.id!r}", tok.line, tok.col
        )

    def target(self):
        tok = self.expect("name")
        if tok.text in ("for", "in"):
            raise ParseError(f"{tok.text!r} is a keyword", tok.line, tok.col)
        if self.peek().kind == "[":
            self.next()
            index = self.expr()
            self.expect("]")
            return Subscript(tok.text, index, pos=(tok.line, tok.col))
        return Name(tok.text, pos=(tok.line, tok.col))

    def dist_call(self) -> DistCall:
        tok = self.expect("name")
        if tok.text not in REGISTRY:
            raise UnknownDistributionError(
                f"unknown distribution {tok.text!r}", tok.line, tok.col
            )
        self.expect("(")
        args: list = []
        kwargs: list = []
        if self.peek().kind != ")":
            while True:
                if self.peek().kind == "name" and self.peek(1).kind == "=":
                    key = self.next()
                    self.next()
                    kwargs.append((key.text, self.expr()))
                else:
                    if kwargs:
                        tok2 = self.peek()
                        raise ParseError(
                            "positional argument after named argument",
                            tok2.line,
                            tok2.col,
                        )
                    args.append(self.expr())
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(")")
        try:
            resolve_params(tok.text, args, dict(kwargs))
        except ValueError as exc:
            raise ParseError(str(exc), tok.line, tok.col) from None
        return DistCall(tok.text, tuple(args), tuple(kwargs), pos=(tok.line, tok.col))

    def expr(self, min_prec: int = 0):
        lhs = self.unary()
        while True:
            tok = self.peek()
            prec = _PREC.get(tok.kind)
            if prec is None or prec < min_prec:
                return lhs
            self.next()
            # '^' is right-associative, the rest left-associative
            rhs = self.expr(prec if tok.kind == "^" else prec + 1)
            lhs = Bin(tok.kind, lhs, rhs, pos=(tok.line, tok.col))

    def unary(self):
        tok = self.peek()
        if tok.kind in ("-", "+"):
            self.next()
            operand = self.unary()
            if tok.kind == "+":
                return operand
            return Unary("-", operand, pos=(tok.line, tok.col))
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok.kind == "^":
            self.next()
            # exponent may carry a sign: 2^-1
            return Bin("^", base, self.unary(), pos=(tok.line, tok.col))
        return base

    def atom(self):
        tok = self.next()
        if tok.kind == "number":
            return Num(float(tok.text), pos=(tok.line, tok.col))
        if tok.kind == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "name":
            if tok.text in ("for", "in"):
                raise ParseError(f"{tok.text!r} is a keyword", tok.line, tok.col)
            if self.peek().kind == "(":
                if tok.text not in MATH_FUNCS:
                    raise ParseError(
                        f"unknown function {tok.text!r}", tok.line, tok.col
                    )
                self.next()
                args = [self.expr()]
                while self.peek().kind == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ParseError(
                        f"{tok.text} takes exactly one argument", tok.line, tok.col
                    )
                return Call(tok.text, tuple(args), pos=(tok.line, tok.col))
            if self.peek().kind == "[":
                self.next()
                index = self.expr()
                self.expect("]")
                return Subscript(tok.text, index, pos=(tok.line, tok.col))
            return Name(tok.text, pos=(tok.line, tok.col))
        raise ParseError(
            f"unexpected {tok.text or 'end of input'!r}", tok.line, tok.col
        )


def parse(text: str) -> Model:
    """Parse model source into an AST."""
    return _Parser(tokenize(text)).parse_model()


# --- Unparser -----------------------------------------------------------

def _prec_of(node) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _UNARY_PREC
    return 10


def unparse_expr(node) -> str:
    if isinstance(node, Num):
        value = node.value
        return str(int(value)) if float(value).is_integer() else repr(value)
    if isinstance(node, Name):
        return node.id
    if isinstance(node, Subscript):
        return f"{node.id}[{unparse_expr(node.index)}]"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(unparse_expr(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = unparse_expr(node.operand)
        if _prec_of(node.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Bin):
        my = _PREC[node.op]
        lhs = unparse_expr(node.lhs)
        rhs = unparse_expr(node.rhs)
        lp = _prec_of(node.lhs)
        rp = _prec_of(node.rhs)
        # parenthesize to preserve shape: left-assoc ops guard the right
        # side at equal precedence, '^' (right-assoc) guards the left
        if lp < my or (lp == my and node.op == "^"):
            lhs = f"({lhs})"
        if rp < my or (rp == my and node.op != "^"):
            rhs = f"({rhs})"
        return f"{lhs} {node.op} {rhs}" if node.op != "^" else f"{lhs}^{rhs}"
    raise TypeError(f"not an expression node: {node!r}")


def _unparse_stmt(node, indent: int, out: list) -> None:
    pad = "    " * indent
    if isinstance(node, Stochastic):
        d = node.dist
        parts = [unparse_expr(a) for a in d.args]
        parts += [f"{k} = {unparse_expr(v)}" for k, v in d.kwargs]
        out.append(f"{pad}{unparse_expr(node.target)} ~ {d.dist}({', '.join(parts)})")
    elif isinstance(node, Assign):
        out.append(f"{pad}{unparse_expr(node.target)} <- {unparse_expr(node.expr)}")
    elif isinstance(node, Loop):
        lo, hi = unparse_expr(node.lo), unparse_expr(node.hi)
        out.append(f"{pad}for ({node.var} in {lo}:{hi}) {{")
        for stmt in node.body:
            _unparse_stmt(stmt, indent + 1, out)
        out.append(f"{pad}}}")
    else:
        raise TypeError(f"not a statement node: {node!r}")


def unparse(model: Model) -> str:
    """Render an AST back to source that parses to an equal AST."""
    out: list = ["{"]
    for stmt in model.stmts:
        _unparse_stmt(stmt, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"
