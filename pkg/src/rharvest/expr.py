"""Small expression language for coefficient functions of ``t``.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | 't' | 'pi' | 'e' | FUNC '(' expr ')' | '(' expr ')'

Functions: sin cos exp ln sqrt abs.  ``-2^2`` is ``-(2^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    """Syntax error; ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, offset: int, expected: str, found: str = ""):
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(f"parse error at byte {offset}: expected {expected}")


class UnknownIdentifierError(ParseError):
    def __init__(self, offset: int, name: str):
        self.offset = offset
        self.name = name
        self.expected = "t, pi, e or one of " + ", ".join(FUNCTIONS)
        self.found = name
        ExprError.__init__(self, f"parse error at byte {offset}: unknown identifier {name!r}")


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain (log of non-positive, division by zero, overflow)."""

    def __init__(self, t: float, subexpr: str, reason: str):
        self.t = t
        self.subexpr = subexpr
        self.reason = reason
        super().__init__(f"domain error at t={t!r} in {subexpr}: {reason}")


# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "t"


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Call]


def format_expr(node: Node) -> str:
    """Render ``node`` as source text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Neg):
        return f"(-{format_expr(node.operand)})"
    if isinstance(node, BinOp):
        return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({format_expr(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# --- tokenizer / parser ------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str  # num, ident, op, end
    text: str
    offset: int  # byte offset


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(len(src[:pos].encode()), "number, identifier, operator or '('", src[pos])
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), len(src[:pos].encode())))
        pos = m.end()
    toks.append(_Tok("end", "", len(src.encode())))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, text: str) -> None:
        if self.tok.kind == "op" and self.tok.text == text:
            self.advance()
            return
        raise ParseError(self.tok.offset, repr(text), self.tok.text)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(self.tok.offset, "operator or end of input", self.tok.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError(tok.offset, "finite number literal", tok.text)
            return Num(value)
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name == "t":
                return Var()
            if name in CONSTANTS:
                return Const(name)
            if name in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(name, arg)
            raise UnknownIdentifierError(tok.offset, name)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(tok.offset, "number, identifier, '(' or '-'", tok.text)


# --- compilation to closures -------------------------------------------------

Evaluator = Callable[[float], float]


def _checked(value: float, t: float, node: Node) -> float:
    if not math.isfinite(value):
        raise DomainError(t, format_expr(node), "non-finite result")
    return value


def _compile(node: Node) -> Evaluator:
    if isinstance(node, Num):
        v = node.value
        return lambda t: v
    if isinstance(node, Var):
        return lambda t: t
    if isinstance(node, Const):
        v = CONSTANTS[node.name]
        return lambda t: v
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda t: -inner(t)
    if isinstance(node, Call):
        return _compile_call(node)
    if isinstance(node, BinOp):
        return _compile_binop(node)
    raise TypeError(f"not an expression node: {node!r}")


def _compile_call(node: Call) -> Evaluator:
    inner = _compile(node.arg)
    fn = FUNCTIONS[node.func]
    name = node.func

    if name == "ln":
        def ev(t):
            x = inner(t)
            if x <= 0.0:
                raise DomainError(t, format_expr(node), f"ln of non-positive value {x!r}")
            return math.log(x)
    elif name == "sqrt":
        def ev(t):
            x = inner(t)
            if x < 0.0:
                raise DomainError(t, format_expr(node), f"sqrt of negative value {x!r}")
            return math.sqrt(x)
    elif name == "exp":
        def ev(t):
            try:
                return math.exp(inner(t))
            except OverflowError:
                raise DomainError(t, format_expr(node), "overflow") from None
    else:
        def ev(t):
            return fn(inner(t))
    return ev


def _compile_binop(node: BinOp) -> Evaluator:
    left = _compile(node.left)
    right = _compile(node.right)
    op = node.op
    if op == "+":
        return lambda t: _checked(left(t) + right(t), t, node)
    if op == "-":
        return lambda t: _checked(left(t) - right(t), t, node)
    if op == "*":
        return lambda t: _checked(left(t) * right(t), t, node)
    if op == "/":
        def div(t):
            den = right(t)
            if den == 0.0:
                raise DomainError(t, format_expr(node), "division by zero")
            return _checked(left(t) / den, t, node)
        return div

    def pw(t):
        base, ex = left(t), right(t)
        if base == 0.0 and ex < 0.0:
            raise DomainError(t, format_expr(node), "zero to a negative power")
        if base < 0.0 and not float(ex).is_integer():
            raise DomainError(t, format_expr(node), "negative base to a fractional power")
        try:
            return _checked(math.pow(base, ex), t, node)
        except OverflowError:
            raise DomainError(t, format_expr(node), "overflow") from None
    return pw


# --- public API --------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientFn:
    """A parsed coefficient ``f(t)``. Immutable and safe to share across threads."""

    source: str
    ast: Node
    _fn: Evaluator = field(repr=False, compare=False)

    def __call__(self, t: float) -> float:
        return self._fn(float(t))

    def __str__(self) -> str:
        return self.source

    def values(self, ts) -> np.ndarray:
        fn = self._fn
        return np.array([fn(float(t)) for t in np.asarray(ts, dtype=float).ravel()])

    def is_constant(self) -> bool:
        return not _mentions_t(self.ast)


def _mentions_t(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Neg):
        return _mentions_t(node.operand)
    if isinstance(node, Call):
        return _mentions_t(node.arg)
    if isinstance(node, BinOp):
        return _mentions_t(node.left) or _mentions_t(node.right)
    return False


def parse(src: str) -> CoefficientFn:
    """Parse ``src`` into an evaluable coefficient function."""
    if isinstance(src, CoefficientFn):
        return src
    ast = _Parser(str(src)).parse()
    return CoefficientFn(str(src), ast, _compile(ast))


def from_ast(ast: Node) -> CoefficientFn:
    return CoefficientFn(format_expr(ast), ast, _compile(ast))


def constant(value: float) -> CoefficientFn:
    return parse(repr(float(value)))


def eval(f: CoefficientFn, t: float) -> float:  # noqa: A001 - mirrors the operation name
    return f(t)


@dataclass(frozen=True)
class CoefficientBounds:
    """Sampled (not certified) range of a coefficient over ``[t0, t1]``."""

    lower: float
    upper: float
    t0: float
    t1: float
    samples: int
    certified: bool = False


def bounds_estimate(f: Callable[[float], float], t0: float, t1: float, n: int = 1001) -> CoefficientBounds:
    """Min/max of ``f`` over ``n`` uniform samples of ``[t0, t1]`` plus their midpoints."""
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got [{t0}, {t1}]")
    if n < 2:
        raise ValueError("need at least 2 samples")
    ts = np.linspace(t0, t1, 2 * n - 1)
    lo, hi = math.inf, -math.inf
    for t in ts:
        v = f(float(t))
        lo = min(lo, v)
        hi = max(hi, v)
    return CoefficientBounds(lo, hi, t0, t1, len(ts))
