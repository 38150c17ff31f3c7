"""Scalar fields over the plane, written as small arithmetic expressions.

Grammar (precedence from loosest to tightest)::

    expr   := expr ('+' | '-') expr
            | expr ('*' | '/') expr
            | '-' expr
            | expr '^' integer            (right associative)
            | number | 'x' | 'y' | name | func '(' expr ')' | '(' expr ')'
    func   := exp | log | sin | cos | sqrt | atan

``^`` binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.  Exponents
must fold to an integer constant; write general powers as ``exp(a*log(u))``.
Any other identifier is a named parameter, resolved from an environment at
evaluation time.  ``pi`` is predefined.

Fields evaluate on floats or numpy arrays (``f(x, y)``) and produce exact
derivative jets by forward-mode Taylor arithmetic (``f.jet(p, order)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import jets
from .jets import DomainError, Jet

__all__ = [
    "DomainError",
    "ParseError",
    "ScalarField",
    "UnresolvedParameterError",
    "as_field",
    "eval_jet",
    "parse",
]

CONSTANTS = {"pi": math.pi}


class ParseError(ValueError):
    """Malformed expression; ``offset`` is the byte offset of the culprit."""

    def __init__(self, message: str, text: str, index: int):
        self.text = text
        self.index = index
        self.offset = len(text[:index].encode("utf-8"))
        super().__init__(f"{message} (at byte offset {self.offset})")


class UnresolvedParameterError(KeyError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "x" or "y"


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


# ---------------------------------------------------------------------------
# tokenizer


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    index: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            literal = text[i:j]
            try:
                float(literal)
            except ValueError:
                raise ParseError(f"malformed number {literal!r}", text, i) from None
            tokens.append(Token("num", literal, i))
            i = j
        elif (ch.isascii() and ch.isalpha()) or ch == "_":
            j = i
            while j < n and ((text[j].isascii() and text[j].isalnum()) or text[j] == "_"):
                j += 1
            tokens.append(Token("name", text[i:j], i))
            i = j
        elif ch in "+-*/^(),":
            tokens.append(Token("op", ch, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {ch!r}", text, i)
    tokens.append(Token("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Pratt parser

_INFIX = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BP = 30


class _Parser:
    def __init__(self, text: str, parameters: set[str] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.parameters = parameters

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Token):
        raise ParseError(message, self.text, tok.index)

    def parse(self):
        if not self.text.strip():
            self.error("empty expression", self.peek())
        node = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            self.error(f"unexpected {tok.text!r}", tok)
        return node

    def expression(self, rbp: int, after: Token | None = None):
        node = self.nud(self.advance(), after)
        while True:
            tok = self.peek()
            lbp = _INFIX.get(tok.text, 0) if tok.kind == "op" else 0
            if lbp <= rbp:
                return node
            self.advance()
            node = self.led(tok, node)

    def nud(self, tok: Token, after: Token | None):
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            return self.name(tok)
        if tok.text == "-":
            return Neg(self.expression(_UNARY_BP, tok))
        if tok.text == "(":
            node = self.expression(0, tok)
            self.expect(")", tok)
            return node
        if after is not None:
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            self.error(f"operator {after.text!r} is missing an operand (found {found})", after)
        self.error(f"unexpected {tok.text or 'end of input'!r}", tok)

    def name(self, tok: Token):
        name = tok.text
        if self.peek().text == "(":
            if name not in jets.FUNCTIONS:
                self.error(f"unknown function {name!r}", tok)
            opener = self.advance()
            arg = self.expression(0, opener)
            self.expect(")", opener)
            return Call(name, arg)
        if name in jets.FUNCTIONS:
            self.error(f"function {name!r} needs an argument", tok)
        if name in ("x", "y"):
            return Var(name)
        if name in CONSTANTS:
            return Num(CONSTANTS[name])
        if self.parameters is not None and name not in self.parameters:
            self.error(f"unknown identifier {name!r}", tok)
        return Param(name)

    def led(self, tok: Token, left):
        if tok.text == "^":
            exponent = _fold_integer(self.expression(_INFIX["^"] - 1, tok))
            if exponent is None:
                self.error("exponent must be an integer constant", tok)
            return Pow(left, exponent)
        return BinOp(tok.text, left, self.expression(_INFIX[tok.text], tok))

    def expect(self, text: str, opener: Token):
        tok = self.advance()
        if tok.text != text:
            self.error(f"expected {text!r} to close {opener.text!r}", tok)


def _fold_integer(node) -> int | None:
    if isinstance(node, Num):
        return int(node.value) if float(node.value).is_integer() else None
    if isinstance(node, Neg):
        inner = _fold_integer(node.operand)
        return None if inner is None else -inner
    if isinstance(node, Pow):
        base = _fold_integer(node.base)
        if base is None or node.exponent < 0:
            return None
        return base**node.exponent
    return None


# ---------------------------------------------------------------------------
# evaluation


def _params(node, out: set[str]) -> set[str]:
    if isinstance(node, Param):
        out.add(node.name)
    elif isinstance(node, Neg):
        _params(node.operand, out)
    elif isinstance(node, BinOp):
        _params(node.left, out)
        _params(node.right, out)
    elif isinstance(node, Pow):
        _params(node.base, out)
    elif isinstance(node, Call):
        _params(node.arg, out)
    return out


_FLOAT_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "atan": np.arctan,
}


def _eval_float(node, x, y, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Param):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval_float(node.operand, x, y, env)
    if isinstance(node, BinOp):
        a = _eval_float(node.left, x, y, env)
        b = _eval_float(node.right, x, y, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    if isinstance(node, Pow):
        base = _eval_float(node.base, x, y, env)
        if node.exponent < 0:
            if np.any(np.asarray(base) == 0):
                raise DomainError("division by zero")
            return 1.0 / base ** (-node.exponent)
        return base**node.exponent
    if isinstance(node, Call):
        arg = _eval_float(node.arg, x, y, env)
        if node.func == "log" and np.any(np.asarray(arg) <= 0):
            raise DomainError("log of a non-positive number")
        if node.func == "sqrt" and np.any(np.asarray(arg) < 0):
            raise DomainError("sqrt of a negative number")
        return _FLOAT_FUNCS[node.func](arg)
    raise TypeError(f"unknown node {node!r}")


def _eval_jet(node, xj: Jet, yj: Jet, env):
    if isinstance(node, Num):
        return Jet.constant(np.broadcast_to(node.value, xj.batch_shape), xj.order)
    if isinstance(node, Var):
        return xj if node.name == "x" else yj
    if isinstance(node, Param):
        return Jet.constant(np.broadcast_to(env[node.name], xj.batch_shape), xj.order)
    if isinstance(node, Neg):
        return -_eval_jet(node.operand, xj, yj, env)
    if isinstance(node, BinOp):
        a = _eval_jet(node.left, xj, yj, env)
        b = _eval_jet(node.right, xj, yj, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        return jets.integer_power(_eval_jet(node.base, xj, yj, env), node.exponent)
    if isinstance(node, Call):
        return jets.FUNCTIONS[node.func](_eval_jet(node.arg, xj, yj, env))
    raise TypeError(f"unknown node {node!r}")


def _render(node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, (Var, Param)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_render(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_render(node.left)} {node.op} {_render(node.right)})"
    if isinstance(node, Pow):
        return f"({_render(node.base)})^({node.exponent})"
    return f"{node.func}({_render(node.arg)})"


class ScalarField:
    """Immutable parsed expression in ``x``, ``y`` and named parameters."""

    __slots__ = ("ast", "text", "env", "parameters")

    def __init__(self, ast, text: str | None = None, env: Mapping[str, float] | None = None):
        self.ast = ast
        self.text = text if text is not None else _render(ast)
        self.env = dict(env or {})
        self.parameters = frozenset(_params(ast, set()))

    def _env(self, env: Mapping[str, float] | None) -> dict:
        merged = dict(self.env)
        if env:
            merged.update(env)
        missing = sorted(self.parameters - merged.keys())
        if missing:
            raise UnresolvedParameterError(
                f"unresolved parameter(s) {', '.join(missing)} in {self.text!r}"
            )
        return merged

    def bind(self, **params: float) -> "ScalarField":
        return ScalarField(self.ast, self.text, {**self.env, **params})

    def __call__(self, x, y, env: Mapping[str, float] | None = None):
        env = self._env(env)
        value = _eval_float(self.ast, np.asarray(x, float), np.asarray(y, float), env)
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        value = np.broadcast_to(np.asarray(value, float), shape)
        return float(value) if value.ndim == 0 else value.copy()

    def jet(self, p, order: int, env: Mapping[str, float] | None = None) -> Jet:
        """All partials up to ``order`` at ``p`` (a point or an array of them)."""
        if not 0 <= order <= jets.MAX_ORDER:
            raise ValueError(f"order must lie in [0, {jets.MAX_ORDER}]")
        env = self._env(env)
        p = np.asarray(p, dtype=float)
        xj = Jet.variable(p[..., 0], 0, order)
        yj = Jet.variable(p[..., 1], 1, order)
        return _eval_jet(self.ast, xj, yj, env)

    # field algebra; builds new trees, no simplification

    def _combine(self, other, op: str, swap: bool = False) -> "ScalarField":
        other_field = as_field(other)
        left, right = (other_field, self) if swap else (self, other_field)
        return ScalarField(BinOp(op, left.ast, right.ast), env={**other_field.env, **self.env})

    def __add__(self, other):
        return self._combine(other, "+")

    def __radd__(self, other):
        return self._combine(other, "+", swap=True)

    def __sub__(self, other):
        return self._combine(other, "-")

    def __rsub__(self, other):
        return self._combine(other, "-", swap=True)

    def __mul__(self, other):
        return self._combine(other, "*")

    def __rmul__(self, other):
        return self._combine(other, "*", swap=True)

    def __truediv__(self, other):
        return self._combine(other, "/")

    def __neg__(self):
        return ScalarField(Neg(self.ast), env=self.env)

    def __repr__(self) -> str:
        return f"ScalarField({self.text!r})"


def parse(text: str, parameters=None, env: Mapping[str, float] | None = None) -> ScalarField:
    """Parse ``text`` into a :class:`ScalarField`.

    If ``parameters`` is given, identifiers outside it (and outside ``env``)
    are rejected at parse time instead of at evaluation time.
    """
    if not isinstance(text, str):
        raise TypeError("expression must be a string")
    allowed = None
    if parameters is not None:
        allowed = set(parameters) | set(env or {})
    ast = _Parser(text, allowed).parse()
    return ScalarField(ast, text, env)


def as_field(value) -> ScalarField:
    """Coerce a number, string or field to a :class:`ScalarField`."""
    if isinstance(value, ScalarField):
        return value
    if isinstance(value, str):
        return parse(value)
    return ScalarField(Num(float(value)))


def eval_jet(f: ScalarField, p, order: int, env: Mapping[str, float] | None = None) -> Jet:
    return as_field(f).jet(p, order, env)
