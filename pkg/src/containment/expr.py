"""Scalar drift expressions: tokenizer, recursive-descent parser, renderer,
strict evaluator and a flat stack-machine compiler used by the kernels.

Grammar (lowest to highest precedence)::

    expr   := term  (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | VAR | FUNC '(' args ')' | '(' expr ')'

``FUNC`` is one of ``exp``, ``tanh``, ``abs``, ``sgn`` (one argument) or
``min``, ``max`` (two arguments).  ``sgn(0) == 0``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "ParseError", "UnknownIdentifierError", "ExprDomainError",
    "parse_expr", "render", "evaluate", "sgn",
    "Program", "compile_expr", "eval_program",
    "FUNCTIONS",
]

FUNCTIONS = {"exp": 1, "tanh": 1, "abs": 1, "sgn": 1, "min": 2, "max": 2}


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"literal must be finite and non-negative, got {self.value!r}")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


class ParseError(ValueError):
    """Syntax error at a byte offset of the source text."""

    def __init__(self, message, offset, expected=frozenset()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at byte {offset}"
        if self.expected:
            detail += f"; expected one of: {', '.join(sorted(self.expected))}"
        super().__init__(detail)


class UnknownIdentifierError(ParseError):
    pass


class ExprDomainError(ArithmeticError):
    """Evaluation left the real domain (0^negative, division by zero, overflow...)."""


def sgn(x):
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    if x == 0:
        return 0.0
    return math.nan


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'number', 'ident', 'op', 'end'
    text: str
    offset: int  # byte offset


def _tokenize(source):
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", byte_pos,
                             {"number", "identifier", "operator"})
        text = m.group()
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, text, byte_pos))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("end", "", byte_pos))
    return tokens


# ------------------------------------------------------------------ parser

_ATOM_START = frozenset({"number", "identifier", "(", "-"})


class _Parser:
    def __init__(self, source, variable):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variable = variable

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        return None

    def expect(self, text, expected=None):
        if self.accept(text) is None:
            self.fail(expected or {text})

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.offset, expected)

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while True:
            t = self.accept("+") or self.accept("-")
            if t is None:
                return node
            node = BinOp(t.text, node, self.term())

    def term(self):
        node = self.unary()
        while True:
            t = self.accept("*") or self.accept("/")
            if t is None:
                return node
            node = BinOp(t.text, node, self.unary())

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Num(float(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text == self.variable:
                return Var(t.text)
            if t.text in FUNCTIONS:
                return self.call(t)
            raise UnknownIdentifierError(
                f"unknown identifier {t.text!r}", t.offset,
                {self.variable, *FUNCTIONS})
        if self.accept("("):
            node = self.expr()
            self.expect(")", {")", "+", "-", "*", "/", "^"})
            return node
        self.fail(_ATOM_START)

    def call(self, name_tok):
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")", {")", ","})
        arity = FUNCTIONS[name_tok.text]
        if len(args) != arity:
            raise ParseError(
                f"{name_tok.text}() takes {arity} argument(s), got {len(args)}",
                name_tok.offset)
        return Call(name_tok.text, tuple(args))


def parse_expr(source: str, variable: str = "x") -> Expr:
    """Parse ``source`` into an AST over the single free ``variable``."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0, _ATOM_START)
    return _Parser(source, variable).parse()


# ---------------------------------------------------------------- renderer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def _wrap(node, min_prec):
    s = render(node)
    return f"({s})" if _prec(node) < min_prec else s


def render(node: Expr) -> str:
    """Source text for ``node`` with only the parentheses the grammar needs."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, 3)
    if isinstance(node, Call):
        return f"{node.name}({', '.join(render(a) for a in node.args)})"
    if node.op == "^":
        return f"{_wrap(node.left, 5)}^{_wrap(node.right, 3)}"
    p = _PREC[node.op]
    right_min = p + 1 if p == 1 else 3
    return f"{_wrap(node.left, p)} {node.op} {_wrap(node.right, right_min)}"


# --------------------------------------------------------- strict evaluator

def _checked(v):
    if not math.isfinite(v):
        raise ExprDomainError(f"non-finite intermediate value {v!r}")
    return v


def evaluate(node: Expr, value: float) -> float:
    """Evaluate at ``value``; raises :class:`ExprDomainError` instead of returning nan/inf."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return _checked(float(value))
    if isinstance(node, Neg):
        return -evaluate(node.operand, value)
    if isinstance(node, Call):
        args = [evaluate(a, value) for a in node.args]
        name = node.name
        if name == "exp":
            try:
                return _checked(math.exp(args[0]))
            except OverflowError as exc:
                raise ExprDomainError("exp overflow") from exc
        if name == "tanh":
            return math.tanh(args[0])
        if name == "abs":
            return abs(args[0])
        if name == "sgn":
            return sgn(args[0])
        if name == "min":
            return min(args)
        return max(args)
    a = evaluate(node.left, value)
    b = evaluate(node.right, value)
    op = node.op
    if op == "+":
        return _checked(a + b)
    if op == "-":
        return _checked(a - b)
    if op == "*":
        return _checked(a * b)
    if op == "/":
        if b == 0:
            raise ExprDomainError("division by zero")
        return _checked(a / b)
    try:
        return _checked(math.pow(a, b))
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise ExprDomainError(f"{a!r}^{b!r} is undefined") from exc


# -------------------------------------------------------- stack compilation

# Opcodes shared with the compiled and fallback kernels.
OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_EXP, OP_TANH, OP_ABS, OP_SGN, OP_MIN, OP_MAX = range(8, 14)

_BIN_CODES = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_CALL_CODES = {"exp": OP_EXP, "tanh": OP_TANH, "abs": OP_ABS, "sgn": OP_SGN,
               "min": OP_MIN, "max": OP_MAX}
MAX_STACK = 64


@dataclass(frozen=True, eq=False)
class Program:
    """Postfix program: ``code`` is an (n, 2) int32 array of (opcode, const index)."""

    code: np.ndarray
    consts: np.ndarray
    depth: int


def compile_expr(node: Expr) -> Program:
    code, consts = [], []
    depth = 0
    max_depth = 0

    def push(delta):
        nonlocal depth, max_depth
        depth += delta
        max_depth = max(max_depth, depth)

    def emit(n):
        if isinstance(n, Num):
            code.append((OP_CONST, len(consts)))
            consts.append(n.value)
            push(1)
        elif isinstance(n, Var):
            code.append((OP_VAR, 0))
            push(1)
        elif isinstance(n, Neg):
            emit(n.operand)
            code.append((OP_NEG, 0))
        elif isinstance(n, Call):
            for a in n.args:
                emit(a)
            code.append((_CALL_CODES[n.name], 0))
            push(1 - len(n.args))
        else:
            emit(n.left)
            emit(n.right)
            code.append((_BIN_CODES[n.op], 0))
            push(-1)

    emit(node)
    if max_depth > MAX_STACK:
        raise ValueError(f"expression too deeply nested (stack depth {max_depth} > {MAX_STACK})")
    return Program(np.asarray(code, dtype=np.int32).reshape(-1, 2),
                   np.asarray(consts, dtype=np.float64), max_depth)


def eval_program(prog: Program, values) -> np.ndarray:
    """Vectorised evaluation; entries whose evaluation left the domain become nan.

    Any non-finite intermediate poisons the result, so ``min(nan, 1)`` stays nan.
    """
    v = np.asarray(values, dtype=np.float64)
    bad = ~np.isfinite(v)
    stack = []
    with np.errstate(all="ignore"):
        for op, arg in prog.code:
            if op == OP_CONST:
                stack.append(np.full(v.shape, prog.consts[arg]))
                continue
            if op == OP_VAR:
                stack.append(v)
                continue
            if op >= OP_MIN or OP_ADD <= op <= OP_POW:
                b = stack.pop()
                a = stack.pop()
                if op == OP_ADD:
                    r = a + b
                elif op == OP_SUB:
                    r = a - b
                elif op == OP_MUL:
                    r = a * b
                elif op == OP_DIV:
                    r = a / b
                elif op == OP_POW:
                    r = np.power(a, b)
                elif op == OP_MIN:
                    r = np.minimum(a, b)
                else:
                    r = np.maximum(a, b)
            else:
                a = stack.pop()
                if op == OP_NEG:
                    r = -a
                elif op == OP_EXP:
                    r = np.exp(a)
                elif op == OP_TANH:
                    r = np.tanh(a)
                elif op == OP_ABS:
                    r = np.abs(a)
                else:
                    r = np.sign(a)
            bad |= ~np.isfinite(r)
            stack.append(r)
    out = stack.pop()
    return np.where(bad, np.nan, out)
