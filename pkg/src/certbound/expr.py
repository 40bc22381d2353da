"""Expression trees for objective functions.

Nodes: exact-rational constants, variables, the four binary operations,
integer powers, sqrt/abs/min/max, and the unary transcendental functions
sin, cos, arctan, exp, log.  Constants parse to exact rationals so the
certificate pipeline never inherits parse-time rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .interval import Box, DomainError, Interval

__all__ = [
    "Expr", "Const", "Var", "Binary", "Pow", "Sqrt", "Abs", "MinMax", "Func",
    "ParseError", "NonSmoothError", "parse_problem", "parse_expr", "Problem",
    "evaluate", "differentiate", "gradient", "hessian_entry",
    "interval_eval", "second_derivative_range", "is_polynomial",
    "is_semialgebraic", "has_transcendental", "count_nodes", "to_text",
]

TRANSCENDENTAL = ("sin", "cos", "atan", "exp", "log")

_FUNC_EVAL: dict[str, Callable[[float], float]] = {
    "sin": math.sin, "cos": math.cos, "atan": math.atan,
    "exp": math.exp, "log": math.log,
}

_FUNC_DERIV1: dict[str, Callable[[float], float]] = {
    "sin": math.cos,
    "cos": lambda u: -math.sin(u),
    "atan": lambda u: 1.0 / (1.0 + u * u),
    "exp": math.exp,
    "log": lambda u: 1.0 / u,
}


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}" if line else message)
        self.line = line
        self.col = col


class NonSmoothError(ValueError):
    """Raised when differentiating through abs/min/max."""


class Expr:
    """Base class; all nodes are immutable and hashable."""
    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("negative exponents are written as divisions")


@dataclass(frozen=True)
class Sqrt(Expr):
    child: Expr


@dataclass(frozen=True)
class Abs(Expr):
    child: Expr


@dataclass(frozen=True)
class MinMax(Expr):
    kind: str  # "min" | "max"
    children: tuple[Expr, Expr]


@dataclass(frozen=True)
class Func(Expr):
    name: str  # sin cos atan exp log
    child: Expr

    def __post_init__(self):
        if self.name not in TRANSCENDENTAL:
            raise ValueError(f"unknown function {self.name!r}")


# ---------------------------------------------------------------------------
# smart constructors (constant folding and 0/1 identities only)

ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def const(v) -> Const:
    return Const(Fraction(v))


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0:
        return b
    if isinstance(b, Const) and b.value == 0:
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0:
        return a
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0:
            return ZERO
        if a.value == 1:
            return b
    if isinstance(b, Const):
        if b.value == 0:
            return ZERO
        if b.value == 1:
            return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0:
            raise ZeroDivisionError("division by constant zero")
        if b.value == 1:
            return a
        if isinstance(a, Const):
            return Const(a.value / b.value)
    if isinstance(a, Const) and a.value == 0:
        return ZERO
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    return Binary("-", ZERO, a)


def pow_(a: Expr, e: int) -> Expr:
    if e == 0:
        return ONE
    if e == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value ** e)
    return Pow(a, e)


# ---------------------------------------------------------------------------
# evaluation

def evaluate(t: Expr, x: Sequence[float]) -> float:
    """Recursive evaluation at a point.  Raises DomainError outside the
    domain of log / sqrt / division."""
    if isinstance(t, Const):
        return float(t.value)
    if isinstance(t, Var):
        return float(x[t.index])
    if isinstance(t, Binary):
        a = evaluate(t.left, x)
        b = evaluate(t.right, x)
        if t.op == "+":
            return a + b
        if t.op == "-":
            return a - b
        if t.op == "*":
            return a * b
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if isinstance(t, Pow):
        return evaluate(t.base, x) ** t.exponent
    if isinstance(t, Sqrt):
        v = evaluate(t.child, x)
        if v < 0.0:
            raise DomainError("sqrt of a negative value")
        return math.sqrt(v)
    if isinstance(t, Abs):
        return abs(evaluate(t.child, x))
    if isinstance(t, MinMax):
        vals = [evaluate(c, x) for c in t.children]
        return min(vals) if t.kind == "min" else max(vals)
    if isinstance(t, Func):
        v = evaluate(t.child, x)
        if t.name == "log" and v <= 0.0:
            raise DomainError("log of a nonpositive value")
        return _FUNC_EVAL[t.name](v)
    raise TypeError(f"unknown node {t!r}")


# ---------------------------------------------------------------------------
# symbolic differentiation

def differentiate(t: Expr, i: int) -> Expr:
    """Exact symbolic derivative with respect to variable i."""
    if isinstance(t, (Const,)):
        return ZERO
    if isinstance(t, Var):
        return ONE if t.index == i else ZERO
    if isinstance(t, Binary):
        da = differentiate(t.left, i)
        db = differentiate(t.right, i)
        if t.op == "+":
            return add(da, db)
        if t.op == "-":
            return sub(da, db)
        if t.op == "*":
            return add(mul(da, t.right), mul(t.left, db))
        # quotient rule
        num = sub(mul(da, t.right), mul(t.left, db))
        return div(num, pow_(t.right, 2))
    if isinstance(t, Pow):
        db = differentiate(t.base, i)
        return mul(mul(const(t.exponent), pow_(t.base, t.exponent - 1)), db)
    if isinstance(t, Sqrt):
        dc = differentiate(t.child, i)
        return div(dc, mul(const(2), Sqrt(t.child)))
    if isinstance(t, (Abs, MinMax)):
        raise NonSmoothError(f"cannot differentiate through {type(t).__name__}")
    if isinstance(t, Func):
        dc = differentiate(t.child, i)
        u = t.child
        if t.name == "sin":
            outer: Expr = Func("cos", u)
        elif t.name == "cos":
            outer = neg(Func("sin", u))
        elif t.name == "atan":
            outer = div(ONE, add(ONE, pow_(u, 2)))
        elif t.name == "exp":
            outer = Func("exp", u)
        else:  # log
            outer = div(ONE, u)
        return mul(outer, dc)
    raise TypeError(f"unknown node {t!r}")


def gradient(t: Expr, n: int) -> list[Expr]:
    return [differentiate(t, i) for i in range(n)]


def hessian_entry(t: Expr, i: int, j: int) -> Expr:
    return differentiate(differentiate(t, i), j)


# ---------------------------------------------------------------------------
# interval evaluation

def interval_eval(t: Expr, box: Box) -> Interval:
    """Outward-rounded enclosure of the range of t over the box."""
    if isinstance(t, Const):
        v = float(t.value)
        return Interval(min(v, _fdown(t.value)), max(v, _fup(t.value)))
    if isinstance(t, Var):
        return box[t.index]
    if isinstance(t, Binary):
        a = interval_eval(t.left, box)
        b = interval_eval(t.right, box)
        if t.op == "+":
            return a + b
        if t.op == "-":
            return a - b
        if t.op == "*":
            return a * b
        return a / b
    if isinstance(t, Pow):
        return interval_eval(t.base, box).pow_int(t.exponent)
    if isinstance(t, Sqrt):
        return interval_eval(t.child, box).sqrt()
    if isinstance(t, Abs):
        return interval_eval(t.child, box).abs()
    if isinstance(t, MinMax):
        a = interval_eval(t.children[0], box)
        b = interval_eval(t.children[1], box)
        return a.min_(b) if t.kind == "min" else a.max_(b)
    if isinstance(t, Func):
        u = interval_eval(t.child, box)
        return getattr(u, {"atan": "atan"}.get(t.name, t.name))()
    raise TypeError(f"unknown node {t!r}")


def _fdown(q: Fraction) -> float:
    f = float(q)
    return f if Fraction(f) <= q else math.nextafter(f, -math.inf)


def _fup(q: Fraction) -> float:
    f = float(q)
    return f if Fraction(f) >= q else math.nextafter(f, math.inf)


def second_derivative_range(name: str, iv: Interval) -> Interval:
    """Enclosure of the range of the second derivative of a transcendental
    function over the interval, from its closed form."""
    if name == "sin":
        return -iv.sin()
    if name == "cos":
        return -iv.cos()
    if name == "exp":
        return iv.exp()
    if name == "log":
        if iv.lo <= 0.0:
            raise DomainError("log'' needs a positive interval")
        sq = iv.pow_int(2)
        return Interval(-math.nextafter(1.0 / sq.lo, math.inf),
                        -math.nextafter(1.0 / sq.hi, -math.inf))
    if name == "atan":
        # g(u) = -2u / (1+u^2)^2; monotone pieces split at u = +-1/sqrt(3)
        crit = 1.0 / math.sqrt(3.0)
        cands = [iv.lo, iv.hi]
        for c in (-crit, crit):
            if iv.lo < c < iv.hi:
                cands.append(c)
        vals = [-2.0 * u / (1.0 + u * u) ** 2 for u in cands]
        pad = 4.0 * max(1e-14, 1e-14 * max(abs(v) for v in vals))
        return Interval(min(vals) - pad, max(vals) + pad)
    raise ValueError(f"unknown function {name!r}")


def transcendental_value_range(name: str, iv: Interval) -> Interval:
    """Enclosure of the range of the function itself over the interval."""
    return getattr(iv, name)()


# ---------------------------------------------------------------------------
# classification helpers

def is_polynomial(t: Expr) -> bool:
    if isinstance(t, (Const, Var)):
        return True
    if isinstance(t, Binary):
        if t.op == "/":
            return is_polynomial(t.left) and isinstance(t.right, Const)
        return is_polynomial(t.left) and is_polynomial(t.right)
    if isinstance(t, Pow):
        return is_polynomial(t.base)
    return False


def is_semialgebraic(t: Expr) -> bool:
    if isinstance(t, (Const, Var)):
        return True
    if isinstance(t, Binary):
        return is_semialgebraic(t.left) and is_semialgebraic(t.right)
    if isinstance(t, Pow):
        return is_semialgebraic(t.base)
    if isinstance(t, (Sqrt, Abs)):
        return is_semialgebraic(t.child)
    if isinstance(t, MinMax):
        return all(is_semialgebraic(c) for c in t.children)
    return False


def has_transcendental(t: Expr) -> bool:
    return not is_semialgebraic(t)


def is_smooth(t: Expr) -> bool:
    if isinstance(t, (Const, Var)):
        return True
    if isinstance(t, Binary):
        return is_smooth(t.left) and is_smooth(t.right)
    if isinstance(t, (Pow,)):
        return is_smooth(t.base)
    if isinstance(t, (Sqrt, Func)):
        return is_smooth(t.child)
    return False


def count_nodes(t: Expr) -> int:
    if isinstance(t, (Const, Var)):
        return 1
    if isinstance(t, Binary):
        return 1 + count_nodes(t.left) + count_nodes(t.right)
    if isinstance(t, (Pow,)):
        return 1 + count_nodes(t.base)
    if isinstance(t, (Sqrt, Abs, Func)):
        return 1 + count_nodes(t.child)
    if isinstance(t, MinMax):
        return 1 + sum(count_nodes(c) for c in t.children)
    raise TypeError


def max_var_index(t: Expr) -> int:
    if isinstance(t, Const):
        return -1
    if isinstance(t, Var):
        return t.index
    if isinstance(t, Binary):
        return max(max_var_index(t.left), max_var_index(t.right))
    if isinstance(t, Pow):
        return max_var_index(t.base)
    if isinstance(t, (Sqrt, Abs, Func)):
        return max_var_index(t.child)
    if isinstance(t, MinMax):
        return max(max_var_index(c) for c in t.children)
    raise TypeError


# ---------------------------------------------------------------------------
# printing (round-trips through the parser)

def to_text(t: Expr) -> str:
    return _print(t, 0)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _print(t: Expr, parent_prec: int) -> str:
    if isinstance(t, Const):
        v = t.value
        s = str(v) if v.denominator != 1 else str(v.numerator)
        if v < 0:
            s = f"({s})"
        return s
    if isinstance(t, Var):
        return f"x{t.index + 1}"
    if isinstance(t, Binary):
        prec = _PREC[t.op]
        left = _print(t.left, prec if t.op in "+-" else prec)
        # - and / are left-associative: force parens on same-precedence rhs
        right = _print(t.right, prec + (1 if t.op in "-/" else 0))
        s = f"{left} {t.op} {right}" if t.op in "+-" else f"{left}{t.op}{right}"
        if prec < parent_prec:
            s = f"({s})"
        return s
    if isinstance(t, Pow):
        base = _print(t.base, 4)
        # ^ does not chain in the grammar: a nested power base needs parens
        if isinstance(t.base, Pow):
            base = f"({base})"
        return f"{base}^{t.exponent}"
    if isinstance(t, Sqrt):
        return f"sqrt({_print(t.child, 0)})"
    if isinstance(t, Abs):
        return f"abs({_print(t.child, 0)})"
    if isinstance(t, MinMax):
        args = ", ".join(_print(c, 0) for c in t.children)
        return f"{t.kind}({args})"
    if isinstance(t, Func):
        return f"{t.name}({_print(t.child, 0)})"
    raise TypeError


# ---------------------------------------------------------------------------
# problem-file parser
#
# Grammar:
#   vars: x1 in [lo,hi], x2 in [lo,hi], ...
#   objective: <infix expression>
#   goal: prove >= <rational>          (optional)
#   '#' begins a comment line.
# Precedence: ^  >  unary -  >  * /  >  + -.


@dataclass
class Problem:
    tree: Expr
    box: Box
    goal: Fraction | None
    var_names: list[str]
    name: str = ""


class _Tokenizer:
    def __init__(self, text: str, line: int):
        self.text = text
        self.pos = 0
        self.line = line
        self.tokens: list[tuple[str, str, int]] = []
        self._tokenize()
        self.idx = 0

    def _tokenize(self):
        text = self.text
        i = 0
        while i < len(text):
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < len(text) and text[i + 1].isdigit()):
                j = i
                while j < len(text) and (text[j].isdigit() or text[j] == "."):
                    j += 1
                self.tokens.append(("num", text[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("name", text[i:j], i))
                i = j
                continue
            if c in "+-*/^(),[]":
                self.tokens.append((c, c, i))
                i += 1
                continue
            raise ParseError(f"unexpected character {c!r}", self.line, i + 1)

    def peek(self):
        if self.idx < len(self.tokens):
            return self.tokens[self.idx]
        return ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.idx += 1
        return tok

    def expect(self, kind: str):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, got {tok[1]!r}", self.line, tok[2] + 1)
        return tok


def _parse_number(tok, line) -> Fraction:
    try:
        text = tok[1]
        if "." in text:
            whole, frac = text.split(".")
            num = int(whole or "0") * 10 ** len(frac) + int(frac or "0")
            return Fraction(num, 10 ** len(frac))
        return Fraction(int(text))
    except ValueError:
        raise ParseError(f"bad number {tok[1]!r}", line, tok[2] + 1)


_FUNC_ALIASES = {"arctan": "atan", "atan": "atan", "sin": "sin", "cos": "cos",
                 "exp": "exp", "log": "log"}


class _ExprParser:
    def __init__(self, tz: _Tokenizer, var_index: dict[str, int]):
        self.tz = tz
        self.vars = var_index

    def parse(self) -> Expr:
        e = self.sum_()
        tok = self.tz.peek()
        if tok[0] != "eof":
            raise ParseError(f"trailing input {tok[1]!r}", self.tz.line, tok[2] + 1)
        return e

    def sum_(self) -> Expr:
        e = self.term()
        while self.tz.peek()[0] in "+-":
            op = self.tz.next()[0]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tz.peek()[0] in "*/":
            op = self.tz.next()[0]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.tz.peek()[0] == "-":
            self.tz.next()
            return neg(self.unary())
        if self.tz.peek()[0] == "+":
            self.tz.next()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tz.peek()[0] == "^":
            tok = self.tz.next()
            etok = self.tz.next()
            if etok[0] != "num" or "." in etok[1]:
                raise ParseError("exponent must be a nonnegative integer",
                                 self.tz.line, etok[2] + 1)
            return pow_(base, int(etok[1]))
        return base

    def atom(self) -> Expr:
        tok = self.tz.next()
        if tok[0] == "num":
            return Const(_parse_number(tok, self.tz.line))
        if tok[0] == "(":
            e = self.sum_()
            self.tz.expect(")")
            return e
        if tok[0] == "name":
            name = tok[1]
            if self.tz.peek()[0] == "(":
                self.tz.next()
                if name in ("min", "max"):
                    a = self.sum_()
                    self.tz.expect(",")
                    b = self.sum_()
                    self.tz.expect(")")
                    return MinMax(name, (a, b))
                args_end = lambda: self.tz.expect(")")
                if name == "sqrt":
                    e = self.sum_()
                    args_end()
                    return Sqrt(e)
                if name == "abs":
                    e = self.sum_()
                    args_end()
                    return Abs(e)
                if name in _FUNC_ALIASES:
                    e = self.sum_()
                    args_end()
                    return Func(_FUNC_ALIASES[name], e)
                raise ParseError(f"unknown function {name!r}", self.tz.line, tok[2] + 1)
            if name in self.vars:
                return Var(self.vars[name])
            raise ParseError(f"unknown variable {name!r}", self.tz.line, tok[2] + 1)
        raise ParseError(f"unexpected token {tok[1]!r}", self.tz.line, tok[2] + 1)


def parse_expr(text: str, var_index: dict[str, int], line: int = 0) -> Expr:
    return _ExprParser(_Tokenizer(text, line), var_index).parse()


def _parse_signed_number(tz: _Tokenizer) -> Fraction:
    sign = 1
    while tz.peek()[0] in "+-":
        if tz.next()[0] == "-":
            sign = -sign
    tok = tz.expect("num")
    return sign * _parse_number(tok, tz.line)


def parse_problem(text: str, name: str = "") -> Problem:
    """Parse a problem file: variable box, objective, optional goal."""
    var_names: list[str] = []
    intervals: list[Interval] = []
    objective: Expr | None = None
    goal: Fraction | None = None
    var_index: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ParseError("expected 'keyword: ...'", lineno, 1)
        keyword, rest = line.split(":", 1)
        keyword = keyword.strip().lower()
        if keyword == "vars":
            tz = _Tokenizer(rest, lineno)
            while tz.peek()[0] != "eof":
                nametok = tz.expect("name")
                intok = tz.expect("name")
                if intok[1] != "in":
                    raise ParseError("expected 'in'", lineno, intok[2] + 1)
                tz.expect("[")
                lo = _parse_signed_number(tz)
                tz.expect(",")
                hi = _parse_signed_number(tz)
                tz.expect("]")
                if lo > hi:
                    raise ParseError(
                        f"variable {nametok[1]} bound with lo > hi", lineno, nametok[2] + 1)
                if nametok[1] in var_index:
                    raise ParseError(f"duplicate variable {nametok[1]}", lineno, nametok[2] + 1)
                var_index[nametok[1]] = len(var_names)
                var_names.append(nametok[1])
                intervals.append(Interval(float(lo), float(hi)))
                if tz.peek()[0] == ",":
                    tz.next()
        elif keyword == "objective":
            objective = parse_expr(rest, var_index, lineno)
        elif keyword == "goal":
            # ">=" is not in the operator alphabet; accept it textually
            stripped = rest.strip()
            if not stripped.startswith("prove"):
                raise ParseError("expected 'prove >= <value>'", lineno, 1)
            after = stripped[len("prove"):].strip()
            if not after.startswith(">="):
                raise ParseError("expected '>='", lineno, 1)
            goal = _parse_fraction_text(after[2:].strip(), lineno)
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno, 1)

    if objective is None:
        raise ParseError("missing objective")
    if not var_names:
        raise ParseError("missing vars declaration")
    if max_var_index(objective) >= len(var_names):
        raise ParseError("objective references an undeclared variable")
    return Problem(objective, Box(intervals), goal, var_names, name=name)


def _parse_fraction_text(text: str, lineno: int) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        pass
    tz = _Tokenizer(text, lineno)
    val = _parse_signed_number(tz)
    if tz.peek()[0] == "/":
        tz.next()
        den = _parse_signed_number(tz)
        val = val / den
    if tz.peek()[0] != "eof":
        raise ParseError("bad goal value", lineno, 1)
    return val
