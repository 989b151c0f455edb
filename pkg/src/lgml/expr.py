"""Symbolic expression trees over named features and an unknown function.

The AST covers arithmetic, a few fixed unary functions, and two special
node kinds: ``FApp`` stands for the unknown target function applied to
argument expressions, ``FDeriv`` for one of its partial derivatives.  An
expression containing neither is "ground" and can be evaluated, both at a
point (double precision) and over a box (outward-rounded enclosure).

Expressions are immutable; sharing subtrees between expressions is safe.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping

from .intervals import Box, Interval, IntervalError


class ExprError(Exception):
    """Base for expression construction/evaluation failures."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class NotGroundError(ExprError):
    """Evaluation or differentiation attempted on a non-ground expression."""


class EvalDomainError(ExprError):
    """A domain violation (sqrt of a negative, division by zero, overflow).

    When raised from interval evaluation, ``box`` carries the offending
    sub-box.
    """

    def __init__(self, message: str, box: Box | None = None):
        super().__init__(message)
        self.box = box


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Expr:
    __slots__ = ()

    def __add__(self, other) -> "Expr":
        return Add(self, _coerce(other))

    def __radd__(self, other) -> "Expr":
        return Add(_coerce(other), self)

    def __sub__(self, other) -> "Expr":
        return Sub(self, _coerce(other))

    def __rsub__(self, other) -> "Expr":
        return Sub(_coerce(other), self)

    def __mul__(self, other) -> "Expr":
        return Mul(self, _coerce(other))

    def __rmul__(self, other) -> "Expr":
        return Mul(_coerce(other), self)

    def __truediv__(self, other) -> "Expr":
        return Div(self, _coerce(other))

    def __rtruediv__(self, other) -> "Expr":
        return Div(_coerce(other), self)

    def __pow__(self, exponent: int) -> "Expr":
        return Pow(self, exponent)

    def __neg__(self) -> "Expr":
        return Neg(self)

    def __str__(self) -> str:
        return format_expr(self)


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} as an expression")


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ExprError(f"non-finite constant {self.value}")


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Abs(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sign(Expr):
    """sign(x) in {-1, 0, 1}; arises as the derivative of Abs."""

    arg: Expr


@dataclass(frozen=True)
class Sqrt(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr


@dataclass(frozen=True)
class Cos(Expr):
    arg: Expr


@dataclass(frozen=True)
class Tanh(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Sub(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Mul(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Div(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or isinstance(self.exponent, bool):
            raise ExprError(f"power exponent must be an int, got {self.exponent!r}")
        if self.exponent < 0:
            raise ExprError(f"power exponent must be >= 0, got {self.exponent}")


@dataclass(frozen=True)
class FApp(Expr):
    """The unknown function f applied to argument expressions."""

    args: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ExprError("f() needs at least one argument")


@dataclass(frozen=True)
class FDeriv(Expr):
    """Partial derivative of the unknown function with respect to ``wrt``."""

    wrt: str
    args: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ExprError("df() needs at least one argument")


_UNARY = (Neg, Abs, Sign, Sqrt, Sin, Cos, Tanh)
_BINARY = (Add, Sub, Mul, Div)


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, _UNARY):
        return (e.arg,)
    if isinstance(e, _BINARY):
        return (e.lhs, e.rhs)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, (FApp, FDeriv)):
        return e.args
    return ()


def is_ground(e: Expr) -> bool:
    if isinstance(e, (FApp, FDeriv)):
        return False
    return all(is_ground(c) for c in children(e))


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    out: set[str] = set()
    if isinstance(e, FDeriv):
        out.add(e.wrt)
    for c in children(e):
        out |= free_vars(c)
    return out


def count_nodes(e: Expr) -> int:
    return 1 + sum(count_nodes(c) for c in children(e))


def fapp_arity(e: Expr) -> int | None:
    """Common arity of all f/df applications, or None if there are none."""
    arity: int | None = None
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, (FApp, FDeriv)):
            n = len(node.args)
            if arity is None:
                arity = n
            elif arity != n:
                raise ExprError(f"inconsistent f/df arity: {arity} vs {n}")
        stack.extend(children(node))
    return arity


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------

def eval_point(e: Expr, point: Mapping[str, float]) -> float:
    """Evaluate a ground expression at a point, in double precision.

    Domain violations raise :class:`EvalDomainError`; a NaN or infinite
    result is never returned silently.
    """
    value = _eval(e, point)
    if not math.isfinite(value):
        raise EvalDomainError(f"non-finite result {value} from {format_expr(e)}")
    return value


def _eval(e: Expr, point: Mapping[str, float]) -> float:
    match e:
        case Const(value=v):
            return v
        case Var(name=name):
            try:
                return point[name]
            except KeyError:
                raise EvalDomainError(f"point does not cover feature {name!r}") from None
        case Neg(arg=a):
            return -_eval(a, point)
        case Abs(arg=a):
            return abs(_eval(a, point))
        case Sign(arg=a):
            v = _eval(a, point)
            return 0.0 if v == 0.0 else math.copysign(1.0, v)
        case Sqrt(arg=a):
            v = _eval(a, point)
            if v < 0.0:
                raise EvalDomainError(f"sqrt of negative value {v}")
            return math.sqrt(v)
        case Sin(arg=a):
            v = _eval(a, point)
            if not math.isfinite(v):
                raise EvalDomainError(f"sin of non-finite value {v}")
            return math.sin(v)
        case Cos(arg=a):
            v = _eval(a, point)
            if not math.isfinite(v):
                raise EvalDomainError(f"cos of non-finite value {v}")
            return math.cos(v)
        case Tanh(arg=a):
            return math.tanh(_eval(a, point))
        case Add(lhs=l, rhs=r):
            return _eval(l, point) + _eval(r, point)
        case Sub(lhs=l, rhs=r):
            return _eval(l, point) - _eval(r, point)
        case Mul(lhs=l, rhs=r):
            return _eval(l, point) * _eval(r, point)
        case Div(lhs=l, rhs=r):
            den = _eval(r, point)
            if den == 0.0:
                raise EvalDomainError("division by zero")
            return _eval(l, point) / den
        case Pow(base=b, exponent=n):
            try:
                return math.pow(_eval(b, point), n)
            except OverflowError:
                raise EvalDomainError(f"overflow in power ^{n}") from None
        case FApp() | FDeriv():
            raise NotGroundError(
                f"cannot evaluate non-ground expression {format_expr(e)}")
        case _:
            raise ExprError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Interval evaluation
# ---------------------------------------------------------------------------

def eval_interval(e: Expr, box: Box) -> Interval:
    """Enclosure of a ground expression over a box.

    For every point p in the box, ``eval_point(e, p)`` lies in the returned
    interval.  Raises :class:`EvalDomainError` with the offending sub-box if
    an operation's domain may be violated inside the box.
    """
    try:
        return _eval_iv(e, box)
    except IntervalError as exc:
        raise EvalDomainError(f"{exc} over {box!r}", box=box) from exc


def _eval_iv(e: Expr, box: Box) -> Interval:
    match e:
        case Const(value=v):
            return Interval(v, v)
        case Var(name=name):
            try:
                return box[name]
            except KeyError:
                raise EvalDomainError(f"box does not cover feature {name!r}",
                                      box=box) from None
        case Neg(arg=a):
            return -_eval_iv(a, box)
        case Abs(arg=a):
            return _eval_iv(a, box).abs()
        case Sign(arg=a):
            return _eval_iv(a, box).sign()
        case Sqrt(arg=a):
            return _eval_iv(a, box).sqrt()
        case Sin(arg=a):
            return _eval_iv(a, box).sin()
        case Cos(arg=a):
            return _eval_iv(a, box).cos()
        case Tanh(arg=a):
            return _eval_iv(a, box).tanh()
        case Add(lhs=l, rhs=r):
            return _eval_iv(l, box) + _eval_iv(r, box)
        case Sub(lhs=l, rhs=r):
            return _eval_iv(l, box) - _eval_iv(r, box)
        case Mul(lhs=l, rhs=r):
            return _eval_iv(l, box) * _eval_iv(r, box)
        case Div(lhs=l, rhs=r):
            return _eval_iv(l, box) / _eval_iv(r, box)
        case Pow(base=b, exponent=n):
            return _eval_iv(b, box).ipow(n)
        case FApp() | FDeriv():
            raise NotGroundError(
                f"cannot evaluate non-ground expression {format_expr(e)}")
        case _:
            raise ExprError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

def substitute_vars(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace every Var named in ``mapping`` with the mapped expression."""
    return _map_tree(e, lambda node: mapping.get(node.name) if isinstance(node, Var) else None)


def substitute_f(e: Expr, fhat: Expr, fhat_grads: Mapping[str, Expr],
                 features: tuple[str, ...] | None = None) -> Expr:
    """Replace f/df applications by a concrete model expression.

    ``fhat`` and every entry of ``fhat_grads`` must be ground expressions
    over the model's features; ``features`` gives their positional order
    (defaults to the sorted free variables of ``fhat``).  Each
    ``FApp(args)`` becomes ``fhat`` with feature i replaced by args[i]
    (already substituted themselves), and ``FDeriv(w, args)`` likewise uses
    ``fhat_grads[w]``.
    """
    if features is None:
        features = tuple(sorted(free_vars(fhat)))
    if not is_ground(fhat):
        raise NotGroundError("fhat must be ground")

    def rewrite(node: Expr) -> Expr | None:
        if isinstance(node, (FApp, FDeriv)):
            if len(node.args) != len(features):
                raise ExprError(
                    f"f/df arity {len(node.args)} does not match "
                    f"{len(features)} model features")
            if isinstance(node, FDeriv):
                if node.wrt not in fhat_grads:
                    raise ExprError(f"no gradient available for feature {node.wrt!r}")
                body = fhat_grads[node.wrt]
            else:
                body = fhat
            new_args = [_map_tree(a, rewrite) for a in node.args]
            return substitute_vars(body, dict(zip(features, new_args)))
        return None

    return _map_tree(e, rewrite)


def _map_tree(e: Expr, rewrite: Callable[[Expr], Expr | None]) -> Expr:
    replaced = rewrite(e)
    if replaced is not None:
        return replaced
    match e:
        case Const() | Var():
            return e
        case Neg(arg=a):
            return Neg(_map_tree(a, rewrite))
        case Abs(arg=a):
            return Abs(_map_tree(a, rewrite))
        case Sign(arg=a):
            return Sign(_map_tree(a, rewrite))
        case Sqrt(arg=a):
            return Sqrt(_map_tree(a, rewrite))
        case Sin(arg=a):
            return Sin(_map_tree(a, rewrite))
        case Cos(arg=a):
            return Cos(_map_tree(a, rewrite))
        case Tanh(arg=a):
            return Tanh(_map_tree(a, rewrite))
        case Add(lhs=l, rhs=r):
            return Add(_map_tree(l, rewrite), _map_tree(r, rewrite))
        case Sub(lhs=l, rhs=r):
            return Sub(_map_tree(l, rewrite), _map_tree(r, rewrite))
        case Mul(lhs=l, rhs=r):
            return Mul(_map_tree(l, rewrite), _map_tree(r, rewrite))
        case Div(lhs=l, rhs=r):
            return Div(_map_tree(l, rewrite), _map_tree(r, rewrite))
        case Pow(base=b, exponent=n):
            return Pow(_map_tree(b, rewrite), n)
        case FApp(args=args):
            return FApp(tuple(_map_tree(a, rewrite) for a in args))
        case FDeriv(wrt=w, args=args):
            return FDeriv(w, tuple(_map_tree(a, rewrite) for a in args))
        case _:
            raise ExprError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

def differentiate(e: Expr, wrt: str) -> Expr:
    """Symbolic partial derivative of a ground expression.

    Results are constant-folded but otherwise unsimplified.  Abs
    differentiates to sign(x), which takes the value 0 at 0 (the
    subgradient convention); sqrt at 0 surfaces as a division-by-zero at
    evaluation time rather than here.
    """
    if not is_ground(e):
        raise NotGroundError("can only differentiate ground expressions")
    return constant_fold(_diff(e, wrt))


def _diff(e: Expr, wrt: str) -> Expr:
    match e:
        case Const():
            return Const(0.0)
        case Var(name=name):
            return Const(1.0 if name == wrt else 0.0)
        case Neg(arg=a):
            return Neg(_diff(a, wrt))
        case Abs(arg=a):
            return Mul(Sign(a), _diff(a, wrt))
        case Sign(arg=_):
            # Zero almost everywhere; the jump at 0 is ignored.
            return Const(0.0)
        case Sqrt(arg=a):
            return Div(_diff(a, wrt), Mul(Const(2.0), Sqrt(a)))
        case Sin(arg=a):
            return Mul(Cos(a), _diff(a, wrt))
        case Cos(arg=a):
            return Neg(Mul(Sin(a), _diff(a, wrt)))
        case Tanh(arg=a):
            return Mul(Sub(Const(1.0), Pow(Tanh(a), 2)), _diff(a, wrt))
        case Add(lhs=l, rhs=r):
            return Add(_diff(l, wrt), _diff(r, wrt))
        case Sub(lhs=l, rhs=r):
            return Sub(_diff(l, wrt), _diff(r, wrt))
        case Mul(lhs=l, rhs=r):
            return Add(Mul(_diff(l, wrt), r), Mul(l, _diff(r, wrt)))
        case Div(lhs=l, rhs=r):
            num = Sub(Mul(_diff(l, wrt), r), Mul(l, _diff(r, wrt)))
            return Div(num, Pow(r, 2))
        case Pow(base=b, exponent=n):
            if n == 0:
                return Const(0.0)
            if n == 1:
                return _diff(b, wrt)
            return Mul(Mul(Const(float(n)), Pow(b, n - 1)), _diff(b, wrt))
        case _:
            raise ExprError(f"unknown node {e!r}")


def constant_fold(e: Expr) -> Expr:
    """Fold constant subtrees and drop 0/1 identity operands.

    Folding never evaluates an operation outside its domain (1/0 and
    sqrt(-1) are left as-is, to fail at evaluation time).
    """
    match e:
        case Const() | Var():
            return e
        case Neg(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const):
                return Const(-a.value)
            return Neg(a)
        case Abs(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const):
                return Const(abs(a.value))
            return Abs(a)
        case Sign(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const):
                v = a.value
                return Const(0.0 if v == 0.0 else math.copysign(1.0, v))
            return Sign(a)
        case Sqrt(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const) and a.value >= 0.0:
                return Const(math.sqrt(a.value))
            return Sqrt(a)
        case Sin(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const):
                return Const(math.sin(a.value))
            return Sin(a)
        case Cos(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const):
                return Const(math.cos(a.value))
            return Cos(a)
        case Tanh(arg=a):
            a = constant_fold(a)
            if isinstance(a, Const):
                return Const(math.tanh(a.value))
            return Tanh(a)
        case Add(lhs=l, rhs=r):
            l, r = constant_fold(l), constant_fold(r)
            if isinstance(l, Const) and isinstance(r, Const):
                return Const(l.value + r.value)
            if isinstance(l, Const) and l.value == 0.0:
                return r
            if isinstance(r, Const) and r.value == 0.0:
                return l
            return Add(l, r)
        case Sub(lhs=l, rhs=r):
            l, r = constant_fold(l), constant_fold(r)
            if isinstance(l, Const) and isinstance(r, Const):
                return Const(l.value - r.value)
            if isinstance(r, Const) and r.value == 0.0:
                return l
            if isinstance(l, Const) and l.value == 0.0:
                return Neg(r)
            return Sub(l, r)
        case Mul(lhs=l, rhs=r):
            l, r = constant_fold(l), constant_fold(r)
            if isinstance(l, Const) and isinstance(r, Const):
                return Const(l.value * r.value)
            for a, b in ((l, r), (r, l)):
                if isinstance(a, Const):
                    if a.value == 0.0:
                        return Const(0.0)
                    if a.value == 1.0:
                        return b
            return Mul(l, r)
        case Div(lhs=l, rhs=r):
            l, r = constant_fold(l), constant_fold(r)
            if isinstance(r, Const) and r.value != 0.0:
                if isinstance(l, Const):
                    return Const(l.value / r.value)
                if r.value == 1.0:
                    return l
            if isinstance(l, Const) and l.value == 0.0 and not isinstance(r, Const):
                return Const(0.0)
            return Div(l, r)
        case Pow(base=b, exponent=n):
            b = constant_fold(b)
            if n == 0:
                return Const(1.0)
            if n == 1:
                return b
            if isinstance(b, Const):
                return Const(math.pow(b.value, n))
            return Pow(b, n)
        case FApp(args=args):
            return FApp(tuple(constant_fold(a) for a in args))
        case FDeriv(wrt=w, args=args):
            return FDeriv(w, tuple(constant_fold(a) for a in args))
        case _:
            raise ExprError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Auxiliary truths
# ---------------------------------------------------------------------------

class Relation(Enum):
    EQUALITY = "equality"
    GREATER_THAN = "greater_than"


@dataclass(frozen=True)
class AuxTruth:
    """A known fact about the unknown function: alpha = beta or alpha > beta."""

    relation: Relation
    alpha: Expr
    beta: Expr

    def __post_init__(self):
        arity = fapp_arity(Add(self.alpha, self.beta))
        if arity is None:
            raise ExprError("auxiliary truth must mention f(...) or df(...) "
                            "on at least one side")

    @property
    def features(self) -> set[str]:
        return free_vars(self.alpha) | free_vars(self.beta)

    def __str__(self) -> str:
        op = "=" if self.relation is Relation.EQUALITY else ">"
        return f"{format_expr(self.alpha)} {op} {format_expr(self.beta)}"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),=>]))")

_FUNCTIONS = {"abs": Abs, "sqrt": Sqrt, "sin": Sin, "cos": Cos,
              "tanh": Tanh, "sign": Sign}
_RESERVED = set(_FUNCTIONS) | {"f", "df"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []
        self._tokenize()
        self.index = 0
        self.arity: int | None = None

    def _tokenize(self) -> None:
        pos = 0
        while pos < len(self.text):
            m = _TOKEN_RE.match(self.text, pos)
            if m is None or m.end() == pos:
                stripped = self.text[pos:].lstrip()
                if not stripped:
                    break
                at = len(self.text) - len(stripped)
                raise ParseError(f"unexpected character {stripped[0]!r}", at)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(self.text)))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text, at = self.next()
        if text != value:
            shown = text if text else "end of input"
            raise ParseError(f"expected {value!r}, found {shown!r}", at)

    # Grammar: expr := term (('+'|'-') term)*
    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            rhs = self.parse_term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            rhs = self.parse_factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def parse_factor(self) -> Expr:
        node = self.parse_base()
        if self.peek()[1] == "^":
            self.next()
            kind, text, at = self.next()
            if kind != "number" or not text.isdigit():
                raise ParseError("exponent must be a non-negative integer literal", at)
            node = Pow(node, int(text))
        return node

    def parse_base(self) -> Expr:
        kind, text, at = self.next()
        if kind == "number":
            return Const(float(text))
        if text == "-":
            # "-2" is the literal -2; "-(2)" stays an explicit negation.
            kind2, text2, _ = self.peek()
            if kind2 == "number":
                self.next()
                return Const(-float(text2))
            return Neg(self.parse_base())
        if text == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        if kind == "ident":
            if text == "f":
                self.expect("(")
                args = self.parse_args()
                self.expect(")")
                self._check_arity(len(args), at)
                return FApp(tuple(args))
            if text == "df":
                self.expect("(")
                wkind, wtext, wat = self.next()
                if wkind != "ident" or wtext in _RESERVED:
                    raise ParseError("df(...) needs a feature name first", wat)
                self.expect(",")
                args = self.parse_args()
                self.expect(")")
                self._check_arity(len(args), at)
                return FDeriv(wtext, tuple(args))
            if text in _FUNCTIONS:
                self.expect("(")
                node = self.parse_expr()
                self.expect(")")
                return _FUNCTIONS[text](node)
            return Var(text)
        shown = text if text else "end of input"
        raise ParseError(f"unexpected {shown!r}", at)

    def parse_args(self) -> list[Expr]:
        args = [self.parse_expr()]
        while self.peek()[1] == ",":
            self.next()
            args.append(self.parse_expr())
        return args

    def _check_arity(self, n: int, at: int) -> None:
        if self.arity is None:
            self.arity = n
        elif self.arity != n:
            raise ParseError(
                f"f/df arity mismatch: saw {self.arity} argument(s) earlier, now {n}", at)


def parse_expr(text: str) -> Expr:
    """Parse the expression DSL; see the README grammar."""
    parser = _Parser(text)
    node = parser.parse_expr()
    kind, tok, at = parser.peek()
    if kind != "end":
        raise ParseError(f"trailing input starting with {tok!r}", at)
    return node


def parse_truth(text: str) -> AuxTruth:
    """Parse ``alpha = beta`` or ``alpha > beta`` into an auxiliary truth."""
    parser = _Parser(text)
    alpha = parser.parse_expr()
    kind, op, at = parser.next()
    if op not in ("=", ">"):
        raise ParseError("expected '=' or '>' between the truth's two sides", at)
    beta = parser.parse_expr()
    kind, tok, at = parser.peek()
    if kind != "end":
        raise ParseError(f"trailing input starting with {tok!r}", at)
    relation = Relation.EQUALITY if op == "=" else Relation.GREATER_THAN
    return AuxTruth(relation, alpha, beta)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

# Precedence levels mirror the grammar: 1 add/sub, 2 mul/div, 3 pow, 4 base.
def _level(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, (Mul, Div)):
        return 2
    if isinstance(e, Pow):
        return 3
    return 4


def format_expr(e: Expr) -> str:
    """Render to the DSL so that parse(format_expr(e)) == e."""
    return _fmt(e, 1)


def _fmt(e: Expr, need: int) -> str:
    lvl = _level(e)
    text = _fmt_node(e)
    if lvl < need:
        return f"({text})"
    return text


def _fmt_node(e: Expr) -> str:
    match e:
        case Const(value=v):
            return repr(v)
        case Var(name=name):
            return name
        case Neg(arg=Const() as c):
            # "-1.5" would re-parse as a negative literal, not Neg(Const).
            return f"-({_fmt_node(c)})"
        case Neg(arg=a):
            return f"-{_fmt(a, 4)}"
        case Abs(arg=a):
            return f"abs({_fmt(a, 1)})"
        case Sign(arg=a):
            return f"sign({_fmt(a, 1)})"
        case Sqrt(arg=a):
            return f"sqrt({_fmt(a, 1)})"
        case Sin(arg=a):
            return f"sin({_fmt(a, 1)})"
        case Cos(arg=a):
            return f"cos({_fmt(a, 1)})"
        case Tanh(arg=a):
            return f"tanh({_fmt(a, 1)})"
        case Add(lhs=l, rhs=r):
            return f"{_fmt(l, 1)} + {_fmt(r, 2)}"
        case Sub(lhs=l, rhs=r):
            return f"{_fmt(l, 1)} - {_fmt(r, 2)}"
        case Mul(lhs=l, rhs=r):
            return f"{_fmt(l, 2)}*{_fmt(r, 3)}"
        case Div(lhs=l, rhs=r):
            return f"{_fmt(l, 2)}/{_fmt(r, 3)}"
        case Pow(base=b, exponent=n):
            return f"{_fmt(b, 4)}^{n}"
        case FApp(args=args):
            inner = ", ".join(_fmt(a, 1) for a in args)
            return f"f({inner})"
        case FDeriv(wrt=w, args=args):
            inner = ", ".join(_fmt(a, 1) for a in args)
            return f"df({w}, {inner})"
        case _:
            raise ExprError(f"unknown node {e!r}")
