"""SMT-LIB2 script generation and the external solver subprocess client.

Two encodings: exact rationals over Real (logic QF_NRA) and 16-bit
floating point (logic QF_FP, sort (_ FloatingPoint 5 11), round to
nearest even).  Neither theory has the transcendentals, so expressions
containing tanh/sin/cos/sqrt are rejected with the offending nodes
listed; integer powers unroll to products and abs/sign become
if-then-else terms.

The client pipes the script to the solver's standard input and maps the
answer.  Model values are parsed back into doubles; the caller recomputes
any violation value instead of trusting solver arithmetic.
"""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .expr import (Abs, Add, Const, Cos, Div, Expr, Mul, Neg, Pow, Sign, Sin,
                   Sqrt, Sub, Tanh, Var, children)
from .intervals import Box


class SmtError(RuntimeError):
    """Base for SMT emission and solver-client failures."""


class UnsupportedNodeError(SmtError):
    """The expression contains nodes outside the encoding's theory."""

    def __init__(self, encoding: str, nodes: list[str]):
        super().__init__(f"{encoding} encoding cannot express: {', '.join(nodes)}")
        self.nodes = nodes


class SolverUnknownError(SmtError):
    """The solver answered `unknown`."""


class SolverTimeoutError(SmtError):
    """The solver did not answer within the timeout."""


class SolverFailedError(SmtError):
    """The solver could not be run, or exited without a verdict."""


class MalformedModelError(SmtError):
    """A sat answer whose model could not be parsed into point values."""


_TRANSCENDENTAL = {Tanh: "tanh", Sin: "sin", Cos: "cos", Sqrt: "sqrt"}


def _unsupported_nodes(e: Expr) -> list[str]:
    found: list[str] = []
    seen: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        label = _TRANSCENDENTAL.get(type(node))
        if label is not None and label not in seen:
            seen.add(label)
            found.append(label)
        stack.extend(children(node))
    return sorted(found)


# ---------------------------------------------------------------------------
# Real encoding
# ---------------------------------------------------------------------------

def _real_literal(value: float) -> str:
    if value < 0:
        return f"(- {_real_literal(-value)})"
    num, den = float(value).as_integer_ratio()
    if den == 1:
        return f"{num}.0"
    return f"(/ {num}.0 {den}.0)"


def _real_term(e: Expr) -> str:
    if isinstance(e, Const):
        return _real_literal(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(- {_real_term(e.arg)})"
    if isinstance(e, Abs):
        inner = _real_term(e.arg)
        return f"(ite (>= {inner} 0.0) {inner} (- {inner}))"
    if isinstance(e, Sign):
        inner = _real_term(e.arg)
        return (f"(ite (> {inner} 0.0) 1.0 "
                f"(ite (< {inner} 0.0) (- 1.0) 0.0))")
    if isinstance(e, Add):
        return f"(+ {_real_term(e.lhs)} {_real_term(e.rhs)})"
    if isinstance(e, Sub):
        return f"(- {_real_term(e.lhs)} {_real_term(e.rhs)})"
    if isinstance(e, Mul):
        return f"(* {_real_term(e.lhs)} {_real_term(e.rhs)})"
    if isinstance(e, Div):
        return f"(/ {_real_term(e.lhs)} {_real_term(e.rhs)})"
    if isinstance(e, Pow):
        if e.exponent == 0:
            return "1.0"
        base = _real_term(e.base)
        if e.exponent == 1:
            return base
        return f"(* {' '.join([base] * e.exponent)})"
    raise SmtError(f"cannot encode node {e!r}")


# ---------------------------------------------------------------------------
# Float16 encoding
# ---------------------------------------------------------------------------

_FP_SORT = "(_ FloatingPoint 5 11)"


def _fp_literal(value: float) -> str:
    with np.errstate(over="ignore"):
        h = np.float16(value)
    if not math.isfinite(float(h)):
        raise SmtError(f"{value} does not fit in 16-bit floating point")
    bits = int(h.view(np.uint16))
    sign = (bits >> 15) & 0x1
    exp = (bits >> 10) & 0x1F
    frac = bits & 0x3FF
    return f"(fp #b{sign:01b} #b{exp:05b} #b{frac:010b})"


def _fp_term(e: Expr) -> str:
    if isinstance(e, Const):
        return _fp_literal(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(fp.neg {_fp_term(e.arg)})"
    if isinstance(e, Abs):
        return f"(fp.abs {_fp_term(e.arg)})"
    if isinstance(e, Sign):
        inner = _fp_term(e.arg)
        zero = _fp_literal(0.0)
        return (f"(ite (fp.gt {inner} {zero}) {_fp_literal(1.0)} "
                f"(ite (fp.lt {inner} {zero}) {_fp_literal(-1.0)} {zero}))")
    if isinstance(e, Add):
        return f"(fp.add RNE {_fp_term(e.lhs)} {_fp_term(e.rhs)})"
    if isinstance(e, Sub):
        return f"(fp.sub RNE {_fp_term(e.lhs)} {_fp_term(e.rhs)})"
    if isinstance(e, Mul):
        return f"(fp.mul RNE {_fp_term(e.lhs)} {_fp_term(e.rhs)})"
    if isinstance(e, Div):
        return f"(fp.div RNE {_fp_term(e.lhs)} {_fp_term(e.rhs)})"
    if isinstance(e, Pow):
        if e.exponent == 0:
            return _fp_literal(1.0)
        term = _fp_term(e.base)
        for _ in range(e.exponent - 1):
            term = f"(fp.mul RNE {term} {_fp_term(e.base)})"
        return term
    raise SmtError(f"cannot encode node {e!r}")


# ---------------------------------------------------------------------------
# Script assembly
# ---------------------------------------------------------------------------

def emit_smtlib(violation, eps: float, encoding: str = "real") -> str:
    """Emit a complete SMT-LIB2 script asserting `v > eps` over the domain.

    ``violation`` provides `.v` (ground Expr) and `.domain` (Box).
    Encodings: "real" (QF_NRA, exact rationals) or "float16" (QF_FP,
    16-bit floats, round to nearest even).
    """
    enc = encoding.strip().lower()
    if enc not in ("real", "float16"):
        raise SmtError(f"unknown encoding {encoding!r} (want real or float16)")
    bad = _unsupported_nodes(violation.v)
    if bad:
        raise UnsupportedNodeError(enc, bad)

    domain: Box = violation.domain
    lines = [f"; violation query: v > {eps!r} over {', '.join(domain.features)}"]
    if enc == "real":
        lines.append("(set-logic QF_NRA)")
        for name in domain.features:
            iv = domain[name]
            lines.append(f"(declare-const {name} Real)")
            lines.append(f"(assert (<= {_real_literal(iv.lo)} {name}))")
            lines.append(f"(assert (<= {name} {_real_literal(iv.hi)}))")
        lines.append(f"(assert (> {_real_term(violation.v)} {_real_literal(eps)}))")
    else:
        lines.append("(set-logic QF_FP)")
        for name in domain.features:
            iv = domain[name]
            lines.append(f"(declare-const {name} {_FP_SORT})")
            lines.append(f"(assert (fp.leq {_fp_literal(iv.lo)} {name}))")
            lines.append(f"(assert (fp.leq {name} {_fp_literal(iv.hi)}))")
        lines.append(f"(assert (fp.gt {_fp_term(violation.v)} {_fp_literal(eps)}))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Solver client
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverAnswer:
    verdict: str                 # "sat" or "unsat"
    model: dict[str, float]
    raw: str


def check_external(script: str, solver_command, timeout: float = 60.0) -> SolverAnswer:
    """Pipe the script to the solver and parse its verdict and model."""
    if isinstance(solver_command, str):
        command = shlex.split(solver_command)
    else:
        command = list(solver_command)
    if not command:
        raise SolverFailedError("empty solver command")
    try:
        proc = subprocess.run(command, input=script, capture_output=True,
                              text=True, timeout=timeout)
    except FileNotFoundError as exc:
        raise SolverFailedError(f"solver not found: {command[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise SolverTimeoutError(
            f"solver exceeded {timeout}s: {' '.join(command)}") from exc

    verdict = None
    rest_lines: list[str] = []
    for line in proc.stdout.splitlines():
        word = line.strip()
        if verdict is None and word in ("sat", "unsat", "unknown"):
            verdict = word
            continue
        rest_lines.append(line)
    if verdict == "unknown":
        raise SolverUnknownError("solver answered unknown")
    if verdict is None:
        detail = (proc.stderr or proc.stdout or "").strip()
        raise SolverFailedError(
            f"no sat/unsat verdict from solver (exit {proc.returncode})"
            + (f": {detail[:500]}" if detail else ""))

    model: dict[str, float] = {}
    if verdict == "sat":
        model = _parse_model("\n".join(rest_lines))
    return SolverAnswer(verdict=verdict, model=model, raw=proc.stdout)


def witness_point(answer: SolverAnswer, domain: Box) -> dict[str, float]:
    """Model values as a point inside the domain.

    Features the solver left unconstrained take the domain midpoint;
    values are clamped into the domain (FP models can sit one rounding
    step outside the real-valued bounds).
    """
    point = {}
    for name in domain.features:
        iv = domain[name]
        value = answer.model.get(name, iv.mid)
        point[name] = min(max(value, iv.lo), iv.hi)
    return point


# -- model s-expression parsing ---------------------------------------------

def _tokenize(text: str) -> list[str]:
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in "()":
            out.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise MalformedModelError("unterminated |quoted| symbol")
            out.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in "() \t\r\n;":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def _parse_sexprs(tokens: list[str]):
    pos = 0

    def parse_one():
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedModelError("unexpected end of solver model")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(parse_one())
            if pos >= len(tokens):
                raise MalformedModelError("unbalanced parentheses in model")
            pos += 1
            return items
        if tok == ")":
            raise MalformedModelError("unbalanced parentheses in model")
        return tok

    exprs = []
    while pos < len(tokens):
        exprs.append(parse_one())
    return exprs


def _value_of(sexpr) -> float:
    if isinstance(sexpr, str):
        tok = sexpr
        if tok.startswith("#b"):
            return float(int(tok[2:], 2))
        if tok.startswith("#x"):
            return float(int(tok[2:], 16))
        try:
            return float(tok)
        except ValueError:
            raise MalformedModelError(f"cannot read value {tok!r}") from None
    if not sexpr:
        raise MalformedModelError("empty value term")
    head = sexpr[0]
    if head == "-" and len(sexpr) == 2:
        return -_value_of(sexpr[1])
    if head == "/" and len(sexpr) == 3:
        den = _value_of(sexpr[2])
        if den == 0:
            raise MalformedModelError("division by zero in model value")
        return _value_of(sexpr[1]) / den
    if head == "fp" and len(sexpr) == 4:
        bits = 0
        widths = (1, 5, 10)
        for part, width in zip(sexpr[1:], widths):
            if not (isinstance(part, str) and part.startswith("#b")
                    and len(part) == width + 2):
                raise MalformedModelError(f"cannot read fp literal {sexpr}")
            bits = (bits << width) | int(part[2:], 2)
        return float(np.uint16(bits).view(np.float16))
    if head == "_" and len(sexpr) >= 2:
        special = sexpr[1]
        if special in ("+zero", "-zero"):
            return -0.0 if special == "-zero" else 0.0
        raise MalformedModelError(f"non-finite model value {special}")
    raise MalformedModelError(f"cannot read value term {sexpr}")


def _parse_model(text: str) -> dict[str, float]:
    try:
        exprs = _parse_sexprs(_tokenize(text))
    except MalformedModelError:
        raise
    model: dict[str, float] = {}

    def walk(sexpr) -> None:
        if not isinstance(sexpr, list):
            return
        if (len(sexpr) >= 5 and sexpr[0] == "define-fun"
                and isinstance(sexpr[1], str) and sexpr[2] == []):
            model[sexpr[1]] = _value_of(sexpr[4])
            return
        for item in sexpr:
            walk(item)

    for sexpr in exprs:
        walk(sexpr)
    return model
