"""Shared test machinery: random ground expressions, boxes, and points.

The generators below are the oracle side of the enclosure and tape tests:
expressions are built so that every operation stays inside its domain over
the whole box (denominators bounded away from zero, sqrt arguments kept
nonnegative), which lets soundness properties quantify over the full
random family without filtering.
"""

from __future__ import annotations

import numpy as np
from hypothesis import settings

from lgml.expr import (Abs, Add, Const, Cos, Div, Expr, Mul, Neg, Pow, Sin,
                       Sqrt, Sub, Tanh, Var)
from lgml.intervals import Box, Interval

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


def random_box(rng: np.random.Generator, names: tuple[str, ...],
               span: float = 3.0) -> Box:
    bounds = {}
    for name in names:
        a, b = np.sort(rng.uniform(-span, span, size=2))
        if b - a < 1e-6:
            b = a + 1e-6
        bounds[name] = Interval(float(a), float(b))
    return Box(bounds)


def random_point_in(rng: np.random.Generator, box: Box) -> dict[str, float]:
    return {name: float(rng.uniform(box[name].lo, box[name].hi))
            for name in box.features}


def random_ground_expr(rng: np.random.Generator, names: tuple[str, ...],
                       depth: int = 3) -> Expr:
    """A ground expression whose every subterm is domain-safe on any box."""
    if depth == 0 or rng.uniform() < 0.3:
        if rng.uniform() < 0.5:
            return Var(names[int(rng.integers(len(names)))])
        return Const(float(np.round(rng.uniform(-2.0, 2.0), 3)))
    kind = int(rng.integers(9))
    sub = lambda: random_ground_expr(rng, names, depth - 1)
    if kind == 0:
        return Add(sub(), sub())
    if kind == 1:
        return Sub(sub(), sub())
    if kind == 2:
        return Mul(sub(), sub())
    if kind == 3:
        # Denominator |e| + 1 keeps the enclosure clear of zero.
        return Div(sub(), Add(Abs(sub()), Const(1.0)))
    if kind == 4:
        return Pow(sub(), int(rng.integers(4)))
    if kind == 5:
        return Sqrt(Add(Abs(sub()), Const(0.25)))
    if kind == 6:
        return Neg(Abs(sub()))
    if kind == 7:
        return Sin(sub()) if rng.uniform() < 0.5 else Cos(sub())
    return Tanh(sub())
