"""Flat-array compilation of expressions, with a compiled/pure backend switch.

A :class:`Tape` is an expression in postorder: four parallel arrays (opcode,
two argument slots, constant value), one entry per node, each node reading
registers written by earlier entries.  Evaluating a tape avoids the
per-node dispatch cost of walking the AST, which matters inside the
branch-and-bound verifier and on large test grids.

Backends: the Cython extension ``lgml._kernels`` when it built, otherwise
``lgml._kernels_py``.  Setting ``LGML_PURE_PYTHON=1`` forces the fallback.
Identical subtrees share one tape entry, which is safe because every
operation is a deterministic function of its operands.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import (Abs, Add, Const, Cos, Div, EvalDomainError, Expr, ExprError,
                   FApp, FDeriv, Mul, Neg, NotGroundError, Pow, Sign, Sin,
                   Sqrt, Sub, Tanh, Var, format_expr)

OP_CONST = 0
OP_VAR = 1
OP_NEG = 2
OP_ABS = 3
OP_SIGN = 4
OP_SQRT = 5
OP_SIN = 6
OP_COS = 7
OP_TANH = 8
OP_ADD = 9
OP_SUB = 10
OP_MUL = 11
OP_DIV = 12
OP_POW = 13

_UNARY_OPS = {Neg: OP_NEG, Abs: OP_ABS, Sign: OP_SIGN, Sqrt: OP_SQRT,
              Sin: OP_SIN, Cos: OP_COS, Tanh: OP_TANH}
_BINARY_OPS = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}

_STATUS_MESSAGES = {
    1: "division by zero",
    2: "sqrt of a negative value",
    3: "non-finite result",
}


def _select_backend():
    if os.environ.get("LGML_PURE_PYTHON", "").strip() not in ("", "0"):
        from . import _kernels_py
        return _kernels_py
    try:
        from . import _kernels
        return _kernels
    except ImportError:
        from . import _kernels_py
        return _kernels_py


_impl = _select_backend()

adam_fit = _impl.adam_fit


def backend_name() -> str:
    """Which kernel backend is active: "compiled" or "pure"."""
    return _impl.BACKEND


@dataclass(frozen=True)
class Tape:
    feature_names: tuple[str, ...]
    ops: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    cval: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.ops.shape[0])

    def eval_scalar(self, x: np.ndarray) -> float:
        """Evaluate at one point (coordinates in feature_names order)."""
        value, status = _impl.eval_scalar(self.ops, self.a1, self.a2,
                                          self.cval, x)
        if status != 0:
            raise EvalDomainError(_STATUS_MESSAGES[status])
        return value

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at every row of X."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.float64)
        status = _impl.eval_scalar_batch(self.ops, self.a1, self.a2,
                                         self.cval, X, out)
        if status != 0:
            raise EvalDomainError(_STATUS_MESSAGES[status])
        return out

    def eval_interval(self, xlo: np.ndarray, xhi: np.ndarray) -> tuple[float, float]:
        """Enclosure over the box with per-feature bounds [xlo, xhi].

        Result equals `expr.eval_interval` of the source expression bit for
        bit: the kernels use the same outward-rounded formulas.
        """
        lo, hi, status = _impl.eval_interval(self.ops, self.a1, self.a2,
                                             self.cval, xlo, xhi)
        if status != 0:
            raise EvalDomainError(_STATUS_MESSAGES[status])
        return lo, hi


def compile_tape(e: Expr, feature_names: Sequence[str]) -> Tape:
    """Flatten a ground expression into postorder arrays.

    ``feature_names`` fixes the coordinate order for all later point and
    box arguments.
    """
    names = tuple(feature_names)
    index = {name: i for i, name in enumerate(names)}
    ops: list[int] = []
    a1: list[int] = []
    a2: list[int] = []
    cval: list[float] = []
    memo: dict[Expr, int] = {}

    def emit(op: int, arg1: int, arg2: int, c: float) -> int:
        ops.append(op)
        a1.append(arg1)
        a2.append(arg2)
        cval.append(c)
        return len(ops) - 1

    def rec(node: Expr) -> int:
        reg = memo.get(node)
        if reg is not None:
            return reg
        if isinstance(node, Const):
            reg = emit(OP_CONST, 0, 0, node.value)
        elif isinstance(node, Var):
            if node.name not in index:
                raise ExprError(f"expression uses feature {node.name!r} "
                                f"not among {names}")
            reg = emit(OP_VAR, index[node.name], 0, 0.0)
        elif type(node) in _UNARY_OPS:
            reg = emit(_UNARY_OPS[type(node)], rec(node.arg), 0, 0.0)
        elif type(node) in _BINARY_OPS:
            op = _BINARY_OPS[type(node)]
            left = rec(node.lhs)
            right = rec(node.rhs)
            reg = emit(op, left, right, 0.0)
        elif isinstance(node, Pow):
            reg = emit(OP_POW, rec(node.base), node.exponent, 0.0)
        elif isinstance(node, (FApp, FDeriv)):
            raise NotGroundError(
                f"cannot compile non-ground expression {format_expr(node)}")
        else:
            raise ExprError(f"unknown node {node!r}")
        memo[node] = reg
        return reg

    rec(e)
    return Tape(names,
                np.asarray(ops, dtype=np.int32),
                np.asarray(a1, dtype=np.int32),
                np.asarray(a2, dtype=np.int32),
                np.asarray(cval, dtype=np.float64))
