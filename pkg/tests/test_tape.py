"""Tape compilation: flat-array evaluation must agree with the AST walker,
and the compiled and pure kernel backends must be interchangeable."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_box, random_ground_expr, random_point_in
from lgml.expr import (Add, Const, Div, EvalDomainError, ExprError,
                       FApp, Mul, NotGroundError, Pow, Sqrt, Var,
                       eval_interval, eval_point, parse_expr)
from lgml.intervals import Box, Interval
from lgml.tape import backend_name, compile_tape

try:
    from lgml import _kernels as _compiled
except ImportError:
    _compiled = None
from lgml import _kernels_py as _pure

NAMES = ("x", "y")


def coords(point):
    return np.array([point[n] for n in NAMES], dtype=np.float64)


@given(st.integers(0, 10 ** 6))
def test_scalar_matches_ast_walker(seed):
    rng = np.random.default_rng(seed)
    e = random_ground_expr(rng, NAMES, depth=3)
    tape = compile_tape(e, NAMES)
    box = random_box(rng, NAMES)
    for _ in range(4):
        p = random_point_in(rng, box)
        assert tape.eval_scalar(coords(p)) == eval_point(e, p)


@given(st.integers(0, 10 ** 6))
def test_batch_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    e = random_ground_expr(rng, NAMES, depth=3)
    tape = compile_tape(e, NAMES)
    X = rng.uniform(-2, 2, size=(16, len(NAMES)))
    got = tape.eval_batch(X)
    want = np.array([tape.eval_scalar(row) for row in X])
    assert np.array_equal(got, want)


@given(st.integers(0, 10 ** 6))
def test_interval_matches_ast_walker(seed):
    rng = np.random.default_rng(seed)
    e = random_ground_expr(rng, NAMES, depth=3)
    tape = compile_tape(e, NAMES)
    box = random_box(rng, NAMES)
    lo = np.array([box[n].lo for n in NAMES])
    hi = np.array([box[n].hi for n in NAMES])
    want = eval_interval(e, box)
    got_lo, got_hi = tape.eval_interval(lo, hi)
    assert (got_lo, got_hi) == (want.lo, want.hi)


def test_shared_subtrees_compile_once():
    inner = parse_expr("sin(x) + cos(y)")
    tape = compile_tape(Mul(inner, inner), NAMES)
    # x, y, sin, cos, add, mul: six entries, not eleven.
    assert tape.n_nodes == 6


def test_compile_rejects_non_ground():
    with pytest.raises(NotGroundError):
        compile_tape(FApp((Var("x"),)), NAMES)


def test_compile_rejects_unknown_feature():
    with pytest.raises(ExprError):
        compile_tape(Var("z"), NAMES)


def test_domain_error_statuses():
    div = compile_tape(Div(Const(1.0), Var("x")), ("x",))
    with pytest.raises(EvalDomainError, match="division by zero"):
        div.eval_scalar(np.array([0.0]))
    sqrt = compile_tape(Sqrt(Var("x")), ("x",))
    with pytest.raises(EvalDomainError, match="sqrt"):
        sqrt.eval_scalar(np.array([-1.0]))
    big = compile_tape(Pow(Const(1e200), 3), ("x",))
    with pytest.raises(EvalDomainError, match="non-finite"):
        big.eval_scalar(np.array([0.0]))


def test_batch_surfaces_domain_errors():
    div = compile_tape(Div(Const(1.0), Var("x")), ("x",))
    with pytest.raises(EvalDomainError):
        div.eval_batch(np.array([[1.0], [0.0]]))


def test_backend_name_reports():
    assert backend_name() in ("compiled", "pure")


@pytest.mark.skipif(_compiled is None, reason="compiled kernels unavailable")
@given(st.integers(0, 10 ** 6))
def test_backends_agree_bitwise(seed):
    rng = np.random.default_rng(seed)
    e = random_ground_expr(rng, NAMES, depth=3)
    tape = compile_tape(e, NAMES)
    box = random_box(rng, NAMES)
    lo = np.array([box[n].lo for n in NAMES])
    hi = np.array([box[n].hi for n in NAMES])
    x = coords(random_point_in(rng, box))
    args = (tape.ops, tape.a1, tape.a2, tape.cval)
    assert _compiled.eval_scalar(*args, x) == _pure.eval_scalar(*args, x)
    assert _compiled.eval_interval(*args, lo, hi) == _pure.eval_interval(*args, lo, hi)


@pytest.mark.skipif(_compiled is None, reason="compiled kernels unavailable")
def test_adam_backends_agree():
    # The C loops and numpy reductions round in different orders, so the
    # backends agree to ulps, not bitwise; determinism is per backend.
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(8, 1))
    y = np.sin(X[:, 0])
    dims = np.array([1, 3, 3, 1], dtype=np.int32)
    n_params = sum(int(a * b + b) for a, b in zip(dims, dims[1:]))
    w0 = rng.uniform(-0.5, 0.5, size=n_params)
    results = []
    for impl in (_compiled, _pure):
        w = w0.copy()
        out = impl.adam_fit(X, y, dims, w, 0, 1e-2, 0.9, 0.999, 1e-8,
                            500, 1e-3, 0, 1e-3)
        results.append((out, w))
    (out_c, w_c), (out_p, w_p) = results
    assert out_c[0] == out_p[0] and out_c[3] == out_p[3]
    assert out_c[1] == pytest.approx(out_p[1], abs=1e-12)
    assert out_c[2] == pytest.approx(out_p[2], abs=1e-12)
    assert np.allclose(w_c, w_p, atol=1e-12, rtol=0.0)


def test_adam_reduces_loss():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(12, 1))
    y = 0.5 * X[:, 0] + 0.1
    dims = np.array([1, 3, 1], dtype=np.int32)
    n_params = 1 * 3 + 3 + 3 * 1 + 1
    w = rng.uniform(-0.5, 0.5, size=n_params)

    def mse(params):
        a = X
        w1 = params[:3].reshape(1, 3)
        b1 = params[3:6]
        w2 = params[6:9].reshape(3, 1)
        b2 = params[9:]
        pred = (np.tanh(a @ w1 + b1) @ w2 + b2)[:, 0]
        return float(np.mean((pred - y) ** 2))

    before = mse(w)
    epochs, max_resid, best_mse, status = _pure.adam_fit(
        X, y, dims, w, 0, 1e-2, 0.9, 0.999, 1e-8, 2000, 1e-4, 0, 1e-3)
    assert best_mse < before
    assert mse(w) == pytest.approx(best_mse, rel=1e-9)
    assert status in (0, 1, 2)
    assert epochs <= 2000
