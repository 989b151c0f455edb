"""Pure-Python/numpy kernels: the fallback when the compiled extension is
unavailable (or when LGML_PURE_PYTHON=1).

Implements the same four entry points as the Cython module `_kernels`:
scalar tape evaluation, batched tape evaluation, interval tape evaluation,
and the full-batch Adam trainer.  Scalar and interval evaluation use the
same libm calls in the same order as the compiled kernels, so their
results are bit-identical across backends.  The batch and training
routines are vectorized with numpy; those may differ from the compiled
loops in the last few ulps.

Opcode and status numbers must match `tape.py`.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "pure"

_INF = math.inf
_TWO_PI = 2.0 * math.pi
_HALF_PI = 0.5 * math.pi


def _dn(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------

def eval_scalar(ops, a1, a2, cval, x):
    """Evaluate the tape at one point.  Returns (value, status)."""
    ops_l = ops.tolist()
    a1_l = a1.tolist()
    a2_l = a2.tolist()
    cval_l = cval.tolist()
    x_l = x.tolist()
    n = len(ops_l)
    regs = [0.0] * n
    for i in range(n):
        op = ops_l[i]
        if op == 0:                     # CONST
            val = cval_l[i]
        elif op == 1:                   # VAR
            val = x_l[a1_l[i]]
        elif op == 2:                   # NEG
            val = -regs[a1_l[i]]
        elif op == 3:                   # ABS
            val = abs(regs[a1_l[i]])
        elif op == 4:                   # SIGN
            u = regs[a1_l[i]]
            val = 0.0 if u == 0.0 else math.copysign(1.0, u)
        elif op == 5:                   # SQRT
            u = regs[a1_l[i]]
            if u < 0.0:
                return math.nan, 2
            val = math.sqrt(u)
        elif op == 6:                   # SIN
            u = regs[a1_l[i]]
            # C sin(inf) is a quiet NaN; math.sin raises instead.
            val = math.sin(u) if math.isfinite(u) else math.nan
        elif op == 7:                   # COS
            u = regs[a1_l[i]]
            val = math.cos(u) if math.isfinite(u) else math.nan
        elif op == 8:                   # TANH
            val = math.tanh(regs[a1_l[i]])
        elif op == 9:                   # ADD
            val = regs[a1_l[i]] + regs[a2_l[i]]
        elif op == 10:                  # SUB
            val = regs[a1_l[i]] - regs[a2_l[i]]
        elif op == 11:                  # MUL
            val = regs[a1_l[i]] * regs[a2_l[i]]
        elif op == 12:                  # DIV
            den = regs[a2_l[i]]
            if den == 0.0:
                return math.nan, 1
            val = regs[a1_l[i]] / den
        else:                           # POW
            try:
                val = math.pow(regs[a1_l[i]], a2_l[i])
            except OverflowError:
                # C pow overflows to +/-HUGE_VAL instead of trapping.
                neg = regs[a1_l[i]] < 0.0 and a2_l[i] % 2 == 1
                val = -math.inf if neg else math.inf
        regs[i] = val
    out = regs[n - 1]
    if not math.isfinite(out):
        return out, 3
    return out, 0


def eval_scalar_batch(ops, a1, a2, cval, X, out):
    """Evaluate the tape at every row of X into out.  Returns a status."""
    n = ops.shape[0]
    regs: list[np.ndarray | None] = [None] * n
    for i in range(n):
        op = int(ops[i])
        if op == 0:
            val = np.full(X.shape[0], cval[i])
        elif op == 1:
            val = X[:, a1[i]].copy()
        elif op == 2:
            val = -regs[a1[i]]
        elif op == 3:
            val = np.abs(regs[a1[i]])
        elif op == 4:
            val = np.sign(regs[a1[i]])
        elif op == 5:
            u = regs[a1[i]]
            if np.any(u < 0.0):
                return 2
            val = np.sqrt(u)
        elif op == 6:
            val = np.sin(regs[a1[i]])
        elif op == 7:
            val = np.cos(regs[a1[i]])
        elif op == 8:
            val = np.tanh(regs[a1[i]])
        elif op == 9:
            val = regs[a1[i]] + regs[a2[i]]
        elif op == 10:
            val = regs[a1[i]] - regs[a2[i]]
        elif op == 11:
            val = regs[a1[i]] * regs[a2[i]]
        elif op == 12:
            den = regs[a2[i]]
            if np.any(den == 0.0):
                return 1
            val = regs[a1[i]] / den
        else:
            with np.errstate(over="ignore"):
                val = np.power(regs[a1[i]], int(a2[i]))
        regs[i] = val
    out[:] = regs[n - 1]
    if not np.all(np.isfinite(out)):
        return 3
    return 0


# ---------------------------------------------------------------------------
# Interval evaluation
# ---------------------------------------------------------------------------

def eval_interval(ops, a1, a2, cval, xlo, xhi):
    """Enclosure of the tape over the box [xlo, xhi].

    Returns (lo, hi, status).  Formulas mirror `intervals.Interval`
    operation by operation (one ulp outward for correctly-rounded ops,
    two for libm transcendentals), so the result equals the reference
    enclosure exactly.
    """
    ops_l = ops.tolist()
    a1_l = a1.tolist()
    a2_l = a2.tolist()
    cval_l = cval.tolist()
    xlo_l = xlo.tolist()
    xhi_l = xhi.tolist()
    n = len(ops_l)
    rlo = [0.0] * n
    rhi = [0.0] * n
    for i in range(n):
        op = ops_l[i]
        if op == 0:
            lo = hi = cval_l[i]
        elif op == 1:
            j = a1_l[i]
            lo, hi = xlo_l[j], xhi_l[j]
        elif op == 2:
            j = a1_l[i]
            lo, hi = -rhi[j], -rlo[j]
        elif op == 3:
            j = a1_l[i]
            alo, ahi = rlo[j], rhi[j]
            if alo >= 0.0:
                lo, hi = alo, ahi
            elif ahi <= 0.0:
                lo, hi = -ahi, -alo
            else:
                lo, hi = 0.0, max(-alo, ahi)
        elif op == 4:
            j = a1_l[i]
            alo, ahi = rlo[j], rhi[j]
            lo = -1.0 if alo < 0.0 else (0.0 if alo == 0.0 else 1.0)
            hi = -1.0 if ahi < 0.0 else (0.0 if ahi == 0.0 else 1.0)
        elif op == 5:
            j = a1_l[i]
            if rlo[j] < 0.0:
                return math.nan, math.nan, 2
            lo = max(0.0, _dn(math.sqrt(rlo[j])))
            hi = _up(math.sqrt(rhi[j]))
        elif op == 6:
            j = a1_l[i]
            lo, hi = _sin_enclosure(rlo[j], rhi[j])
        elif op == 7:
            j = a1_l[i]
            lo, hi = _sin_enclosure(_dn(rlo[j] + _HALF_PI), _up(rhi[j] + _HALF_PI))
        elif op == 8:
            j = a1_l[i]
            lo = max(-1.0, _dn(_dn(math.tanh(rlo[j]))))
            hi = min(1.0, _up(_up(math.tanh(rhi[j]))))
        elif op == 9:
            lo = _dn(rlo[a1_l[i]] + rlo[a2_l[i]])
            hi = _up(rhi[a1_l[i]] + rhi[a2_l[i]])
        elif op == 10:
            lo = _dn(rlo[a1_l[i]] - rhi[a2_l[i]])
            hi = _up(rhi[a1_l[i]] - rlo[a2_l[i]])
        elif op == 11:
            alo, ahi = rlo[a1_l[i]], rhi[a1_l[i]]
            blo, bhi = rlo[a2_l[i]], rhi[a2_l[i]]
            p1, p2, p3, p4 = alo * blo, alo * bhi, ahi * blo, ahi * bhi
            lo = _dn(min(p1, p2, p3, p4))
            hi = _up(max(p1, p2, p3, p4))
        elif op == 12:
            alo, ahi = rlo[a1_l[i]], rhi[a1_l[i]]
            blo, bhi = rlo[a2_l[i]], rhi[a2_l[i]]
            if blo <= 0.0 <= bhi:
                return math.nan, math.nan, 1
            q1, q2, q3, q4 = alo / blo, alo / bhi, ahi / blo, ahi / bhi
            lo = _dn(min(q1, q2, q3, q4))
            hi = _up(max(q1, q2, q3, q4))
        else:
            j = a1_l[i]
            alo, ahi = rlo[j], rhi[j]
            m = a2_l[i]
            if m == 0:
                lo = hi = 1.0
            elif m == 1:
                lo, hi = alo, ahi
            elif m % 2 == 1 or alo >= 0.0:
                lo = _dn(_dn(math.pow(alo, m)))
                hi = _up(_up(math.pow(ahi, m)))
            elif ahi <= 0.0:
                lo = _dn(_dn(math.pow(ahi, m)))
                hi = _up(_up(math.pow(alo, m)))
            else:
                lo = 0.0
                hi = _up(_up(math.pow(max(-alo, ahi), m)))
        if not (math.isfinite(lo) and math.isfinite(hi)):
            return lo, hi, 3
        rlo[i] = lo
        rhi[i] = hi
    return rlo[n - 1], rhi[n - 1], 0


def _contains_critical(lo: float, hi: float, offset: float) -> bool:
    m = max(abs(lo), abs(hi), 1.0)
    pad = 4.0 * (math.nextafter(m, _INF) - m)
    k_min = math.ceil((lo - offset - pad) / _TWO_PI)
    k_max = math.floor((hi - offset + pad) / _TWO_PI)
    return k_min <= k_max


def _sin_enclosure(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo >= _TWO_PI:
        return -1.0, 1.0
    s_lo = math.sin(lo)
    s_hi = math.sin(hi)
    out_lo = min(s_lo, s_hi)
    out_hi = max(s_lo, s_hi)
    if _contains_critical(lo, hi, _HALF_PI):
        out_hi = 1.0
    else:
        out_hi = min(1.0, _up(_up(out_hi)))
    if _contains_critical(lo, hi, -_HALF_PI):
        out_lo = -1.0
    else:
        out_lo = max(-1.0, _dn(_dn(out_lo)))
    return out_lo, out_hi


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def adam_fit(X, y, dims, w, activation, lr, beta1, beta2, adam_eps,
             max_epochs, fit_tol, patience, min_rel_improve):
    """Full-batch Adam on an MLP with linear scalar output.

    ``w`` holds all parameters flat (per layer: weight matrix row-major,
    then bias) and is updated in place with the best-loss snapshot.
    Returns (epochs_run, best_max_residual, best_mse, status) with status
    0 = hit fit_tol, 1 = epoch budget done, 2 = loss plateau, 3 = diverged.
    """
    n = X.shape[0]
    n_layers = len(dims) - 1

    weights = []
    biases = []
    off = 0
    for layer in range(n_layers):
        d_in, d_out = int(dims[layer]), int(dims[layer + 1])
        weights.append(w[off:off + d_in * d_out].reshape(d_in, d_out))
        off += d_in * d_out
        biases.append(w[off:off + d_out])
        off += d_out

    m = np.zeros_like(w)
    v = np.zeros_like(w)
    grad = np.empty_like(w)
    best = w.copy()
    best_mse = math.inf
    best_max_resid = math.inf
    plateau_ref = math.inf
    last_improve = 0
    b1t = 1.0
    b2t = 1.0
    status = 1
    epochs = 0

    for epoch in range(max_epochs):
        epochs = epoch + 1
        acts = [X]
        a = X
        for layer in range(n_layers):
            z = a @ weights[layer] + biases[layer]
            if layer < n_layers - 1:
                a = np.tanh(z) if activation == 0 else np.maximum(z, 0.0)
            else:
                a = z
            acts.append(a)
        resid = acts[-1][:, 0] - y
        mse = float(np.mean(resid * resid))
        if not math.isfinite(mse):
            status = 3
            break
        max_resid = float(np.max(np.abs(resid)))
        if mse < best_mse:
            best_mse = mse
            best_max_resid = max_resid
            best[:] = w
        if max_resid <= fit_tol:
            best_mse = mse
            best_max_resid = max_resid
            best[:] = w
            status = 0
            break
        if mse < plateau_ref * (1.0 - min_rel_improve):
            plateau_ref = mse
            last_improve = epoch
        elif epoch - last_improve >= patience:
            status = 2
            break

        delta = (2.0 / n) * resid[:, None]
        off = len(w)
        for layer in range(n_layers - 1, -1, -1):
            d_out = len(biases[layer])
            off -= d_out
            grad[off:off + d_out] = delta.sum(axis=0)
            gw = acts[layer].T @ delta
            d_in = weights[layer].shape[0]
            off -= d_in * d_out
            grad[off:off + d_in * d_out] = gw.ravel()
            if layer > 0:
                back = delta @ weights[layer].T
                a_prev = acts[layer]
                if activation == 0:
                    delta = back * (1.0 - a_prev * a_prev)
                else:
                    delta = back * (a_prev > 0.0)

        b1t *= beta1
        b2t *= beta2
        m += (1.0 - beta1) * (grad - m)
        v += (1.0 - beta2) * (grad * grad - v)
        step = lr * (m / (1.0 - b1t)) / (np.sqrt(v / (1.0 - b2t)) + adam_eps)
        w -= step

    w[:] = best
    return epochs, best_max_resid, best_mse, status
