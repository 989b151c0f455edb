# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: tape evaluation and the full-batch Adam trainer.

Semantics mirror `_kernels_py` entry for entry.  Scalar and interval tape
evaluation perform the same libm calls in the same order as the pure
backend, so those results are bit-identical across backends; the batch
and training routines differ only in summation order (last-ulp effects).

Opcode and status numbers must match `tape.py`.
"""

import numpy as np

from libc.math cimport (INFINITY, M_PI, NAN, ceil, copysign, cos, fabs,
                        floor, isfinite, nextafter, pow, sin, sqrt, tanh)
from libc.stdint cimport int32_t

BACKEND = "compiled"

cdef double TWO_PI = 2.0 * M_PI
cdef double HALF_PI = 0.5 * M_PI


cdef inline double _dn(double x) nogil:
    return nextafter(x, -INFINITY)


cdef inline double _up(double x) nogil:
    return nextafter(x, INFINITY)


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------

cdef int _eval_row(int32_t[::1] ops, int32_t[::1] a1, int32_t[::1] a2,
                   double[::1] cval, double[:, ::1] X, Py_ssize_t row,
                   double[::1] regs) nogil:
    """Evaluate one tape pass for row `row` of X into regs.  Returns status."""
    cdef Py_ssize_t n = ops.shape[0]
    cdef Py_ssize_t i
    cdef int op
    cdef double val, u, den
    for i in range(n):
        op = ops[i]
        if op == 0:                     # CONST
            val = cval[i]
        elif op == 1:                   # VAR
            val = X[row, a1[i]]
        elif op == 2:                   # NEG
            val = -regs[a1[i]]
        elif op == 3:                   # ABS
            val = fabs(regs[a1[i]])
        elif op == 4:                   # SIGN
            u = regs[a1[i]]
            val = 0.0 if u == 0.0 else copysign(1.0, u)
        elif op == 5:                   # SQRT
            u = regs[a1[i]]
            if u < 0.0:
                return 2
            val = sqrt(u)
        elif op == 6:                   # SIN
            val = sin(regs[a1[i]])
        elif op == 7:                   # COS
            val = cos(regs[a1[i]])
        elif op == 8:                   # TANH
            val = tanh(regs[a1[i]])
        elif op == 9:                   # ADD
            val = regs[a1[i]] + regs[a2[i]]
        elif op == 10:                  # SUB
            val = regs[a1[i]] - regs[a2[i]]
        elif op == 11:                  # MUL
            val = regs[a1[i]] * regs[a2[i]]
        elif op == 12:                  # DIV
            den = regs[a2[i]]
            if den == 0.0:
                return 1
            val = regs[a1[i]] / den
        else:                           # POW
            val = pow(regs[a1[i]], <double> a2[i])
        regs[i] = val
    return 0


def eval_scalar(int32_t[::1] ops, int32_t[::1] a1, int32_t[::1] a2,
                double[::1] cval, double[::1] x):
    """Evaluate the tape at one point.  Returns (value, status)."""
    cdef Py_ssize_t n = ops.shape[0]
    regs_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] regs = regs_arr
    cdef double[:, ::1] X = np.reshape(np.ascontiguousarray(x), (1, x.shape[0]))
    cdef int status = _eval_row(ops, a1, a2, cval, X, 0, regs)
    if status != 0:
        return NAN, status
    cdef double out = regs[n - 1]
    if not isfinite(out):
        return out, 3
    return out, 0


def eval_scalar_batch(int32_t[::1] ops, int32_t[::1] a1, int32_t[::1] a2,
                      double[::1] cval, double[:, ::1] X, double[::1] out):
    """Evaluate the tape at every row of X into out.  Returns a status."""
    cdef Py_ssize_t n = ops.shape[0]
    cdef Py_ssize_t rows = X.shape[0]
    regs_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] regs = regs_arr
    cdef Py_ssize_t r
    cdef int status
    cdef bint bad = False
    with nogil:
        for r in range(rows):
            status = _eval_row(ops, a1, a2, cval, X, r, regs)
            if status != 0:
                with gil:
                    return status
            out[r] = regs[n - 1]
            if not isfinite(out[r]):
                bad = True
    if bad:
        return 3
    return 0


# ---------------------------------------------------------------------------
# Interval evaluation
# ---------------------------------------------------------------------------

cdef inline bint _contains_critical(double lo, double hi, double offset) nogil:
    cdef double m = fabs(lo)
    if fabs(hi) > m:
        m = fabs(hi)
    if m < 1.0:
        m = 1.0
    cdef double pad = 4.0 * (nextafter(m, INFINITY) - m)
    cdef double k_min = ceil((lo - offset - pad) / TWO_PI)
    cdef double k_max = floor((hi - offset + pad) / TWO_PI)
    return k_min <= k_max


cdef inline void _sin_enclosure(double lo, double hi,
                                double* out_lo, double* out_hi) nogil:
    cdef double s_lo, s_hi, a, b
    if hi - lo >= TWO_PI:
        out_lo[0] = -1.0
        out_hi[0] = 1.0
        return
    s_lo = sin(lo)
    s_hi = sin(hi)
    a = s_lo if s_lo < s_hi else s_hi
    b = s_lo if s_lo > s_hi else s_hi
    if _contains_critical(lo, hi, HALF_PI):
        b = 1.0
    else:
        b = _up(_up(b))
        if b > 1.0:
            b = 1.0
    if _contains_critical(lo, hi, -HALF_PI):
        a = -1.0
    else:
        a = _dn(_dn(a))
        if a < -1.0:
            a = -1.0
    out_lo[0] = a
    out_hi[0] = b


def eval_interval(int32_t[::1] ops, int32_t[::1] a1, int32_t[::1] a2,
                  double[::1] cval, double[::1] xlo, double[::1] xhi):
    """Enclosure of the tape over the box [xlo, xhi]: (lo, hi, status)."""
    cdef Py_ssize_t n = ops.shape[0]
    rlo_arr = np.empty(n, dtype=np.float64)
    rhi_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] rlo = rlo_arr
    cdef double[::1] rhi = rhi_arr
    cdef Py_ssize_t i, j
    cdef int op, m, status = 0
    cdef double lo, hi, alo, ahi, blo, bhi, p1, p2, p3, p4, t
    with nogil:
        for i in range(n):
            op = ops[i]
            if op == 0:
                lo = cval[i]
                hi = cval[i]
            elif op == 1:
                j = a1[i]
                lo = xlo[j]
                hi = xhi[j]
            elif op == 2:
                j = a1[i]
                lo = -rhi[j]
                hi = -rlo[j]
            elif op == 3:
                j = a1[i]
                alo = rlo[j]
                ahi = rhi[j]
                if alo >= 0.0:
                    lo = alo
                    hi = ahi
                elif ahi <= 0.0:
                    lo = -ahi
                    hi = -alo
                else:
                    lo = 0.0
                    hi = ahi if ahi > -alo else -alo
            elif op == 4:
                j = a1[i]
                alo = rlo[j]
                ahi = rhi[j]
                lo = -1.0 if alo < 0.0 else (0.0 if alo == 0.0 else 1.0)
                hi = -1.0 if ahi < 0.0 else (0.0 if ahi == 0.0 else 1.0)
            elif op == 5:
                j = a1[i]
                if rlo[j] < 0.0:
                    status = 2
                    break
                lo = _dn(sqrt(rlo[j]))
                if lo < 0.0:
                    lo = 0.0
                hi = _up(sqrt(rhi[j]))
            elif op == 6:
                j = a1[i]
                _sin_enclosure(rlo[j], rhi[j], &lo, &hi)
            elif op == 7:
                j = a1[i]
                _sin_enclosure(_dn(rlo[j] + HALF_PI), _up(rhi[j] + HALF_PI),
                               &lo, &hi)
            elif op == 8:
                j = a1[i]
                lo = _dn(_dn(tanh(rlo[j])))
                if lo < -1.0:
                    lo = -1.0
                hi = _up(_up(tanh(rhi[j])))
                if hi > 1.0:
                    hi = 1.0
            elif op == 9:
                lo = _dn(rlo[a1[i]] + rlo[a2[i]])
                hi = _up(rhi[a1[i]] + rhi[a2[i]])
            elif op == 10:
                lo = _dn(rlo[a1[i]] - rhi[a2[i]])
                hi = _up(rhi[a1[i]] - rlo[a2[i]])
            elif op == 11:
                alo = rlo[a1[i]]
                ahi = rhi[a1[i]]
                blo = rlo[a2[i]]
                bhi = rhi[a2[i]]
                p1 = alo * blo
                p2 = alo * bhi
                p3 = ahi * blo
                p4 = ahi * bhi
                lo = p1
                if p2 < lo: lo = p2
                if p3 < lo: lo = p3
                if p4 < lo: lo = p4
                hi = p1
                if p2 > hi: hi = p2
                if p3 > hi: hi = p3
                if p4 > hi: hi = p4
                lo = _dn(lo)
                hi = _up(hi)
            elif op == 12:
                blo = rlo[a2[i]]
                bhi = rhi[a2[i]]
                if blo <= 0.0 and 0.0 <= bhi:
                    status = 1
                    break
                alo = rlo[a1[i]]
                ahi = rhi[a1[i]]
                p1 = alo / blo
                p2 = alo / bhi
                p3 = ahi / blo
                p4 = ahi / bhi
                lo = p1
                if p2 < lo: lo = p2
                if p3 < lo: lo = p3
                if p4 < lo: lo = p4
                hi = p1
                if p2 > hi: hi = p2
                if p3 > hi: hi = p3
                if p4 > hi: hi = p4
                lo = _dn(lo)
                hi = _up(hi)
            else:
                j = a1[i]
                alo = rlo[j]
                ahi = rhi[j]
                m = a2[i]
                if m == 0:
                    lo = 1.0
                    hi = 1.0
                elif m == 1:
                    lo = alo
                    hi = ahi
                elif m % 2 == 1 or alo >= 0.0:
                    lo = _dn(_dn(pow(alo, <double> m)))
                    hi = _up(_up(pow(ahi, <double> m)))
                elif ahi <= 0.0:
                    lo = _dn(_dn(pow(ahi, <double> m)))
                    hi = _up(_up(pow(alo, <double> m)))
                else:
                    lo = 0.0
                    t = ahi if ahi > -alo else -alo
                    hi = _up(_up(pow(t, <double> m)))
            if not (isfinite(lo) and isfinite(hi)):
                status = 3
                break
            rlo[i] = lo
            rhi[i] = hi
    if status == 3:
        return lo, hi, 3
    if status != 0:
        return NAN, NAN, status
    return rlo[n - 1], rhi[n - 1], 0


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def adam_fit(double[:, ::1] X, double[::1] y, int32_t[::1] dims, double[::1] w,
             int activation, double lr, double beta1, double beta2,
             double adam_eps, long max_epochs, double fit_tol,
             long patience, double min_rel_improve):
    """Full-batch Adam on an MLP with linear scalar output.

    Same contract as the pure backend: ``w`` flat (per layer weight matrix
    row-major, then bias), updated in place with the best-loss snapshot;
    returns (epochs_run, best_max_residual, best_mse, status).
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef int L = dims.shape[0] - 1
    cdef Py_ssize_t P = w.shape[0]
    cdef int l, j, k, d_in, d_out
    cdef Py_ssize_t i, p, total

    a_off_arr = np.zeros(L + 1, dtype=np.int64)
    w_off_arr = np.zeros(L, dtype=np.int64)
    b_off_arr = np.zeros(L, dtype=np.int64)
    cdef long[::1] a_off = a_off_arr
    cdef long[::1] w_off = w_off_arr
    cdef long[::1] b_off = b_off_arr

    total = 0
    for l in range(L + 1):
        a_off[l] = total
        total += n * dims[l]
    cdef Py_ssize_t off = 0
    for l in range(L):
        w_off[l] = off
        off += dims[l] * dims[l + 1]
        b_off[l] = off
        off += dims[l + 1]

    act_arr = np.empty(total, dtype=np.float64)
    delta_arr = np.empty(total, dtype=np.float64)
    m_arr = np.zeros(P, dtype=np.float64)
    v_arr = np.zeros(P, dtype=np.float64)
    grad_arr = np.empty(P, dtype=np.float64)
    best_arr = np.empty(P, dtype=np.float64)
    cdef double[::1] act = act_arr
    cdef double[::1] delta = delta_arr
    cdef double[::1] m = m_arr
    cdef double[::1] v = v_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] best = best_arr

    cdef double best_mse = INFINITY
    cdef double best_max_resid = INFINITY
    cdef double plateau_ref = INFINITY
    cdef long last_improve = 0
    cdef double b1t = 1.0
    cdef double b2t = 1.0
    cdef int status = 1
    cdef long epoch, epochs = 0
    cdef double s, r, mse, max_resid, g, a_ik, deriv, back

    for p in range(P):
        best[p] = w[p]
    with nogil:
        for i in range(n):
            for k in range(dims[0]):
                act[i * dims[0] + k] = X[i, k]

        for epoch in range(max_epochs):
            epochs = epoch + 1
            # forward
            for l in range(L):
                d_in = dims[l]
                d_out = dims[l + 1]
                for i in range(n):
                    for j in range(d_out):
                        s = w[b_off[l] + j]
                        for k in range(d_in):
                            s += act[a_off[l] + i * d_in + k] * w[w_off[l] + k * d_out + j]
                        if l < L - 1:
                            if activation == 0:
                                s = tanh(s)
                            elif s < 0.0:
                                s = 0.0
                        act[a_off[l + 1] + i * d_out + j] = s
            # loss
            mse = 0.0
            max_resid = 0.0
            for i in range(n):
                r = act[a_off[L] + i] - y[i]
                mse += r * r
                if fabs(r) > max_resid:
                    max_resid = fabs(r)
            mse /= n
            if not isfinite(mse):
                status = 3
                break
            if mse < best_mse:
                best_mse = mse
                best_max_resid = max_resid
                for p in range(P):
                    best[p] = w[p]
            if max_resid <= fit_tol:
                best_mse = mse
                best_max_resid = max_resid
                for p in range(P):
                    best[p] = w[p]
                status = 0
                break
            if mse < plateau_ref * (1.0 - min_rel_improve):
                plateau_ref = mse
                last_improve = epoch
            elif epoch - last_improve >= patience:
                status = 2
                break
            # backward
            for i in range(n):
                delta[a_off[L] + i] = (2.0 / n) * (act[a_off[L] + i] - y[i])
            for l in range(L - 1, -1, -1):
                d_in = dims[l]
                d_out = dims[l + 1]
                for j in range(d_out):
                    g = 0.0
                    for i in range(n):
                        g += delta[a_off[l + 1] + i * d_out + j]
                    grad[b_off[l] + j] = g
                for k in range(d_in):
                    for j in range(d_out):
                        g = 0.0
                        for i in range(n):
                            g += act[a_off[l] + i * d_in + k] * delta[a_off[l + 1] + i * d_out + j]
                        grad[w_off[l] + k * d_out + j] = g
                if l > 0:
                    for i in range(n):
                        for k in range(d_in):
                            back = 0.0
                            for j in range(d_out):
                                back += delta[a_off[l + 1] + i * d_out + j] * w[w_off[l] + k * d_out + j]
                            a_ik = act[a_off[l] + i * d_in + k]
                            if activation == 0:
                                deriv = 1.0 - a_ik * a_ik
                            else:
                                deriv = 1.0 if a_ik > 0.0 else 0.0
                            delta[a_off[l] + i * d_in + k] = back * deriv
            # adam step
            b1t *= beta1
            b2t *= beta2
            for p in range(P):
                g = grad[p]
                m[p] += (1.0 - beta1) * (g - m[p])
                v[p] += (1.0 - beta2) * (g * g - v[p])
                w[p] -= lr * (m[p] / (1.0 - b1t)) / (sqrt(v[p] / (1.0 - b2t)) + adam_eps)

        for p in range(P):
            w[p] = best[p]
    return epochs, best_max_resid, best_mse, status
