# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused single-pass versions of the kernels in ``_kernels_py``.

Same signatures and return shapes. Inputs may be float32 or float64 and
are flattened internally; row kernels work along the last axis.
"""

import numpy as np

from libc.math cimport exp, expf, sqrt, sqrtf, tanh

ctypedef fused real:
    float
    double

cdef double GELU_C = 0.7978845608028654
cdef double GELU_A = 0.044715


cdef inline real _tanh(real x) noexcept nogil:
    # libm tanhf is ~10x slower than expf; |x| > 15 is +-1 in float32 anyway
    if real is float:
        x = min(max(x, <real>-15.0), <real>15.0)
        return <real>1.0 - <real>2.0 / (expf(<real>2.0 * x) + <real>1.0)
    else:
        return tanh(x)


cdef inline real _exp(real x) noexcept nogil:
    if real is float:
        return expf(x)
    else:
        return exp(x)


cdef inline real _sqrt(real x) noexcept nogil:
    if real is float:
        return sqrtf(x)
    else:
        return sqrt(x)


def _flat(a):
    return np.ascontiguousarray(a).reshape(-1)


def _last(a):
    # wraparound is off module-wide, so no negative indexing even on tuples
    return a.shape[a.ndim - 1]


cdef void _gelu_fwd(real[::1] x, real[::1] y, real[::1] t) noexcept nogil:
    cdef Py_ssize_t i
    cdef real v, th
    cdef real c = <real>GELU_C
    cdef real a = <real>GELU_A
    for i in range(x.shape[0]):
        v = x[i]
        th = _tanh(c * (v + a * v * v * v))
        t[i] = th
        y[i] = <real>0.5 * v * (<real>1.0 + th)


cdef void _gelu_bwd(real[::1] x, real[::1] t, real[::1] g, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i
    cdef real v, th
    cdef real c = <real>GELU_C
    cdef real a3 = <real>(3.0 * GELU_A)
    for i in range(x.shape[0]):
        v = x[i]
        th = t[i]
        out[i] = g[i] * (<real>0.5 * (<real>1.0 + th)
                         + <real>0.5 * v * (<real>1.0 - th * th) * c * (<real>1.0 + a3 * v * v))


def gelu_forward(x):
    xf = _flat(x)
    y = np.empty_like(xf)
    t = np.empty_like(xf)
    if xf.dtype == np.float32:
        _gelu_fwd[float](xf, y, t)
    else:
        _gelu_fwd[double](xf, y, t)
    return y.reshape(x.shape), t.reshape(x.shape)


def gelu_backward(x, t, g):
    xf = _flat(x)
    out = np.empty_like(xf)
    gf = _flat(g).astype(xf.dtype, copy=False)
    if xf.dtype == np.float32:
        _gelu_bwd[float](xf, _flat(t), gf, out)
    else:
        _gelu_bwd[double](xf, _flat(t), gf, out)
    return out.reshape(x.shape)


cdef void _softmax_fwd(real[::1] s, real[::1] y, Py_ssize_t n, bint causal) noexcept nogil:
    cdef Py_ssize_t r, j, lim, o
    cdef Py_ssize_t rows = s.shape[0] // n
    cdef real m, total, e
    for r in range(rows):
        o = r * n
        lim = (r % n) + 1 if causal else n
        m = s[o]
        for j in range(1, lim):
            if s[o + j] > m:
                m = s[o + j]
        total = 0
        for j in range(lim):
            e = _exp(s[o + j] - m)
            y[o + j] = e
            total = total + e
        for j in range(lim):
            y[o + j] = y[o + j] / total
        for j in range(lim, n):
            y[o + j] = 0


cdef void _softmax_bwd(real[::1] y, real[::1] g, real[::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t r, j, o
    cdef real dot
    for r in range(y.shape[0] // n):
        o = r * n
        dot = 0
        for j in range(n):
            dot = dot + g[o + j] * y[o + j]
        for j in range(n):
            out[o + j] = y[o + j] * (g[o + j] - dot)


def softmax_forward(s, causal):
    sf = _flat(s)
    y = np.empty_like(sf)
    n = _last(s)
    if sf.dtype == np.float32:
        _softmax_fwd[float](sf, y, n, causal)
    else:
        _softmax_fwd[double](sf, y, n, causal)
    return y.reshape(s.shape)


def softmax_backward(y, g):
    yf = _flat(y)
    gf = _flat(g).astype(yf.dtype, copy=False)
    out = np.empty_like(yf)
    n = _last(y)
    if yf.dtype == np.float32:
        _softmax_bwd[float](yf, gf, out, n)
    else:
        _softmax_bwd[double](yf, gf, out, n)
    return out.reshape(y.shape)


cdef void _ln_fwd(real[::1] x, real[::1] xhat, real[::1] rstd, Py_ssize_t d, double eps) noexcept nogil:
    cdef Py_ssize_t r, j, o
    cdef double mu, var, c, inv
    for r in range(x.shape[0] // d):
        o = r * d
        mu = 0
        for j in range(d):
            mu += x[o + j]
        mu /= d
        var = 0
        for j in range(d):
            c = x[o + j] - mu
            var += c * c
        inv = 1.0 / sqrt(var / d + eps)
        rstd[r] = <real>inv
        for j in range(d):
            xhat[o + j] = <real>((x[o + j] - mu) * inv)


cdef void _ln_bwd(real[::1] xhat, real[::1] rstd, real[::1] g, real[::1] out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t r, j, o
    cdef double mg, mgx
    for r in range(xhat.shape[0] // d):
        o = r * d
        mg = 0
        mgx = 0
        for j in range(d):
            mg += g[o + j]
            mgx += g[o + j] * xhat[o + j]
        mg /= d
        mgx /= d
        for j in range(d):
            out[o + j] = <real>(rstd[r] * (g[o + j] - mg - xhat[o + j] * mgx))


def layer_norm_forward(x, eps):
    xf = _flat(x)
    d = _last(x)
    xhat = np.empty_like(xf)
    rstd = np.empty(xf.shape[0] // d, dtype=xf.dtype)
    if xf.dtype == np.float32:
        _ln_fwd[float](xf, xhat, rstd, d, eps)
    else:
        _ln_fwd[double](xf, xhat, rstd, d, eps)
    return xhat.reshape(x.shape), rstd.reshape(x.shape[:x.ndim - 1] + (1,))


def layer_norm_backward(xhat, rstd, gxhat):
    xf = _flat(xhat)
    gf = _flat(gxhat).astype(xf.dtype, copy=False)
    out = np.empty_like(xf)
    if xf.dtype == np.float32:
        _ln_bwd[float](xf, _flat(rstd), gf, out, _last(xhat))
    else:
        _ln_bwd[double](xf, _flat(rstd), gf, out, _last(xhat))
    return out.reshape(xhat.shape)
