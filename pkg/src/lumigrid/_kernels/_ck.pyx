# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the training hot spots.

Fused single-pass loops (OpenMP across rows) for the elementwise/reduction
work that numpy spreads over several temporaries: causal softmax, layernorm,
GELU, and the Adam update.  Matmuls stay in BLAS.  Call contracts match
``lumigrid._kernels.pure``.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

ctypedef fused real:
    float
    double

cdef double GELU_C = 0.7978845608028654   # sqrt(2/pi)
cdef double GELU_A = 0.044715


def causal_softmax(real[:, :, ::1] scores):
    """Row softmax over (R, T, T) scores, in place; query t sees keys 0..t."""
    cdef Py_ssize_t R = scores.shape[0], T = scores.shape[1]
    cdef Py_ssize_t r, t, j, n
    cdef double mx, s, e
    for r in prange(R, nogil=True, schedule="static"):
        for t in range(T):
            n = t + 1
            mx = scores[r, t, 0]
            for j in range(1, n):
                if scores[r, t, j] > mx:
                    mx = scores[r, t, j]
            s = 0.0
            for j in range(n):
                e = exp(<double> scores[r, t, j] - mx)
                scores[r, t, j] = <real> e
                s = s + e
            for j in range(n):
                scores[r, t, j] = <real> (scores[r, t, j] / s)
            for j in range(n, T):
                scores[r, t, j] = <real> 0.0
    return np.asarray(scores)


def softmax_backward(real[:, :, ::1] probs, real[:, :, ::1] dprobs):
    """dscores = p * (dp - sum(dp * p)); overwrites and returns ``dprobs``."""
    cdef Py_ssize_t R = probs.shape[0], T = probs.shape[1]
    cdef Py_ssize_t r, t, j
    cdef double inner
    for r in prange(R, nogil=True, schedule="static"):
        for t in range(T):
            inner = 0.0
            for j in range(T):
                inner = inner + (<double> probs[r, t, j]) * (<double> dprobs[r, t, j])
            for j in range(T):
                dprobs[r, t, j] = <real> ((<double> probs[r, t, j])
                                          * ((<double> dprobs[r, t, j]) - inner))
    return np.asarray(dprobs)


def layernorm_forward(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    """Normalize rows of (N, E); returns (y, mean, rstd)."""
    cdef Py_ssize_t N = x.shape[0], E = x.shape[1]
    y_arr = np.empty((N, E), dtype=np.asarray(x).dtype)
    mean_arr = np.empty(N, dtype=np.asarray(x).dtype)
    rstd_arr = np.empty(N, dtype=np.asarray(x).dtype)
    cdef real[:, ::1] y = y_arr
    cdef real[::1] mean = mean_arr
    cdef real[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double m, v, d, rs
    for i in prange(N, nogil=True, schedule="static"):
        m = 0.0
        for j in range(E):
            m = m + <double> x[i, j]
        m = m / E
        v = 0.0
        for j in range(E):
            d = (<double> x[i, j]) - m
            v = v + d * d
        v = v / E
        rs = 1.0 / sqrt(v + eps)
        mean[i] = <real> m
        rstd[i] = <real> rs
        for j in range(E):
            y[i, j] = <real> ((((<double> x[i, j]) - m) * rs) * (<double> gain[j])
                              + (<double> bias[j]))
    return y_arr, mean_arr, rstd_arr


def layernorm_backward(real[:, ::1] x, real[::1] gain, real[::1] mean,
                       real[::1] rstd, real[:, ::1] dy):
    """Returns (dx, dgain, dbias)."""
    cdef Py_ssize_t N = x.shape[0], E = x.shape[1]
    dtype = np.asarray(x).dtype
    dx_arr = np.empty((N, E), dtype=dtype)
    dgain_arr = np.zeros(E, dtype=np.float64)
    dbias_arr = np.zeros(E, dtype=np.float64)
    cdef real[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    cdef Py_ssize_t i, j
    cdef double m, rs, xh, dxh, s1, s2
    for i in prange(N, nogil=True, schedule="static"):
        m = <double> mean[i]
        rs = <double> rstd[i]
        s1 = 0.0
        s2 = 0.0
        for j in range(E):
            xh = ((<double> x[i, j]) - m) * rs
            dxh = (<double> dy[i, j]) * (<double> gain[j])
            s1 = s1 + dxh
            s2 = s2 + dxh * xh
        s1 = s1 / E
        s2 = s2 / E
        for j in range(E):
            xh = ((<double> x[i, j]) - m) * rs
            dxh = (<double> dy[i, j]) * (<double> gain[j])
            dx[i, j] = <real> (rs * (dxh - s1 - xh * s2))
    # parameter gradients: serial pass, rows race otherwise
    cdef Py_ssize_t i2, j2
    cdef double m2, rs2
    with nogil:
        for i2 in range(N):
            m2 = <double> mean[i2]
            rs2 = <double> rstd[i2]
            for j2 in range(E):
                dgain[j2] += (<double> dy[i2, j2]) * (((<double> x[i2, j2]) - m2) * rs2)
                dbias[j2] += <double> dy[i2, j2]
    return dx_arr, dgain_arr.astype(dtype, copy=False), dbias_arr.astype(dtype, copy=False)


def gelu(real[::1] x):
    """GELU (tanh approximation) over a flat array."""
    out_arr = np.empty(x.shape[0], dtype=np.asarray(x).dtype)
    cdef real[::1] out = out_arr
    cdef Py_ssize_t n = x.shape[0], i
    cdef double v, t
    for i in prange(n, nogil=True, schedule="static"):
        v = <double> x[i]
        t = tanh(GELU_C * (v + GELU_A * v * v * v))
        out[i] = <real> (0.5 * v * (1.0 + t))
    return out_arr


def gelu_backward(real[::1] x, real[::1] dy):
    out_arr = np.empty(x.shape[0], dtype=np.asarray(x).dtype)
    cdef real[::1] out = out_arr
    cdef Py_ssize_t n = x.shape[0], i
    cdef double v, t, du
    for i in prange(n, nogil=True, schedule="static"):
        v = <double> x[i]
        t = tanh(GELU_C * (v + GELU_A * v * v * v))
        du = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
        out[i] = <real> ((<double> dy[i]) * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du))
    return out_arr


def adam_update(real[::1] param, real[::1] grad, real[::1] m, real[::1] v,
                double lr, double beta1, double beta2, double eps, long step):
    """One bias-corrected Adam step, fused and in place."""
    cdef Py_ssize_t n = param.shape[0], i
    cdef double bc1 = 1.0 - beta1 ** step
    cdef double bc2 = 1.0 - beta2 ** step
    cdef double g, mi, vi
    for i in prange(n, nogil=True, schedule="static"):
        g = <double> grad[i]
        mi = beta1 * (<double> m[i]) + (1.0 - beta1) * g
        vi = beta2 * (<double> v[i]) + (1.0 - beta2) * g * g
        m[i] = <real> mi
        v[i] = <real> vi
        param[i] = <real> ((<double> param[i]) - lr * (mi / bc1) / (sqrt(vi / bc2) + eps))
