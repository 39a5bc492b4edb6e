# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot network kernels.

Fuses the affine + activation loops so small-matrix training does not pay
per-call NumPy dispatch overhead. Must stay semantically identical to
``py_backend``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

NAME = "compiled"

cdef double LOG_FLOOR = 1e-300


cdef void _affine(const double[:, ::1] a, const double[:, ::1] w,
                  const double[::1] b, double[:, ::1] out, bint relu) noexcept:
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t din = a.shape[1]
    cdef Py_ssize_t dout = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = b[j]
            for k in range(din):
                acc += a[i, k] * w[j, k]
            if relu and acc < 0.0:
                acc = 0.0
            out[i, j] = acc


cdef void _softmax_rows(double[:, ::1] z) noexcept:
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t kk = z.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(n):
        m = z[i, 0]
        for j in range(1, kk):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(kk):
            z[i, j] = exp(z[i, j] - m)
            s += z[i, j]
        for j in range(kk):
            z[i, j] /= s


def forward_probs(list weights, list biases, object x):
    """Class probabilities for a batch, shape (n, K)."""
    cdef Py_ssize_t depth = len(weights)
    cdef Py_ssize_t li
    a = np.ascontiguousarray(x, dtype=np.float64)
    for li in range(depth):
        w = np.ascontiguousarray(weights[li], dtype=np.float64)
        b = np.ascontiguousarray(biases[li], dtype=np.float64)
        out = np.empty((a.shape[0], w.shape[0]), dtype=np.float64)
        _affine(a, w, b, out, li < depth - 1)
        a = out
    _softmax_rows(a)
    return a


def loss_and_grads(list weights, list biases, object x, object y):
    """Mean cross-entropy over the batch plus mean parameter gradients."""
    cdef Py_ssize_t depth = len(weights)
    cdef Py_ssize_t li, i, j, k
    xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.int64_t[::1] ys = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = xs.shape[0]

    ws = [np.ascontiguousarray(weights[li], dtype=np.float64) for li in range(depth)]
    bs = [np.ascontiguousarray(biases[li], dtype=np.float64) for li in range(depth)]

    acts = [xs]
    for li in range(depth):
        w = ws[li]
        out = np.empty((acts[li].shape[0], w.shape[0]), dtype=np.float64)
        _affine(acts[li], w, bs[li], out, li < depth - 1)
        acts.append(out)

    probs = acts[depth]
    _softmax_rows(probs)

    cdef double[:, ::1] delta = probs
    cdef Py_ssize_t kk = delta.shape[1]
    cdef double loss = 0.0
    cdef double p
    for i in range(n):
        p = delta[i, ys[i]]
        if p < LOG_FLOOR:
            p = LOG_FLOOR
        loss -= log(p)
        delta[i, ys[i]] -= 1.0
    loss /= n
    for i in range(n):
        for j in range(kk):
            delta[i, j] /= n

    # backward: accumulation loops keep the innermost index contiguous in
    # every operand so the small-matrix case stays cache-friendly
    grad_ws = []
    grad_bs = []
    cdef double[:, ::1] d_view
    cdef double[:, ::1] a_view
    cdef double[:, ::1] gw_view
    cdef double[::1] gb_view
    cdef double[:, ::1] w_view
    cdef double[:, ::1] nd_view
    cdef double dv
    cur = probs
    for li in range(depth - 1, -1, -1):
        d_view = cur
        a_view = acts[li]
        gw = np.zeros((d_view.shape[1], a_view.shape[1]), dtype=np.float64)
        gb = np.zeros(d_view.shape[1], dtype=np.float64)
        gw_view = gw
        gb_view = gb
        for i in range(n):
            for j in range(d_view.shape[1]):
                dv = d_view[i, j]
                gb_view[j] += dv
                if dv != 0.0:
                    for k in range(a_view.shape[1]):
                        gw_view[j, k] += dv * a_view[i, k]
        grad_ws.append(gw)
        grad_bs.append(gb)
        if li > 0:
            w_view = ws[li]
            nd = np.zeros((n, w_view.shape[1]), dtype=np.float64)
            nd_view = nd
            for i in range(n):
                for j in range(w_view.shape[0]):
                    dv = d_view[i, j]
                    if dv != 0.0:
                        for k in range(w_view.shape[1]):
                            nd_view[i, k] += dv * w_view[j, k]
                for k in range(w_view.shape[1]):
                    if a_view[i, k] <= 0.0:
                        nd_view[i, k] = 0.0
            cur = nd
    grad_ws.reverse()
    grad_bs.reverse()
    return loss, grad_ws, grad_bs
