# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sequence kernels for the recurrent layers.

Same API and accumulation order as ``_kernels_py``. Matrix-vector
products run as column sweeps (``acc[r] += W[r, j] * x[j]`` for j in
order) so each output is still summed left to right while the inner loop
over r vectorizes. Build with ``-ffp-contract=off``: fused multiply-adds
would change the rounding.
"""

import numpy as np
from libc.math cimport exp, tanh, fabs
from libc.string cimport memset, memcpy
from libc.stdint cimport uint64_t


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e = exp(-fabs(x))
    if x >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


cdef inline void _sweep(const double* wt, const double* x, double* acc,
                        Py_ssize_t n_in, Py_ssize_t n_out) noexcept nogil:
    """acc[r] += sum_j wt[j, r] * x[j], j ascending (wt is W transposed)."""
    cdef Py_ssize_t j, r
    cdef double xj
    cdef const double* row
    for j in range(n_in):
        xj = x[j]
        if xj == 0.0:
            continue
        row = wt + j * n_out
        for r in range(n_out):
            acc[r] += row[r] * xj


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double aik
    out = np.zeros((m, n))
    cdef double[:, ::1] c = out
    with nogil:
        for i in range(m):
            for k in range(kk):
                aik = a[i, k]
                for j in range(n):
                    c[i, j] += aik * b[k, j]
    return out


def lstm_forward(const double[:, ::1] X, const double[::1] h0, const double[::1] c0,
                 W_x, W_h, const double[:, ::1] w_peep, const double[::1] b):
    cdef Py_ssize_t T = X.shape[0], n_in = X.shape[1]
    cdef Py_ssize_t d = h0.shape[0], d4 = 4 * h0.shape[0]
    cdef const double[:, ::1] wxt = np.ascontiguousarray(np.asarray(W_x).T)
    cdef const double[:, ::1] wht = np.ascontiguousarray(np.asarray(W_h).T)
    H_arr = np.empty((T, d))
    C_arr = np.empty((T, d))
    G_arr = np.empty((T, d4))
    cdef double[:, ::1] H = H_arr
    cdef double[:, ::1] C = C_arr
    cdef double[:, ::1] G = G_arr
    ax_arr = np.empty(d4)
    ah_arr = np.empty(d4)
    cdef double[::1] ax = ax_arr
    cdef double[::1] ah = ah_arr
    cdef Py_ssize_t t, r
    cdef const double* hp
    cdef const double* cp
    cdef double cpr, i, f, g, o, c
    if T == 0:
        return H_arr, C_arr, G_arr
    with nogil:
        for t in range(T):
            if t == 0:
                hp = &h0[0]
                cp = &c0[0]
            else:
                hp = &H[t - 1, 0]
                cp = &C[t - 1, 0]
            memset(&ax[0], 0, d4 * sizeof(double))
            memset(&ah[0], 0, d4 * sizeof(double))
            if n_in > 0:
                _sweep(&wxt[0, 0], &X[t, 0], &ax[0], n_in, d4)
            _sweep(&wht[0, 0], hp, &ah[0], d, d4)
            for r in range(d):
                cpr = cp[r]
                i = _sigmoid(((ax[r] + ah[r]) + w_peep[0, r] * cpr) + b[r])
                f = _sigmoid(((ax[d + r] + ah[d + r]) + w_peep[1, r] * cpr) + b[d + r])
                g = tanh((ax[2 * d + r] + ah[2 * d + r]) + b[2 * d + r])
                o = _sigmoid(((ax[3 * d + r] + ah[3 * d + r]) + w_peep[2, r] * cpr) + b[3 * d + r])
                c = f * cpr + i * g
                C[t, r] = c
                H[t, r] = o * tanh(c)
                G[t, r] = i
                G[t, d + r] = f
                G[t, 2 * d + r] = g
                G[t, 3 * d + r] = o
    return H_arr, C_arr, G_arr


def lstm_backward(const double[:, ::1] X, const double[::1] h0, const double[::1] c0,
                  const double[:, ::1] W_x, const double[:, ::1] W_h,
                  const double[:, ::1] w_peep,
                  const double[:, ::1] H, const double[:, ::1] C, const double[:, ::1] G,
                  const double[:, ::1] dH, const double[::1] dc_last,
                  double[:, ::1] gW_x, double[:, ::1] gW_h, double[:, ::1] gw_peep,
                  double[::1] gb):
    cdef Py_ssize_t T = X.shape[0], n_in = X.shape[1]
    cdef Py_ssize_t d = h0.shape[0], d4 = 4 * h0.shape[0]
    dX_arr = np.zeros((T, n_in))
    dh_arr = np.zeros(d)
    dc_arr = np.array(dc_last, dtype=np.float64)
    da_arr = np.empty(d4)
    cdef double[:, ::1] dX = dX_arr
    cdef double[::1] dh_next = dh_arr
    cdef double[::1] dc_next = dc_arr
    cdef double[::1] da = da_arr
    cdef Py_ssize_t t, r, j
    cdef const double* hp
    cdef const double* cp
    cdef const double* xt
    cdef const double* wrow
    cdef double* grow
    cdef double* dxt
    cdef double cpr, i, f, g, o, tc, dh, dct, da_i, da_f, da_g, da_o, dar
    with nogil:
        for t in range(T - 1, -1, -1):
            if t == 0:
                hp = &h0[0]
                cp = &c0[0]
            else:
                hp = &H[t - 1, 0]
                cp = &C[t - 1, 0]
            for r in range(d):
                cpr = cp[r]
                i = G[t, r]
                f = G[t, d + r]
                g = G[t, 2 * d + r]
                o = G[t, 3 * d + r]
                tc = tanh(C[t, r])
                dh = dH[t, r] + dh_next[r]
                dct = dc_next[r] + dh * o * (1.0 - tc * tc)
                da_o = dh * tc * o * (1.0 - o)
                da_i = dct * g * i * (1.0 - i)
                da_f = dct * cpr * f * (1.0 - f)
                da_g = dct * i * (1.0 - g * g)
                da[r] = da_i
                da[d + r] = da_f
                da[2 * d + r] = da_g
                da[3 * d + r] = da_o
                dc_next[r] = ((dct * f + da_i * w_peep[0, r]) + da_f * w_peep[1, r]) + da_o * w_peep[2, r]
                gw_peep[0, r] += da_i * cpr
                gw_peep[1, r] += da_f * cpr
                gw_peep[2, r] += da_o * cpr
            memset(&dh_next[0], 0, d * sizeof(double))
            if n_in > 0:
                xt = &X[t, 0]
                dxt = &dX[t, 0]
            for r in range(d4):
                dar = da[r]
                gb[r] += dar
                if dar == 0.0:
                    continue
                if n_in > 0:
                    wrow = &W_x[r, 0]
                    grow = &gW_x[r, 0]
                    for j in range(n_in):
                        dxt[j] += wrow[j] * dar
                        grow[j] += dar * xt[j]
                wrow = &W_h[r, 0]
                grow = &gW_h[r, 0]
                for j in range(d):
                    dh_next[j] += wrow[j] * dar
                    grow[j] += dar * hp[j]
    return dX_arr, dh_arr, dc_arr


def rnn_forward(const double[:, ::1] X, const double[::1] h0, W_in, W_rec,
                const double[::1] b):
    cdef Py_ssize_t T = X.shape[0], n_in = X.shape[1], d = h0.shape[0]
    cdef const double[:, ::1] wit = np.ascontiguousarray(np.asarray(W_in).T)
    cdef const double[:, ::1] wrt = np.ascontiguousarray(np.asarray(W_rec).T)
    H_arr = np.empty((T, d))
    cdef double[:, ::1] H = H_arr
    ax_arr = np.empty(d)
    ah_arr = np.empty(d)
    cdef double[::1] ax = ax_arr
    cdef double[::1] ah = ah_arr
    cdef Py_ssize_t t, r
    cdef const double* hp
    cdef double a
    if T == 0:
        return H_arr
    with nogil:
        for t in range(T):
            hp = &h0[0] if t == 0 else &H[t - 1, 0]
            memset(&ax[0], 0, d * sizeof(double))
            memset(&ah[0], 0, d * sizeof(double))
            if n_in > 0:
                _sweep(&wit[0, 0], &X[t, 0], &ax[0], n_in, d)
            _sweep(&wrt[0, 0], hp, &ah[0], d, d)
            for r in range(d):
                a = (ax[r] + ah[r]) + b[r]
                H[t, r] = a if a > 0.0 else 0.0
    return H_arr


def rnn_backward(const double[:, ::1] X, const double[::1] h0,
                 const double[:, ::1] W_in, const double[:, ::1] W_rec,
                 const double[:, ::1] H, const double[:, ::1] dH,
                 double[:, ::1] gW_in, double[:, ::1] gW_rec, double[::1] gb):
    cdef Py_ssize_t T = X.shape[0], n_in = X.shape[1], d = h0.shape[0]
    dX_arr = np.zeros((T, n_in))
    dh_arr = np.zeros(d)
    da_arr = np.empty(d)
    cdef double[:, ::1] dX = dX_arr
    cdef double[::1] dh_next = dh_arr
    cdef double[::1] da = da_arr
    cdef Py_ssize_t t, r, j
    cdef const double* hp
    cdef const double* xt
    cdef const double* wrow
    cdef double* grow
    cdef double* dxt
    cdef double dar
    with nogil:
        for t in range(T - 1, -1, -1):
            hp = &h0[0] if t == 0 else &H[t - 1, 0]
            for r in range(d):
                if H[t, r] > 0.0:
                    da[r] = dH[t, r] + dh_next[r]
                else:
                    da[r] = 0.0
            memset(&dh_next[0], 0, d * sizeof(double))
            if n_in > 0:
                xt = &X[t, 0]
                dxt = &dX[t, 0]
            for r in range(d):
                dar = da[r]
                gb[r] += dar
                if dar == 0.0:
                    continue
                if n_in > 0:
                    wrow = &W_in[r, 0]
                    grow = &gW_in[r, 0]
                    for j in range(n_in):
                        dxt[j] += wrow[j] * dar
                        grow[j] += dar * xt[j]
                wrow = &W_rec[r, 0]
                grow = &gW_rec[r, 0]
                for j in range(d):
                    dh_next[j] += wrow[j] * dar
                    grow[j] += dar * hp[j]
    return dX_arr, dh_arr


def xorshift_fill(uint64_t state, Py_ssize_t n):
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef uint64_t x = state
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            x ^= x >> 12
            x ^= x << 25
            x ^= x >> 27
            out[k] = <double>((x * 0x2545F4914F6CDD1DULL) >> 11) * (1.0 / 9007199254740992.0)
    return out_arr, int(x)
