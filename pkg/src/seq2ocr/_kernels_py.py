"""Pure numpy implementation of the sequence kernels.

Used when the compiled extension is unavailable, or on request through
``SEQ2OCR_BACKEND=python``. Accumulation orders match ``_kernels_c.pyx``
term for term; only ``exp``/``tanh`` come from a different libm, so the
two backends agree to a few ulps rather than bit-for-bit.
"""

import numpy as np

_MASK = (1 << 64) - 1


def matmul(a, b):
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]))
    # add.accumulate is strictly sequential along the axis.
    return np.add.accumulate(a[:, :, None] * b[None, :, :], axis=1)[:, -1, :].copy()


def _mv(w, v):
    if w.shape[1] == 0:
        return np.zeros(w.shape[0])
    return np.add.accumulate(w * v[None, :], axis=1)[:, -1]


def _mtv(w, v):
    """w.T @ v, summed over rows of w in order."""
    if w.shape[0] == 0:
        return np.zeros(w.shape[1])
    return np.add.accumulate(w * v[:, None], axis=0)[-1]


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_forward(X, h0, c0, W_x, W_h, w_peep, b):
    T = X.shape[0]
    d = W_h.shape[1]
    H = np.empty((T, d))
    C = np.empty((T, d))
    G = np.empty((T, 4 * d))
    h, c = h0, c0
    for t in range(T):
        a = _mv(W_x, X[t]) + _mv(W_h, h)
        ai = (a[:d] + w_peep[0] * c) + b[:d]
        af = (a[d:2 * d] + w_peep[1] * c) + b[d:2 * d]
        ag = a[2 * d:3 * d] + b[2 * d:3 * d]
        ao = (a[3 * d:] + w_peep[2] * c) + b[3 * d:]
        i, f, g, o = _sigmoid(ai), _sigmoid(af), np.tanh(ag), _sigmoid(ao)
        c = f * c + i * g
        h = o * np.tanh(c)
        H[t], C[t] = h, c
        G[t] = np.concatenate([i, f, g, o])
    return H, C, G


def lstm_backward(X, h0, c0, W_x, W_h, w_peep, H, C, G, dH, dc_last,
                  gW_x, gW_h, gw_peep, gb):
    T = X.shape[0]
    d = W_h.shape[1]
    dX = np.zeros_like(X)
    dh_next = np.zeros(d)
    dc_next = np.array(dc_last, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        hp = h0 if t == 0 else H[t - 1]
        cp = c0 if t == 0 else C[t - 1]
        i, f, g, o = G[t, :d], G[t, d:2 * d], G[t, 2 * d:3 * d], G[t, 3 * d:]
        tc = np.tanh(C[t])
        dh = dH[t] + dh_next
        dct = dc_next + dh * o * (1.0 - tc * tc)
        da_o = dh * tc * o * (1.0 - o)
        da_i = dct * g * i * (1.0 - i)
        da_f = dct * cp * f * (1.0 - f)
        da_g = dct * i * (1.0 - g * g)
        da = np.concatenate([da_i, da_f, da_g, da_o])
        dc_next = ((dct * f + da_i * w_peep[0]) + da_f * w_peep[1]) + da_o * w_peep[2]
        gw_peep[0] += da_i * cp
        gw_peep[1] += da_f * cp
        gw_peep[2] += da_o * cp
        gb += da
        dX[t] = _mtv(W_x, da)
        dh_next = _mtv(W_h, da)
        gW_x += da[:, None] * X[t][None, :]
        gW_h += da[:, None] * hp[None, :]
    return dX, dh_next, dc_next


def rnn_forward(X, h0, W_in, W_rec, b):
    T = X.shape[0]
    d = W_rec.shape[0]
    H = np.empty((T, d))
    h = h0
    for t in range(T):
        a = (_mv(W_in, X[t]) + _mv(W_rec, h)) + b
        h = np.where(a > 0.0, a, 0.0)
        H[t] = h
    return H


def rnn_backward(X, h0, W_in, W_rec, H, dH, gW_in, gW_rec, gb):
    T = X.shape[0]
    d = W_rec.shape[0]
    dX = np.zeros_like(X)
    dh_next = np.zeros(d)
    for t in range(T - 1, -1, -1):
        hp = h0 if t == 0 else H[t - 1]
        da = np.where(H[t] > 0.0, dH[t] + dh_next, 0.0)
        gb += da
        dX[t] = _mtv(W_in, da)
        dh_next = _mtv(W_rec, da)
        gW_in += da[:, None] * X[t][None, :]
        gW_rec += da[:, None] * hp[None, :]
    return dX, dh_next


def xorshift_fill(state, n):
    out = np.empty(n)
    x = state
    for k in range(n):
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        out[k] = (((x * 0x2545F4914F6CDD1D) & _MASK) >> 11) * (1.0 / (1 << 53))
    return out, x
