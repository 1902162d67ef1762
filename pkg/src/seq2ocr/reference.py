"""Straight-line reference forward pass at a selectable float precision.

This is a deliberately naive re-derivation of the model's loss that
shares no code with the kernels: one timestep at a time, plain numpy
expressions, no caching. It exists as a numeric oracle for gradient
checks. With ``dtype=np.longdouble`` (80-bit on x86) the finite
difference round-off drops by about three orders of magnitude.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 1 / (1 + np.exp(-x))


def _run_lstm(T, prefix, layers, d, X, h0, c0):
    hs, cs = [], []
    for n in range(layers):
        Wx, Wh, wp, b = (T[f"{prefix}{n}.{k}"] for k in ("W_x", "W_h", "w_peep", "b"))
        h, c = h0[n], c0[n]
        out = []
        for x in X:
            a = Wx @ x + Wh @ h + b
            i = _sigmoid(a[:d] + wp[0] * c)
            f = _sigmoid(a[d:2 * d] + wp[1] * c)
            g = np.tanh(a[2 * d:3 * d])
            o = _sigmoid(a[3 * d:] + wp[2] * c)
            c = f * c + i * g
            h = o * np.tanh(c)
            out.append(h)
        hs.append(h)
        cs.append(c)
        X = out
    return X, hs, cs


def _run_rnn(T, prefix, layers, X, h0):
    hs = []
    for n in range(layers):
        W, U, b = (T[f"{prefix}{n}.{k}"] for k in ("W_in", "W_rec", "b"))
        h = h0[n]
        out = []
        for x in X:
            h = np.maximum(W @ x + U @ h + b, 0)
            out.append(h)
        hs.append(h)
        X = out
    return X, hs


def reference_loss(tensors: dict, config, vocab, columns, label_ids, dtype=np.longdouble):
    """Teacher-forced NLL of ``label + EOS`` computed in ``dtype``.

    ``tensors`` and ``columns`` should already be in ``dtype`` so that
    perturbations made by the caller are not rounded away.
    """
    d, L = config.hidden, config.layers
    zero = [np.zeros(d, dtype=dtype)] * L
    ins = [vocab.sos_id] + list(label_ids)
    tgt = list(label_ids) + [vocab.eos_id]
    emb = [tensors["embed"][k] for k in ins]
    if config.cell == "lstm":
        _, hs, cs = _run_lstm(tensors, "enc", L, d, columns, zero, zero)
        top, _, _ = _run_lstm(tensors, "dec", L, d, emb, hs, cs)
    else:
        _, hs = _run_rnn(tensors, "enc", L, columns, zero)
        top, _ = _run_rnn(tensors, "dec", L, emb, hs)
    loss = dtype(0)
    for h, y in zip(top, tgt):
        logits = tensors["out.W"] @ h + tensors["out.b"]
        m = logits.max()
        loss -= logits[y] - (m + np.log(np.exp(logits - m).sum()))
    return loss
