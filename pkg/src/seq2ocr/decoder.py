"""Recurrent character decoder conditioned on the encoder's final states.

Layer ``n`` of the decoder starts from the final (h, c) of encoder layer
``n``. Step 0 reads the embedding of SOS; afterwards the input is the
embedding of the previous symbol (the argmax when decoding, the ground
truth when scoring a label). The top layer's hidden state goes through
``out.W``/``out.b`` and a softmax over the symbols plus EOS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .encoder import EncoderOutput
from .tensor import ShapeError, log_softmax, matmul, matvec, seqsum
from .vocab import UnknownSymbolError, Vocab  # noqa: F401  (re-exported)


@dataclass
class DecodeResult:
    text: str
    ids: list[int]
    stepwise_logprobs: list[float] = field(default_factory=list)
    truncated: bool = False


@dataclass
class DecoderGradients:
    """dL/d(parameters) and dL/dz from one teacher-forced pass."""

    tensors: dict[str, np.ndarray]
    z: EncoderOutput


def _check_z(model, z: EncoderOutput) -> None:
    cfg = model.config
    if z.layers != cfg.layers:
        raise ShapeError(f"encoder output has {z.layers} layers, decoder has {cfg.layers}")
    if (cfg.cell == "lstm") != (z.c is not None):
        raise ShapeError("encoder output does not match the decoder cell type")
    for v in z.h + (z.c or []):
        if v.shape != (cfg.hidden,):
            raise ShapeError(f"state of shape {v.shape}, decoder hidden size is {cfg.hidden}")


def _run_stack(model, X: np.ndarray, z: EncoderOutput, keep: bool):
    """Forward the decoder layers over inputs X (T, embed) from states z."""
    lstm = model.config.cell == "lstm"
    trace = []
    for n in range(model.config.layers):
        p = model.layer("dec", n)
        if lstm:
            H, C, G = kernels.lstm_forward(X, z.h[n], z.c[n], p.W_x, p.W_h, p.w_peep, p.b)
        else:
            H = kernels.rnn_forward(X, z.h[n], p.W_in, p.W_rec, p.b)
            C = G = None
        if keep:
            trace.append((X, H, C, G))
        X = H
    return X, trace


def decode_greedy(model, z: EncoderOutput, max_len: int) -> DecodeResult:
    """Greedy decoding until EOS or ``max_len`` emitted symbols.

    Ties in the argmax go to the lowest id.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    _check_z(model, z)
    vocab = model.vocab
    emb = model.tensors["embed"]
    W_out, b_out = model.tensors["out.W"], model.tensors["out.b"]
    state = EncoderOutput([v.copy() for v in z.h], None if z.c is None else [v.copy() for v in z.c])
    lstm = z.c is not None
    ids: list[int] = []
    logprobs: list[float] = []
    prev = vocab.sos_id
    for _ in range(max_len):
        X = emb[prev:prev + 1]
        for n in range(model.config.layers):
            p = model.layer("dec", n)
            if lstm:
                H, C, _ = kernels.lstm_forward(X, state.h[n], state.c[n], p.W_x, p.W_h, p.w_peep, p.b)
                state.c[n] = C[0]
            else:
                H = kernels.rnn_forward(X, state.h[n], p.W_in, p.W_rec, p.b)
            state.h[n] = H[0]
            X = H
        logp = log_softmax(matvec(W_out, X[0]) + b_out)
        k = int(np.argmax(logp))
        logprobs.append(float(logp[k]))
        if k == vocab.eos_id:
            return DecodeResult(vocab.decode(ids), ids, logprobs, truncated=False)
        ids.append(k)
        prev = k
    return DecodeResult(vocab.decode(ids), ids, logprobs, truncated=True)


def _validate_label(vocab: Vocab, label_ids) -> list[int]:
    ids = [int(k) for k in label_ids]
    if not ids:
        raise ValueError("label must be nonempty")
    for k in ids:
        if not 0 <= k < vocab.n_symbols:
            raise UnknownSymbolError(f"invalid symbol id {k} in label")
    return ids


def nll_forward(model, z: EncoderOutput, label_ids) -> float:
    """Teacher-forced negative log-likelihood of ``label + EOS`` (no gradients)."""
    return _nll(model, z, label_ids, None)[0]


def teacher_forced_nll(model, z: EncoderOutput, label_ids,
                       into: dict[str, np.ndarray] | None = None
                       ) -> tuple[float, DecoderGradients]:
    """Loss ``-sum_t log p(y_t | z, y_<t)`` over the label followed by EOS.

    Gradients for decoder layers, ``embed`` and ``out.*`` are added into
    ``into`` (a fresh zero dict when omitted); encoder entries are left
    untouched. ``DecoderGradients.z`` is dL/dz for the encoder backward.
    """
    loss, grads, grad_z = _nll(model, z, label_ids, into if into is not None else model.zero_grads())
    return loss, DecoderGradients(grads, grad_z)


def _nll(model, z, label_ids, grads):
    _check_z(model, z)
    vocab = model.vocab
    ids = _validate_label(vocab, label_ids)
    inputs = [vocab.sos_id] + ids
    targets = ids + [vocab.eos_id]
    T = len(inputs)
    emb = model.tensors["embed"]
    W_out, b_out = model.tensors["out.W"], model.tensors["out.b"]

    X0 = np.ascontiguousarray(emb[inputs])
    top, trace = _run_stack(model, X0, z, keep=grads is not None)
    logits = matmul(top, np.ascontiguousarray(W_out.T)) + b_out[None, :]
    logp = np.stack([log_softmax(row) for row in logits])
    picked = logp[np.arange(T), targets]
    loss = -seqsum(picked)
    if grads is None:
        return loss, None, None

    dlogits = np.exp(logp)
    dlogits[np.arange(T), targets] -= 1.0
    grads["out.W"] += matmul(np.ascontiguousarray(dlogits.T), top)
    grads["out.b"] += np.add.accumulate(dlogits, axis=0)[-1]
    dH = matmul(dlogits, W_out)

    grad_z = EncoderOutput.zeros_like(z)
    lstm = model.config.cell == "lstm"
    for n in reversed(range(model.config.layers)):
        X, H, C, G = trace[n]
        p = model.layer("dec", n)
        g = model.layer("dec", n, grads)
        if lstm:
            dX, dh0, dc0 = kernels.lstm_backward(
                X, z.h[n], z.c[n], p.W_x, p.W_h, p.w_peep, H, C, G, dH,
                np.zeros(model.config.hidden), g.W_x, g.W_h, g.w_peep, g.b)
            grad_z.c[n] = dc0
        else:
            dX, dh0 = kernels.rnn_backward(X, z.h[n], p.W_in, p.W_rec, H, dH,
                                           g.W_in, g.W_rec, g.b)
        grad_z.h[n] = dh0
        dH = dX
    g_emb = grads["embed"]
    for t, k in enumerate(inputs):
        g_emb[k] += dH[t]
    return loss, grads, grad_z
