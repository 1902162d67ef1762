"""Single-timestep recurrent cells and their analytic gradients.

LSTM with diagonal peepholes, every gate reading the *previous* cell::

    i = sigmoid(W_xi x + W_hi h' + w_ci * c' + b_i)
    f = sigmoid(W_xf x + W_hf h' + w_cf * c' + b_f)
    c = f * c' + i * tanh(W_xc x + W_hc h' + b_c)
    o = sigmoid(W_xo x + W_ho h' + w_co * c' + b_o)
    h = o * tanh(c)

Gate weights are stored stacked in the order (i, f, c, o): ``W_x`` has
shape ``(4*hidden, input)``, ``W_h`` ``(4*hidden, hidden)``, ``b``
``(4*hidden,)``; the three peephole vectors are the rows of ``w_peep``
in the order (ci, cf, co).

The relu cell is ``h = relu(W_in x + W_rec h' + b)``.

These functions are the reference definitions. The sequence kernels in
:mod:`seq2ocr.kernels` unroll the same arithmetic over whole sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .tensor import ShapeError, as_vector, matvec, outer, relu, sigmoid, tanh

GATES = ("i", "f", "c", "o")


def _check(arr: np.ndarray, shape: tuple, name: str) -> None:
    if arr.shape != shape:
        raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")


@dataclass
class LstmLayerParams:
    W_x: np.ndarray
    W_h: np.ndarray
    w_peep: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        d = self.hidden_dim
        _check(self.W_x, (4 * d, self.W_x.shape[1]), "W_x")
        _check(self.W_h, (4 * d, d), "W_h")
        _check(self.w_peep, (3, d), "w_peep")
        _check(self.b, (4 * d,), "b")

    @property
    def hidden_dim(self) -> int:
        return self.W_h.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmLayerParams":
        d = hidden_dim
        return cls(
            np.zeros((4 * d, input_dim)),
            np.zeros((4 * d, d)),
            np.zeros((3, d)),
            np.zeros(4 * d),
        )

    def zeros_like(self) -> "LstmLayerParams":
        return LstmLayerParams.zeros(self.input_dim, self.hidden_dim)

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def _block(self, arr: np.ndarray, gate: str) -> np.ndarray:
        d = self.hidden_dim
        k = GATES.index(gate)
        return arr[k * d:(k + 1) * d]

    # Per-gate views, named as in the equations above.
    W_xi = property(lambda self: self._block(self.W_x, "i"))
    W_xf = property(lambda self: self._block(self.W_x, "f"))
    W_xc = property(lambda self: self._block(self.W_x, "c"))
    W_xo = property(lambda self: self._block(self.W_x, "o"))
    W_hi = property(lambda self: self._block(self.W_h, "i"))
    W_hf = property(lambda self: self._block(self.W_h, "f"))
    W_hc = property(lambda self: self._block(self.W_h, "c"))
    W_ho = property(lambda self: self._block(self.W_h, "o"))
    b_i = property(lambda self: self._block(self.b, "i"))
    b_f = property(lambda self: self._block(self.b, "f"))
    b_c = property(lambda self: self._block(self.b, "c"))
    b_o = property(lambda self: self._block(self.b, "o"))
    w_ci = property(lambda self: self.w_peep[0])
    w_cf = property(lambda self: self.w_peep[1])
    w_co = property(lambda self: self.w_peep[2])


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LstmState":
        return cls(np.zeros(hidden_dim), np.zeros(hidden_dim))


@dataclass
class StepCache:
    x: np.ndarray
    prev: LstmState
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_preactivations(p: LstmLayerParams, x: np.ndarray, prev: LstmState) -> np.ndarray:
    """Stacked gate pre-activations, shape ``(4*hidden,)``."""
    d = p.hidden_dim
    a = matvec(p.W_x, x) + matvec(p.W_h, prev.h)
    peep = np.concatenate([p.w_peep[0] * prev.c, p.w_peep[1] * prev.c,
                           np.zeros(d), p.w_peep[2] * prev.c])
    return (a + peep) + p.b


def lstm_step(p: LstmLayerParams, x, prev: LstmState) -> tuple[LstmState, StepCache]:
    d = p.hidden_dim
    x = as_vector(x)
    _check(x, (p.input_dim,), "x")
    _check(prev.h, (d,), "prev.h")
    _check(prev.c, (d,), "prev.c")
    a = lstm_preactivations(p, x, prev)
    i = sigmoid(a[:d])
    f = sigmoid(a[d:2 * d])
    g = tanh(a[2 * d:3 * d])
    o = sigmoid(a[3 * d:])
    c = f * prev.c + i * g
    tc = tanh(c)
    h = o * tc
    return LstmState(h, c), StepCache(x, prev, i, f, g, o, c, tc)


def lstm_step_backward(
    p: LstmLayerParams, cache: StepCache, grad_next: LstmState
) -> tuple[LstmLayerParams, np.ndarray, LstmState]:
    """Gradients of a scalar loss through one LSTM step.

    ``grad_next`` holds dL/dh_t and dL/dc_t (the latter counting only the
    paths that do not go through h_t). Returns parameter gradients (as an
    ``LstmLayerParams``), dL/dx_t and dL/d(h_{t-1}, c_{t-1}).
    """
    d = p.hidden_dim
    dh, dc = grad_next.h, grad_next.c
    _check(dh, (d,), "grad h")
    _check(dc, (d,), "grad c")
    c_prev = cache.prev.c

    dc_total = dc + dh * cache.o * (1.0 - cache.tanh_c * cache.tanh_c)
    da_o = dh * cache.tanh_c * cache.o * (1.0 - cache.o)
    da_i = dc_total * cache.g * cache.i * (1.0 - cache.i)
    da_f = dc_total * c_prev * cache.f * (1.0 - cache.f)
    da_g = dc_total * cache.i * (1.0 - cache.g * cache.g)
    da = np.concatenate([da_i, da_f, da_g, da_o])

    grads = LstmLayerParams(
        outer(da, cache.x),
        outer(da, cache.prev.h),
        np.stack([da_i * c_prev, da_f * c_prev, da_o * c_prev]),
        da.copy(),
    )
    dx = matvec(np.ascontiguousarray(p.W_x.T), da)
    dh_prev = matvec(np.ascontiguousarray(p.W_h.T), da)
    dc_prev = ((dc_total * cache.f + da_i * p.w_peep[0]) + da_f * p.w_peep[1]) + da_o * p.w_peep[2]
    return grads, dx, LstmState(dh_prev, dc_prev)


@dataclass
class RnnReluLayerParams:
    W_in: np.ndarray
    W_rec: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        d = self.hidden_dim
        _check(self.W_in, (d, self.W_in.shape[1]), "W_in")
        _check(self.W_rec, (d, d), "W_rec")
        _check(self.b, (d,), "b")

    @property
    def hidden_dim(self) -> int:
        return self.W_rec.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_in.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "RnnReluLayerParams":
        return cls(np.zeros((hidden_dim, input_dim)), np.zeros((hidden_dim, hidden_dim)),
                   np.zeros(hidden_dim))

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def rnn_relu_step(p: RnnReluLayerParams, x, h_prev) -> np.ndarray:
    x = as_vector(x)
    h_prev = as_vector(h_prev)
    _check(x, (p.input_dim,), "x")
    _check(h_prev, (p.hidden_dim,), "h_prev")
    return relu((matvec(p.W_in, x) + matvec(p.W_rec, h_prev)) + p.b)


def rnn_relu_step_backward(
    p: RnnReluLayerParams, x, h_prev, h, grad_h
) -> tuple[RnnReluLayerParams, np.ndarray, np.ndarray]:
    """Backward of :func:`rnn_relu_step`; relu'(0) is taken to be 0."""
    grad_h = as_vector(grad_h)
    _check(grad_h, (p.hidden_dim,), "grad h")
    da = np.where(np.asarray(h) > 0.0, grad_h, 0.0)
    grads = RnnReluLayerParams(outer(da, x), outer(da, h_prev), da.copy())
    dx = matvec(np.ascontiguousarray(p.W_in.T), da)
    dh_prev = matvec(np.ascontiguousarray(p.W_rec.T), da)
    return grads, dx, dh_prev
