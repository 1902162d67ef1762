"""Backend selection for the hot sequence kernels.

The compiled extension ``_kernels_c`` is used when it imports; otherwise
the numpy implementation in ``_kernels_py``. Set ``SEQ2OCR_BACKEND`` to
``python`` or ``cython`` to force one (``cython`` raises if it is not
built).

Kernel signatures (all arrays float64, C-contiguous):

``lstm_forward(X, h0, c0, W_x, W_h, w_peep, b) -> H, C, G``
    ``X`` is (T, in); returns hidden and cell traces (T, d) and the
    post-activation gates (T, 4d) in (i, f, c, o) order.
``lstm_backward(X, h0, c0, W_x, W_h, w_peep, H, C, G, dH, dc_last, gW_x, gW_h, gw_peep, gb) -> dX, dh0, dc0``
    ``dH`` holds the external gradient on every h_t, ``dc_last`` the one
    on c_T. Parameter gradients are *added* into the ``g*`` arrays.
``rnn_forward(X, h0, W_in, W_rec, b) -> H``
``rnn_backward(X, h0, W_in, W_rec, H, dH, gW_in, gW_rec, gb) -> dX, dh0``
``matmul(a, b)``, ``xorshift_fill(state, n) -> (draws, new_state)``
"""

from __future__ import annotations

import contextlib
import os

from . import _kernels_py

try:
    from . import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

_BACKENDS = {"python": _kernels_py}
if _kernels_c is not None:
    _BACKENDS["cython"] = _kernels_c


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _pick(name: str):
    if name == "auto":
        return "cython" if "cython" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ImportError(f"kernel backend {name!r} is not available "
                          f"(have {available_backends()})")
    return name


BACKEND = _pick(os.environ.get("SEQ2OCR_BACKEND", "auto"))
_impl = _BACKENDS[BACKEND]


def set_backend(name: str) -> str:
    """Switch the active backend; returns the previous one."""
    global BACKEND, _impl
    previous = BACKEND
    BACKEND = _pick(name)
    _impl = _BACKENDS[BACKEND]
    return previous


@contextlib.contextmanager
def use_backend(name: str):
    previous = set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def matmul(a, b):
    return _impl.matmul(a, b)


def lstm_forward(X, h0, c0, W_x, W_h, w_peep, b):
    return _impl.lstm_forward(X, h0, c0, W_x, W_h, w_peep, b)


def lstm_backward(X, h0, c0, W_x, W_h, w_peep, H, C, G, dH, dc_last,
                  gW_x, gW_h, gw_peep, gb):
    return _impl.lstm_backward(X, h0, c0, W_x, W_h, w_peep, H, C, G, dH, dc_last,
                               gW_x, gW_h, gw_peep, gb)


def rnn_forward(X, h0, W_in, W_rec, b):
    return _impl.rnn_forward(X, h0, W_in, W_rec, b)


def rnn_backward(X, h0, W_in, W_rec, H, dH, gW_in, gW_rec, gb):
    return _impl.rnn_backward(X, h0, W_in, W_rec, H, dH, gW_in, gW_rec, gb)


def xorshift_fill(state: int, n: int):
    return _impl.xorshift_fill(state, n)
