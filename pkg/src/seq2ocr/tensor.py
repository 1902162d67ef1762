"""Dense float64 kernels with explicit shapes.

Matrices are 2-D and vectors 1-D C-contiguous ``float64`` numpy arrays.
Nothing here broadcasts: a shape disagreement raises :class:`ShapeError`.

Reductions use a fixed left-to-right accumulation order so that the same
inputs always give the same bits, whichever backend computes them.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes are inconsistent."""


def as_matrix(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    return a


def as_vector(v) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    return v


def matmul(a, b) -> np.ndarray:
    """Matrix product; entry (i, j) is summed over k = 0, 1, ... in order."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return kernels.matmul(a, b)


def matvec(a, v) -> np.ndarray:
    a = as_matrix(a)
    v = as_vector(v)
    if a.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: {a.shape} x {v.shape}")
    return kernels.matmul(a, v.reshape(-1, 1)).reshape(-1)


def outer(u, v) -> np.ndarray:
    u = as_vector(u)
    v = as_vector(v)
    return u[:, None] * v[None, :]


def seqsum(v) -> float:
    """Left-to-right sum of a vector."""
    v = as_vector(v)
    if v.size == 0:
        return 0.0
    return float(np.add.accumulate(v)[-1])


def sigmoid(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(v) -> np.ndarray:
    return np.tanh(np.asarray(v, dtype=np.float64))


def relu(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 0.0, v, 0.0)


def softmax(v) -> np.ndarray:
    v = as_vector(v)
    e = np.exp(v - v.max())
    return e / seqsum(e)


def log_softmax(v) -> np.ndarray:
    v = as_vector(v)
    shifted = v - v.max()
    return shifted - np.log(seqsum(np.exp(shifted)))
