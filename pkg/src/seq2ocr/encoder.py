"""Column-by-column recurrent reader producing a fixed-size word encoding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cells import LstmState


class InvalidImageError(ValueError):
    """Image violates the binary / fixed-height / nonempty contract."""


@dataclass
class WordImage:
    """Binary word image; ``pixels`` has shape (height, width), values in {0, 1}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise InvalidImageError(f"expected a 2-D image, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidImageError(f"empty image of shape {px.shape}")
        if not np.isin(px, (0, 1)).all():
            raise InvalidImageError("pixels must be 0 or 1")
        self.pixels = px.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def columns(self) -> np.ndarray:
        """Pixel columns as a (width, height) float64 sequence."""
        return np.ascontiguousarray(self.pixels.T, dtype=np.float64)


@dataclass
class EncoderOutput:
    """Final state of every encoder layer (layer 1 first).

    ``c`` is ``None`` for the relu cell, which has no memory state.
    """

    h: list[np.ndarray]
    c: list[np.ndarray] | None = None

    @property
    def layers(self) -> int:
        return len(self.h)

    @property
    def states(self) -> list[LstmState]:
        if self.c is None:
            raise ValueError("relu encoder output has no memory states")
        return [LstmState(h, c) for h, c in zip(self.h, self.c)]

    @property
    def dim(self) -> int:
        return sum(v.size for v in self.h) + (0 if self.c is None else sum(v.size for v in self.c))

    @classmethod
    def zeros_like(cls, other: "EncoderOutput") -> "EncoderOutput":
        return cls([np.zeros_like(v) for v in other.h],
                   None if other.c is None else [np.zeros_like(v) for v in other.c])


@dataclass
class EncoderTrace:
    """Per-layer activations kept for backpropagation through time."""

    inputs: list[np.ndarray] = field(default_factory=list)
    H: list[np.ndarray] = field(default_factory=list)
    C: list[np.ndarray] = field(default_factory=list)
    G: list[np.ndarray] = field(default_factory=list)


def encode(model, img: WordImage, keep_trace: bool = False) -> tuple[EncoderOutput, EncoderTrace | None]:
    """Run the encoder stack over the image columns from zero initial states."""
    if img.height != model.config.height:
        raise InvalidImageError(f"image height {img.height} != model height {model.config.height}")
    d = model.config.hidden
    lstm = model.config.cell == "lstm"
    zero = np.zeros(d)
    X = img.columns()
    trace = EncoderTrace() if keep_trace else None
    hs, cs = [], []
    for n in range(model.config.layers):
        p = model.layer("enc", n)
        if lstm:
            H, C, G = kernels.lstm_forward(X, zero, zero, p.W_x, p.W_h, p.w_peep, p.b)
            cs.append(C[-1].copy())
        else:
            H = kernels.rnn_forward(X, zero, p.W_in, p.W_rec, p.b)
            C = G = None
        hs.append(H[-1].copy())
        if trace is not None:
            trace.inputs.append(X)
            trace.H.append(H)
            trace.C.append(C)
            trace.G.append(G)
        X = H
    return EncoderOutput(hs, cs if lstm else None), trace


def encode_backward(model, trace: EncoderTrace, grad_z: EncoderOutput,
                    grads: dict[str, np.ndarray]) -> None:
    """Backpropagate dL/dz through the encoder, adding into ``grads``."""
    d = model.config.hidden
    zero = np.zeros(d)
    dH_above = None
    for n in reversed(range(model.config.layers)):
        X, H = trace.inputs[n], trace.H[n]
        dH = np.zeros_like(H) if dH_above is None else dH_above
        dH[-1] += grad_z.h[n]
        p = model.layer("enc", n)
        g = model.layer("enc", n, grads)
        if model.config.cell == "lstm":
            dH_above, _, _ = kernels.lstm_backward(
                X, zero, zero, p.W_x, p.W_h, p.w_peep, H, trace.C[n], trace.G[n],
                dH, grad_z.c[n], g.W_x, g.W_h, g.w_peep, g.b)
        else:
            dH_above, _ = kernels.rnn_backward(X, zero, p.W_in, p.W_rec, H, dH,
                                               g.W_in, g.W_rec, g.b)
