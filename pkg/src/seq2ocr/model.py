"""Parameter container for the encoder-decoder.

All learnable tensors live in one ordered ``name -> ndarray`` mapping,
which is what the optimizer, the gradient checker and the checkpoint
format operate on. Layer accessors return cell-parameter records whose
arrays *are* the mapping's arrays, so in-place updates are visible
everywhere.

Tensor names (``n`` is the 0-based layer index)::

    enc{n}.W_x  enc{n}.W_h  enc{n}.w_peep  enc{n}.b     lstm encoder
    dec{n}.W_x  dec{n}.W_h  dec{n}.w_peep  dec{n}.b     lstm decoder
    enc{n}.W_in enc{n}.W_rec enc{n}.b                   relu encoder
    dec{n}.W_in dec{n}.W_rec dec{n}.b                   relu decoder
    embed       (vocab.size, embed_dim)  character embedding
    out.W       (vocab.output_dim, hidden)
    out.b       (vocab.output_dim,)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cells import LstmLayerParams, RnnReluLayerParams
from .rng import XorShift64Star
from .vocab import Vocab

CELL_TYPES = ("lstm", "rnn")


@dataclass(frozen=True)
class ModelConfig:
    height: int = 30
    layers: int = 2
    hidden: int = 64
    embed: int = 25
    cell: str = "lstm"

    def __post_init__(self):
        if self.cell not in CELL_TYPES:
            raise ValueError(f"cell must be one of {CELL_TYPES}, got {self.cell!r}")
        for name in ("height", "layers", "hidden", "embed"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _layer_shapes(cell: str, n_in: int, d: int) -> dict[str, tuple]:
    if cell == "lstm":
        return {"W_x": (4 * d, n_in), "W_h": (4 * d, d), "w_peep": (3, d), "b": (4 * d,)}
    return {"W_in": (d, n_in), "W_rec": (d, d), "b": (d,)}


def tensor_shapes(config: ModelConfig, vocab: Vocab) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    for prefix, n_in0 in (("enc", config.height), ("dec", config.embed)):
        for n in range(config.layers):
            n_in = n_in0 if n == 0 else config.hidden
            for name, shape in _layer_shapes(config.cell, n_in, config.hidden).items():
                shapes[f"{prefix}{n}.{name}"] = shape
    shapes["embed"] = (vocab.size, config.embed)
    shapes["out.W"] = (vocab.output_dim, config.hidden)
    shapes["out.b"] = (vocab.output_dim,)
    return shapes


def _fan_in(name: str, shape: tuple, config: ModelConfig, vocab: Vocab) -> int:
    if name == "embed":
        return vocab.size
    if name.startswith("out."):
        return config.hidden
    # recurrent layer: a unit sees its input and its own hidden state
    layer = int(name[3:name.index(".")])
    n_in = (config.height if name.startswith("enc") else config.embed) if layer == 0 else config.hidden
    return n_in + config.hidden


class Seq2SeqModel:
    def __init__(self, config: ModelConfig, vocab: Vocab, tensors: dict[str, np.ndarray]):
        expected = tensor_shapes(config, vocab)
        if list(tensors) != list(expected):
            missing = set(expected) ^ set(tensors)
            raise ValueError(f"tensor names do not match the configuration: {sorted(missing)}"
                             if missing else "tensor order does not match the configuration")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
        self.config = config
        self.vocab = vocab
        self.tensors = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in tensors.items()}

    @classmethod
    def zeros(cls, config: ModelConfig, vocab: Vocab) -> "Seq2SeqModel":
        return cls(config, vocab, {k: np.zeros(s) for k, s in tensor_shapes(config, vocab).items()})

    @classmethod
    def initialize(cls, config: ModelConfig, vocab: Vocab, seed: int,
                   scale: float | None = None, forget_bias: float = 0.0) -> "Seq2SeqModel":
        """Uniform(-s, s) init from the package PRNG.

        With ``scale=None``, weight matrices and peepholes use
        ``s = 1/sqrt(fan_in)`` and biases start at zero; an explicit
        ``scale`` applies to every tensor, biases included.
        ``forget_bias`` is then added to every LSTM forget-gate bias.
        """
        rng = XorShift64Star(seed)
        tensors = {}
        for name, shape in tensor_shapes(config, vocab).items():
            is_bias = name.endswith(".b")
            if scale is None:
                if is_bias:
                    tensors[name] = np.zeros(shape)
                    continue
                s = 1.0 / math.sqrt(_fan_in(name, shape, config, vocab))
            else:
                s = scale
            tensors[name] = rng.uniform_array(shape, s)
        if forget_bias and config.cell == "lstm":
            d = config.hidden
            for name, t in tensors.items():
                if name.endswith(".b") and name.startswith(("enc", "dec")):
                    t[d:2 * d] += forget_bias
        return cls(config, vocab, tensors)

    def copy(self) -> "Seq2SeqModel":
        return Seq2SeqModel(self.config, self.vocab, {k: v.copy() for k, v in self.tensors.items()})

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def layer(self, prefix: str, n: int, tensors: dict[str, np.ndarray] | None = None):
        """Cell parameters of encoder (``prefix='enc'``) or decoder layer ``n``.

        Pass a gradient dict as ``tensors`` to get the matching view into it.
        """
        t = self.tensors if tensors is None else tensors
        key = f"{prefix}{n}."
        if self.config.cell == "lstm":
            return LstmLayerParams(t[key + "W_x"], t[key + "W_h"], t[key + "w_peep"], t[key + "b"])
        return RnnReluLayerParams(t[key + "W_in"], t[key + "W_rec"], t[key + "b"])

    def default_max_len(self, longest_label: int) -> int:
        return 4 + 2 * longest_label
