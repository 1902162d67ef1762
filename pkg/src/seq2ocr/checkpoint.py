"""Binary checkpoint container.

Layout (all integers little-endian u32, strings UTF-8 with a u32 byte
length in front)::

    b"SEQ2OCR1"  version
    height layers hidden embed   cell-type string
    n_symbols  symbol strings in id order  eos_id  sos_id
    n_tensors, then per tensor:
        name  rank  dims[rank]  float64 payload (little-endian, C order)

Float64 values are stored verbatim, so a loaded model reproduces the
saved one bit for bit.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .model import ModelConfig, Seq2SeqModel
from .vocab import Vocab

MAGIC = b"SEQ2OCR1"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated or incompatible checkpoint file."""


def _u32(x: int) -> bytes:
    return struct.pack("<I", x)


def _str(s: str) -> bytes:
    b = s.encode("utf-8")
    return _u32(len(b)) + b


def dumps(model: Seq2SeqModel) -> bytes:
    cfg, vocab = model.config, model.vocab
    parts = [MAGIC, _u32(VERSION)]
    parts += [_u32(cfg.height), _u32(cfg.layers), _u32(cfg.hidden), _u32(cfg.embed), _str(cfg.cell)]
    parts.append(_u32(vocab.n_symbols))
    parts += [_str(s) for s in vocab.symbols]
    parts += [_u32(vocab.eos_id), _u32(vocab.sos_id)]
    parts.append(_u32(len(model.tensors)))
    for name, arr in model.tensors.items():
        parts += [_str(name), _u32(arr.ndim)] + [_u32(d) for d in arr.shape]
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def str(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"bad string in checkpoint: {exc}") from None


def loads(data: bytes) -> Seq2SeqModel:
    rd = _Reader(data)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a seq2ocr checkpoint (bad magic)")
    version = rd.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    height, layers, hidden, embed = (rd.u32() for _ in range(4))
    cell = rd.str()
    symbols = tuple(rd.str() for _ in range(rd.u32()))
    eos_id, sos_id = rd.u32(), rd.u32()
    try:
        config = ModelConfig(height, layers, hidden, embed, cell)
        vocab = Vocab(symbols)
    except ValueError as exc:
        raise CheckpointError(f"bad hyperparameters: {exc}") from None
    if (eos_id, sos_id) != (vocab.eos_id, vocab.sos_id):
        raise CheckpointError(f"sentinel ids ({eos_id}, {sos_id}) do not follow the symbol list")
    tensors = {}
    for _ in range(rd.u32()):
        name = rd.str()
        shape = tuple(rd.u32() for _ in range(rd.u32()))
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(rd.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        tensors[name] = arr
    if rd.pos != len(data):
        raise CheckpointError(f"{len(data) - rd.pos} trailing bytes after the last tensor")
    try:
        return Seq2SeqModel(config, vocab, tensors)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None


def save(model: Seq2SeqModel, path) -> None:
    """Write atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(dumps(model))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path) -> Seq2SeqModel:
    return loads(Path(path).read_bytes())
