from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class UnknownSymbolError(ValueError):
    """A label uses a character that is not in the vocabulary."""


@dataclass(frozen=True)
class Vocab:
    """Output alphabet plus the two sentinels.

    Symbol ids are ``0 .. n_symbols-1``; ``eos_id = n_symbols`` and
    ``sos_id = n_symbols + 1``. The decoder's softmax covers the symbols
    and EOS (``output_dim``); SOS only ever appears as an input.
    """

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")
        for s in self.symbols:
            if len(s) != 1:
                raise ValueError(f"symbols must be single characters, got {s!r}")

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "Vocab":
        chars = set()
        for label in labels:
            chars.update(label)
        return cls(tuple(sorted(chars)))

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    @property
    def eos_id(self) -> int:
        return len(self.symbols)

    @property
    def sos_id(self) -> int:
        return len(self.symbols) + 1

    @property
    def output_dim(self) -> int:
        return len(self.symbols) + 1

    @property
    def size(self) -> int:
        """Rows of the character embedding table (symbols + EOS + SOS)."""
        return len(self.symbols) + 2

    @property
    def _index(self) -> dict[str, int]:
        # frozen dataclass: cache through __dict__
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {s: k for k, s in enumerate(self.symbols)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def covers(self, text: str) -> bool:
        return all(ch in self._index for ch in text)

    def missing(self, text: str) -> list[str]:
        return sorted({ch for ch in text if ch not in self._index})

    def encode(self, text: str) -> list[int]:
        try:
            return [self._index[ch] for ch in text]
        except KeyError as exc:
            raise UnknownSymbolError(f"symbol {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Sequence[int]) -> str:
        out = []
        for k in ids:
            if not 0 <= k < self.n_symbols:
                raise UnknownSymbolError(f"id {k} is not a symbol id")
            out.append(self.symbols[k])
        return "".join(out)
