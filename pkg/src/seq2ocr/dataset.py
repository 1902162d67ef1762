"""Word-image ingestion and the synthetic word renderer.

Convention: in memory, a pixel value of 1 is ink and 0 is background.
PGM files on disk use the usual photometry (dark ink on light paper), so
``ink = 1 - gray/maxval`` on load and the inverse on save.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoder import InvalidImageError, WordImage
from .rng import XorShift64Star
from .vocab import Vocab

DEFAULT_HEIGHT = 30


class CorpusError(ValueError):
    """Malformed manifest or image, or a label that cannot be rendered."""


class UnknownGlyphError(CorpusError):
    def __init__(self, chars: Sequence[str], word: str | None = None):
        self.chars = list(chars)
        self.word = word
        where = f" in {word!r}" if word is not None else ""
        super().__init__(f"no glyph for {''.join(self.chars)!r}{where}")


@dataclass
class LabeledSample:
    image: WordImage
    label: str
    id: str = ""

    def __post_init__(self):
        if not self.label:
            raise CorpusError("label must be nonempty")


# 5x7 glyphs; '#' is ink. Blank columns at either side are trimmed, which
# gives the narrow characters (i, l, punctuation) their own widths.
_GLYPH_ROWS = {
    "A": ".###. #...# #...# ##### #...# #...# #...#",
    "B": "####. #...# #...# ####. #...# #...# ####.",
    "C": ".###. #...# #.... #.... #.... #...# .###.",
    "D": "###.. #..#. #...# #...# #...# #..#. ###..",
    "E": "##### #.... #.... ####. #.... #.... #####",
    "F": "##### #.... #.... ####. #.... #.... #....",
    "G": ".###. #...# #.... #.### #...# #...# .####",
    "H": "#...# #...# #...# ##### #...# #...# #...#",
    "I": ".###. ..#.. ..#.. ..#.. ..#.. ..#.. .###.",
    "J": "..### ...#. ...#. ...#. ...#. #..#. .##..",
    "K": "#...# #..#. #.#.. ##... #.#.. #..#. #...#",
    "L": "#.... #.... #.... #.... #.... #.... #####",
    "M": "#...# ##.## #.#.# #.#.# #...# #...# #...#",
    "N": "#...# #...# ##..# #.#.# #..## #...# #...#",
    "O": ".###. #...# #...# #...# #...# #...# .###.",
    "P": "####. #...# #...# ####. #.... #.... #....",
    "Q": ".###. #...# #...# #...# #.#.# #..#. .##.#",
    "R": "####. #...# #...# ####. #.#.. #..#. #...#",
    "S": ".#### #.... #.... .###. ....# ....# ####.",
    "T": "##### ..#.. ..#.. ..#.. ..#.. ..#.. ..#..",
    "U": "#...# #...# #...# #...# #...# #...# .###.",
    "V": "#...# #...# #...# #...# #...# .#.#. ..#..",
    "W": "#...# #...# #...# #.#.# #.#.# #.#.# .#.#.",
    "X": "#...# #...# .#.#. ..#.. .#.#. #...# #...#",
    "Y": "#...# #...# #...# .#.#. ..#.. ..#.. ..#..",
    "Z": "##### ....# ...#. ..#.. .#... #.... #####",
    "a": "..... ..... .###. ....# .#### #...# .####",
    "b": "#.... #.... #.##. ##..# #...# #...# ####.",
    "c": "..... ..... .###. #.... #.... #...# .###.",
    "d": "....# ....# .##.# #..## #...# #...# .####",
    "e": "..... ..... .###. #...# ##### #.... .###.",
    "f": "..##. .#..# .#... ###.. .#... .#... .#...",
    "g": "..... .#### #...# #...# .#### ....# .###.",
    "h": "#.... #.... #.##. ##..# #...# #...# #...#",
    "i": "..#.. ..... .##.. ..#.. ..#.. ..#.. .###.",
    "j": "...#. ..... ..##. ...#. ...#. #..#. .##..",
    "k": "#.... #.... #..#. #.#.. ##... #.#.. #..#.",
    "l": ".##.. ..#.. ..#.. ..#.. ..#.. ..#.. .###.",
    "m": "..... ..... ##.#. #.#.# #.#.# #...# #...#",
    "n": "..... ..... #.##. ##..# #...# #...# #...#",
    "o": "..... ..... .###. #...# #...# #...# .###.",
    "p": "..... ..... ####. #...# ####. #.... #....",
    "q": "..... ..... .##.# #..## .#### ....# ....#",
    "r": "..... ..... #.##. ##..# #.... #.... #....",
    "s": "..... ..... .###. #.... .###. ....# ####.",
    "t": ".#... .#... ###.. .#... .#... .#..# ..##.",
    "u": "..... ..... #...# #...# #...# #..## .##.#",
    "v": "..... ..... #...# #...# #...# .#.#. ..#..",
    "w": "..... ..... #...# #...# #.#.# #.#.# .#.#.",
    "x": "..... ..... #...# .#.#. ..#.. .#.#. #...#",
    "y": "..... ..... #...# #...# .#### ....# .###.",
    "z": "..... ..... ##### ...#. ..#.. .#... #####",
    "0": ".###. #...# #..## #.#.# ##..# #...# .###.",
    "1": "..#.. .##.. ..#.. ..#.. ..#.. ..#.. .###.",
    "2": ".###. #...# ....# ...#. ..#.. .#... #####",
    "3": "##### ...#. ..#.. ...#. ....# #...# .###.",
    "4": "...#. ..##. .#.#. #..#. ##### ...#. ...#.",
    "5": "##### #.... ####. ....# ....# #...# .###.",
    "6": "..##. .#... #.... ####. #...# #...# .###.",
    "7": "##### ....# ...#. ..#.. .#... .#... .#...",
    "8": ".###. #...# #...# .###. #...# #...# .###.",
    "9": ".###. #...# #...# .#### ....# ...#. .##..",
    ".": "..... ..... ..... ..... ..... .##.. .##..",
    ",": "..... ..... ..... ..... .##.. ..#.. .#...",
    "'": "..#.. ..#.. .#... ..... ..... ..... .....",
    '"': ".#.#. .#.#. #.#.. ..... ..... ..... .....",
    "-": "..... ..... ..... ##### ..... ..... .....",
    ";": "..... .##.. .##.. ..... .##.. ..#.. .#...",
}


def _parse_glyph(rows: str) -> np.ndarray:
    bitmap = np.array([[ch == "#" for ch in row] for row in rows.split()], dtype=np.uint8)
    cols = np.flatnonzero(bitmap.any(axis=0))
    return bitmap[:, cols[0]:cols[-1] + 1]


@dataclass
class FontAtlas:
    """Character bitmaps of a common height plus inter-glyph spacing."""

    glyphs: dict[str, np.ndarray]
    spacing: int = 1
    margin_top: int = 1
    margin_bottom: int = 2

    def __post_init__(self):
        heights = {g.shape[0] for g in self.glyphs.values()}
        if len(heights) != 1:
            raise ValueError(f"glyph heights differ: {sorted(heights)}")

    @property
    def glyph_height(self) -> int:
        return next(iter(self.glyphs.values())).shape[0]

    @property
    def line_height(self) -> int:
        return self.margin_top + self.glyph_height + self.margin_bottom

    def width(self, ch: str) -> int:
        return self.glyphs[ch].shape[1]

    def missing(self, text: str) -> list[str]:
        return sorted({ch for ch in text if ch not in self.glyphs})

    @classmethod
    def builtin(cls) -> "FontAtlas":
        return cls({ch: _parse_glyph(rows) for ch, rows in _GLYPH_ROWS.items()})


@dataclass
class RenderJitter:
    """Randomized rendering perturbations, all in unscaled atlas pixels.

    ``pad`` is the inclusive (min, max) range of blank columns added on each
    side, ``spacing`` the inclusive range added to every inter-glyph gap,
    ``noise`` the per-pixel flip probability applied after scaling.
    """

    pad: tuple[int, int] = (0, 0)
    spacing: tuple[int, int] = (0, 0)
    noise: float = 0.0
    scale: int = 3

    def __post_init__(self):
        if not 0.0 <= self.noise <= 0.05:
            raise ValueError("noise probability must lie in [0, 0.05]")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.pad[0] < 0 or self.pad[1] < self.pad[0]:
            raise ValueError(f"bad pad range {self.pad}")
        if self.spacing[1] < self.spacing[0]:
            raise ValueError(f"bad spacing range {self.spacing}")


def compose_word(text: str, atlas: FontAtlas, rng: XorShift64Star | None = None,
                 jitter: RenderJitter | None = None) -> np.ndarray:
    """Unscaled ink bitmap of ``text`` (line_height rows) before noise."""
    if not text:
        raise CorpusError("cannot render an empty word")
    missing = atlas.missing(text)
    if missing:
        raise UnknownGlyphError(missing, text)
    jitter = jitter or RenderJitter()
    draw = (lambda lo, hi: rng.randint(lo, hi)) if rng is not None else (lambda lo, hi: lo)
    pad_left = draw(*jitter.pad)
    pad_right = draw(*jitter.pad)
    gaps = [max(0, atlas.spacing + draw(*jitter.spacing)) for _ in range(len(text) - 1)]
    width = pad_left + pad_right + sum(atlas.width(ch) for ch in text) + sum(gaps)
    canvas = np.zeros((atlas.line_height, width), dtype=np.uint8)
    x = pad_left
    top = atlas.margin_top
    for k, ch in enumerate(text):
        g = atlas.glyphs[ch]
        canvas[top:top + g.shape[0], x:x + g.shape[1]] = g
        x += g.shape[1] + (gaps[k] if k < len(gaps) else 0)
    return canvas


def render_word(text: str, atlas: FontAtlas, jitter: RenderJitter, seed: int,
                height: int = DEFAULT_HEIGHT) -> WordImage:
    """Deterministic rendering of ``text``: a pure function of its arguments."""
    rng = XorShift64Star(seed)
    canvas = compose_word(text, atlas, rng, jitter)
    s = jitter.scale
    img = np.kron(canvas, np.ones((s, s), dtype=np.uint8))
    if jitter.noise > 0.0:
        flips = rng.random_array(img.size).reshape(img.shape) < jitter.noise
        img = np.where(flips, 1 - img, img).astype(np.uint8)
    return resize_to_height(img, height)


def resize_to_height(img, target_h: int = DEFAULT_HEIGHT) -> WordImage:
    """Nearest-neighbour resize to ``target_h`` rows keeping the aspect ratio.

    ``img`` holds ink intensities in [0, 1]; output pixels are
    ``intensity >= 0.5``. The new width is ``round(w * target_h / h)``
    (halves rounded up), at least 1.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise InvalidImageError(f"cannot resize image of shape {img.shape}")
    h, w = img.shape
    new_w = max(1, math.floor(w * target_h / h + 0.5))
    rows = np.minimum((np.arange(target_h) * 2 + 1) * h // (2 * target_h), h - 1)
    cols = np.minimum((np.arange(new_w) * 2 + 1) * w // (2 * new_w), w - 1)
    out = img[rows[:, None], cols[None, :]]
    return WordImage((out >= 0.5).astype(np.uint8))


def build_vocab(labels: Iterable[str]) -> Vocab:
    labels = list(labels)
    if not labels:
        raise CorpusError("cannot build a vocabulary from no labels")
    return Vocab.from_labels(labels)


def partition_by_vocab(samples: Sequence[LabeledSample], vocab: Vocab
                       ) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Split samples into (usable, unusable) by vocabulary coverage."""
    usable, rejected = [], []
    for s in samples:
        (usable if vocab.covers(s.label) else rejected).append(s)
    return usable, rejected


# ---- files ---------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM; returns ink intensities in [0, 1]."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorpusError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise CorpusError(f"{path}: malformed PGM header") from None
    if magic not in (b"P5", b"P2") or w < 1 or h < 1 or not 0 < maxval < 65536:
        raise CorpusError(f"{path}: unsupported PGM ({magic!r}, {w}x{h}, maxval {maxval})")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(data) - pos < w * h * dtype.itemsize:
            raise CorpusError(f"{path}: truncated PGM data")
        raw = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    else:
        raw = np.array(data[pos:].split()[:w * h], dtype=np.int64)
        if raw.size != w * h:
            raise CorpusError(f"{path}: truncated PGM data")
    gray = raw.reshape(h, w).astype(np.float64) / maxval
    return 1.0 - gray


def write_pgm(path, img: WordImage) -> None:
    gray = np.where(img.pixels > 0, 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + gray.tobytes())


def read_manifest(path) -> list[tuple[str, str]]:
    """Records ``(relative image path, label)``, one per nonblank line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise CorpusError(f"{path}:{lineno}: expected '<image path>\\t<label>'")
            records.append((parts[0], parts[1]))
    return records


def load_corpus(manifest, height: int = DEFAULT_HEIGHT) -> list[LabeledSample]:
    """Load, resize and binarize every image listed in a manifest.

    Image paths are relative to the manifest's directory; the relative path
    doubles as the sample id.
    """
    manifest = Path(manifest)
    if not manifest.is_file():
        raise CorpusError(f"manifest not found: {manifest}")
    base = manifest.parent
    samples = []
    for rel, label in read_manifest(manifest):
        img_path = base / rel
        if not img_path.is_file():
            raise CorpusError(f"{manifest}: missing image {rel}")
        img = resize_to_height(read_pgm(img_path), height)
        if img.height != height:
            raise CorpusError(f"{rel}: height {img.height} after resize")
        samples.append(LabeledSample(img, label, rel))
    return samples


def write_corpus(out_dir, samples: Sequence[LabeledSample], manifest_name: str = "manifest.tsv") -> Path:
    """Write images as PGM plus a manifest. Sample ids become file stems."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        if "\t" in s.label or "\n" in s.label:
            raise CorpusError(f"label {s.label!r} cannot be stored in a manifest")
        rel = f"images/{s.id}.pgm"
        write_pgm(out_dir / rel, s.image)
        lines.append(f"{rel}\t{s.label}\n")
    manifest = out_dir / manifest_name
    tmp = manifest.with_suffix(".tmp")
    tmp.write_text("".join(lines), encoding="utf-8")
    os.replace(tmp, manifest)
    return manifest


@dataclass
class SynthSpec:
    words: list[str]
    renderings: int = 1
    seed: int = 0
    jitter: RenderJitter = field(default_factory=RenderJitter)
    height: int = DEFAULT_HEIGHT


def render_corpus(spec: SynthSpec, atlas: FontAtlas | None = None) -> list[LabeledSample]:
    """Render every word ``spec.renderings`` times.

    Per-image seeds are consecutive ``next_u64()`` draws of a generator
    seeded with ``spec.seed``, taken word by word, rendering by rendering.
    """
    atlas = atlas or FontAtlas.builtin()
    bad = {w: atlas.missing(w) for w in spec.words if atlas.missing(w)}
    if bad:
        chars = sorted({c for cs in bad.values() for c in cs})
        err = UnknownGlyphError(chars)
        err.args = (f"no glyph for {''.join(chars)!r} in words: " + ", ".join(repr(w) for w in bad),)
        err.words = list(bad)
        raise err
    seeder = XorShift64Star(spec.seed)
    samples = []
    for k, word in enumerate(spec.words):
        for r in range(spec.renderings):
            seed = seeder.next_u64()
            img = render_word(word, atlas, spec.jitter, seed, spec.height)
            samples.append(LabeledSample(img, word, f"w{k:05d}_r{r:03d}"))
    return samples
