"""Deep word-image embeddings (final encoder states) and retrieval evaluation."""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import EncoderOutput, WordImage, encode
from .tensor import ShapeError

VARIANTS = ("h1-h2", "c1-c2", "h1-h2-c1-c2")
NORMS = ("none", "l1", "l2")
METRICS = ("euclidean", "cosine")

_TOKEN = re.compile(r"^([hc])([1-9][0-9]*)$")


def parse_variant(variant: str, layers: int | None = None) -> list[tuple[str, int]]:
    """``"h1-h2-c1-c2"`` -> ``[("h", 0), ("h", 1), ("c", 0), ("c", 1)]``.

    Blocks are concatenated in the order written.
    """
    parts = []
    for tok in variant.split("-"):
        m = _TOKEN.match(tok)
        if m is None:
            raise ValueError(f"bad feature variant {variant!r}")
        layer = int(m.group(2)) - 1
        if layers is not None and layer >= layers:
            raise ValueError(f"variant {variant!r} refers to layer {layer + 1}; model has {layers}")
        parts.append((m.group(1), layer))
    return parts


def normalize(v: np.ndarray, norm: str) -> np.ndarray:
    """Unit l1 or l2 norm; zero vectors are returned unchanged."""
    if norm == "none":
        return v
    if norm not in NORMS:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    # rescale first so tiny or huge entries neither underflow nor overflow
    m = float(np.max(np.abs(v))) if v.size else 0.0
    if m == 0.0:
        return v
    w = v / m
    s = float(np.abs(w).sum()) if norm == "l1" else math.sqrt(float(np.dot(w, w)))
    return w / s


@dataclass
class DwieFeature:
    vector: np.ndarray
    variant: str
    norm: str
    id: str = ""
    label: str = ""

    @property
    def dim(self) -> int:
        return self.vector.size


def features_from_state(z: EncoderOutput, variant: str, norm: str) -> np.ndarray:
    blocks = []
    for kind, layer in parse_variant(variant, z.layers):
        if kind == "c":
            if z.c is None:
                raise ValueError("relu encoder has no memory states; use an h-only variant")
            blocks.append(z.c[layer])
        else:
            blocks.append(z.h[layer])
    return normalize(np.concatenate(blocks), norm)


def extract_dwie(model, img: WordImage, variant: str = "c1-c2", norm: str = "none",
                 id: str = "", label: str = "") -> DwieFeature:
    parse_variant(variant, model.config.layers)
    if norm not in NORMS:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    z, _ = encode(model, img)
    return DwieFeature(features_from_state(z, variant, norm), variant, norm, id, label)


@dataclass
class RetrievalResult:
    query_id: str
    ids: list[str]
    distances: list[float]


def _check_uniform(index: Sequence[DwieFeature], query: DwieFeature) -> np.ndarray:
    for f in index:
        if (f.variant, f.norm) != (query.variant, query.norm):
            raise ValueError("index and query use different feature variants or norms")
        if f.dim != query.dim:
            raise ShapeError(f"feature dimension {f.dim} != query dimension {query.dim}")
    if not index:
        return np.zeros((0, query.dim))
    return np.stack([f.vector for f in index])


def knn_rank(index: Sequence[DwieFeature], query: DwieFeature, n: int | None = None,
             metric: str = "euclidean", exclude_self: bool = True) -> RetrievalResult:
    """Exact brute-force ranking of ``index`` by distance to ``query``.

    Ties are broken by item id. An item whose id equals the query id is
    left out when ``exclude_self`` is set.
    """
    X = _check_uniform(index, query)
    q = query.vector
    if metric == "euclidean":
        diff = X - q[None, :]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    elif metric == "cosine":
        nx = np.sqrt(np.einsum("ij,ij->i", X, X))
        nq = math.sqrt(float(np.dot(q, q)))
        denom = np.where(nx * nq > 0.0, nx * nq, 1.0)
        dist = 1.0 - (X @ q) / denom
    else:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    keep = [k for k, f in enumerate(index) if not (exclude_self and query.id and f.id == query.id)]
    keep.sort(key=lambda k: (dist[k], index[k].id))
    if n is not None:
        keep = keep[:n]
    return RetrievalResult(query.id, [index[k].id for k in keep], [float(dist[k]) for k in keep])


def average_precision(ranked_relevance: Sequence[bool], n_relevant: int, n: int) -> float:
    """AP@n = sum_{k<=n} P@k * rel(k) / min(R, n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n_relevant < 1:
        raise ValueError("query has no relevant items")
    hits = 0
    total = 0.0
    for k, rel in enumerate(ranked_relevance[:n], 1):
        if rel:
            hits += 1
            total += hits / k
    return total / min(n_relevant, n)


@dataclass
class MapReport:
    value: float
    n: int
    n_queries: int
    n_excluded: int


def mean_average_precision(results: Iterable[RetrievalResult], labels: Mapping[str, str],
                           n: int, query_labels: Mapping[str, str] | None = None) -> MapReport:
    """mAP over queries, relevance being exact label equality.

    ``labels`` maps every corpus item id to its ground-truth text and
    fixes R, the number of relevant items per query (the query itself not
    counted). Queries with R = 0 are skipped and counted in ``n_excluded``.
    Query labels come from ``query_labels`` when given, else ``labels``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    qlabels = labels if query_labels is None else query_labels
    counts: dict[str, int] = {}
    for lab in labels.values():
        counts[lab] = counts.get(lab, 0) + 1
    aps = []
    excluded = 0
    for res in results:
        qlab = qlabels[res.query_id]
        R = counts.get(qlab, 0) - (1 if res.query_id in labels and labels[res.query_id] == qlab else 0)
        if R < 1:
            excluded += 1
            continue
        aps.append(average_precision([labels[i] == qlab for i in res.ids], R, n))
    value = sum(aps) / len(aps) if aps else 0.0
    return MapReport(value, n, len(aps), excluded)


def random_ranking_map(labels: Mapping[str, str], n: int) -> float:
    """Expected mAP@n of a uniformly random ranking (queries = all items).

    For a query with R relevant among N candidates, the item at rank k is
    relevant with probability R/N and, given that, P@k has expectation
    ``(1 + (k-1)(R-1)/(N-1)) / k``.
    """
    counts: dict[str, int] = {}
    for lab in labels.values():
        counts[lab] = counts.get(lab, 0) + 1
    N = len(labels) - 1
    total, q = 0.0, 0
    for lab in labels.values():
        R = counts[lab] - 1
        if R < 1:
            continue
        s = 0.0
        for k in range(1, min(n, N) + 1):
            s += (R / N) * (1.0 + (k - 1) * (R - 1) / max(N - 1, 1)) / k
        total += s / min(R, n)
        q += 1
    return total / q if q else 0.0


# ---- embedding files -----------------------------------------------------

_BIN_MAGIC = b"DWIEMB01"


def write_embeddings(path, feats: Sequence[DwieFeature], fmt: str = "text") -> None:
    """Write features as text (``id\\tlabel\\tv1,v2,...``) or binary.

    The text form starts with a ``# variant=.. norm=.. dim=..`` line. The
    binary form is ``DWIEMB01``, then u32 lengths / UTF-8 strings for
    variant and norm, u32 dim, u32 count, and per record length-prefixed
    id and label followed by ``dim`` little-endian float64 values.
    """
    if not feats:
        raise ValueError("no features to write")
    variant, norm, dim = feats[0].variant, feats[0].norm, feats[0].dim
    for f in feats:
        if (f.variant, f.norm, f.dim) != (variant, norm, dim):
            raise ValueError("mixed feature variants in one embedding file")
        if any(c in f.id + f.label for c in "\t\n"):
            raise ValueError(f"id/label {f.id!r}/{f.label!r} contains a tab or newline")
    path = Path(path)
    if fmt == "text":
        lines = [f"# variant={variant} norm={norm} dim={dim}\n"]
        for f in feats:
            lines.append(f"{f.id}\t{f.label}\t" + ",".join(repr(float(x)) for x in f.vector) + "\n")
        path.write_text("".join(lines), encoding="utf-8")
    elif fmt == "binary":
        def s(x: str) -> bytes:
            b = x.encode("utf-8")
            return struct.pack("<I", len(b)) + b
        parts = [_BIN_MAGIC, s(variant), s(norm), struct.pack("<II", dim, len(feats))]
        for f in feats:
            parts += [s(f.id), s(f.label), np.asarray(f.vector, dtype="<f8").tobytes()]
        path.write_bytes(b"".join(parts))
    else:
        raise ValueError(f"unknown embedding format {fmt!r}")


def read_embeddings(path) -> list[DwieFeature]:
    data = Path(path).read_bytes()
    if data.startswith(_BIN_MAGIC):
        return _read_binary(data)
    feats = []
    variant = norm = None
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            meta = dict(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
            variant, norm = meta.get("variant", variant), meta.get("norm", norm)
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected id<TAB>label<TAB>values")
        vec = np.array([float(x) for x in parts[2].split(",")])
        feats.append(DwieFeature(vec, variant or "", norm or "", parts[0], parts[1]))
    return feats


def _read_binary(data: bytes) -> list[DwieFeature]:
    pos = len(_BIN_MAGIC)

    def s() -> str:
        nonlocal pos
        (k,) = struct.unpack_from("<I", data, pos)
        pos += 4
        out = data[pos:pos + k].decode("utf-8")
        pos += k
        return out

    variant, norm = s(), s()
    dim, count = struct.unpack_from("<II", data, pos)
    pos += 8
    feats = []
    for _ in range(count):
        fid, lab = s(), s()
        vec = np.frombuffer(data, dtype="<f8", count=dim, offset=pos).astype(np.float64)
        pos += 8 * dim
        feats.append(DwieFeature(vec, variant, norm, fid, lab))
    return feats
