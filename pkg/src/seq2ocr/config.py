"""Flat ``key = value`` run configuration with a typed schema.

Blank lines and lines starting with ``#`` are ignored. Every key must be
declared in :data:`SCHEMA`; unknown or repeated keys are errors. Relative
paths read from a config file are resolved against that file's directory,
those given as ``--set`` overrides against the working directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable


class ConfigError(ValueError):
    """Bad config file, unknown key, or a value that fails validation."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none") else int(s)


def _opt_str(s: str) -> str | None:
    return None if s.strip().lower() in ("", "none") else s


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {s!r}")
        return s
    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str
    path: bool = False


SCHEMA: dict[str, Key] = {
    # shared
    "seed": Key(int, 0, "seed for every random choice of the run"),
    # synthetic corpus
    "words": Key(_opt_str, None, "word list, one word per line", path=True),
    "renderings": Key(int, 1, "jittered renderings per word"),
    "pad_min": Key(int, 0, "min blank columns added on each side (atlas pixels)"),
    "pad_max": Key(int, 0, "max blank columns added on each side"),
    "spacing_min": Key(int, 0, "min extra inter-glyph gap"),
    "spacing_max": Key(int, 0, "max extra inter-glyph gap"),
    "noise": Key(float, 0.0, "per-pixel flip probability, in [0, 0.05]"),
    "scale": Key(int, 3, "integer glyph scale factor before resizing"),
    "margin_top": Key(int, 1, "blank rows above the glyphs (atlas pixels)"),
    "margin_bottom": Key(int, 2, "blank rows below the glyphs"),
    "out_dir": Key(_opt_str, None, "corpus output directory", path=True),
    # data and model
    "manifest": Key(_opt_str, None, "corpus manifest (<image path>\\t<label>)", path=True),
    "split": Key(_choice("holdout", "none"), "holdout",
                 "holdout: seeded 60/20/20 split; none: train on the whole corpus"),
    "height": Key(int, 30, "image height after resizing"),
    "layers": Key(int, 2, "stacked recurrent layers in encoder and decoder"),
    "hidden": Key(int, 64, "hidden units per layer"),
    "embed": Key(int, 25, "character embedding size"),
    "cell": Key(_choice("lstm", "rnn"), "lstm", "recurrent cell type"),
    "init_scale": Key(_opt_float, None, "uniform init half-width for every tensor; none = fan-in rule"),
    "forget_bias": Key(float, 0.0, "initial forget-gate bias (lstm)"),
    # training
    "epochs": Key(int, 10, "passes over the training split"),
    "step_size": Key(float, 1e-4, "RMSProp step size"),
    "rms_decay": Key(float, 0.99, "RMSProp decay of the squared-gradient average"),
    "rms_epsilon": Key(float, 1e-8, "RMSProp denominator guard"),
    "batch_size": Key(int, 1, "samples averaged per update"),
    "grad_clip": Key(_opt_float, None, "global gradient-norm clip; none disables"),
    "train_ler_every": Key(int, 0, "decode the training split every k epochs; 0 = never"),
    "target_train_ler": Key(_opt_float, None, "stop once training LER falls below this"),
    "max_len": Key(_opt_int, None, "decoding cap; none = 4 + 2 x longest training label"),
    "checkpoint": Key(_opt_str, None, "checkpoint file to write (train) or read", path=True),
    "best_checkpoint": Key(_opt_str, None, "where to keep the best-validation model", path=True),
    "log_csv": Key(_opt_str, None, "per-epoch CSV (epoch, train NLL, val LER)", path=True),
    # predict / embed / retrieve
    "predictions": Key(_opt_str, None, "output: id, truth, prediction", path=True),
    "variant": Key(_choice("h1-h2", "c1-c2", "h1-h2-c1-c2"), "c1-c2", "embedding variant"),
    "norm": Key(_choice("none", "l1", "l2"), "l2", "embedding normalization"),
    "embeddings": Key(_opt_str, None, "embedding file to write (embed) or read (retrieve)", path=True),
    "embed_format": Key(_choice("text", "binary"), "text", "embedding file format"),
    "queries": Key(_opt_str, None, "query ids (one per line) or a query embedding file; none = all",
                   path=True),
    "n": Key(int, 10, "retrievals per query scored by mAP-n"),
    "metric": Key(_choice("euclidean", "cosine"), "euclidean", "retrieval distance"),
    "rankings": Key(_opt_str, None, "output: query, rank, item, distance, relevant", path=True),
    "report": Key(_opt_str, None, "metric report file; default stdout", path=True),
    # gradient check
    "gc_height": Key(int, 6, "gradcheck image height"),
    "gc_layers": Key(int, 2, "gradcheck layers"),
    "gc_hidden": Key(int, 8, "gradcheck hidden units"),
    "gc_embed": Key(int, 5, "gradcheck embedding size"),
    "gc_vocab": Key(int, 5, "gradcheck symbol count"),
    "gc_width": Key(int, 7, "gradcheck image width"),
    "gc_label_len": Key(int, 4, "gradcheck label length"),
    "gc_cell": Key(_choice("lstm", "rnn"), "lstm", "gradcheck cell type"),
    "gc_init_scale": Key(_opt_float, 1.0, "gradcheck init half-width; none = fan-in rule"),
    "gc_epsilon": Key(float, 1e-5, "finite-difference step"),
    "gc_threshold": Key(float, 1e-6, "pass threshold on the max relative error"),
    "gc_precision": Key(_choice("float64", "extended"), "float64",
                        "float64 differences, or an extended-precision reference forward"),
}


class RunConfig:
    """Validated view of a flat config plus overrides; read keys as attributes."""

    def __init__(self, values: dict[str, Any] | None = None):
        self._values = {k: spec.default for k, spec in SCHEMA.items()}
        for k, v in (values or {}).items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            self._values[k] = v

    def __getattr__(self, key: str) -> Any:
        try:
            return self.__dict__["_values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if self._values[k] is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def parse_value(key: str, raw: str, base: Path | None = None) -> Any:
    spec = SCHEMA.get(key)
    if spec is None:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        value = spec.parse(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if spec.path and value is not None and base is not None and not Path(value).is_absolute():
        value = str(base / value)
    return value


def parse_lines(lines: Iterable[str], source: str = "<config>", base: Path | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in s.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = parse_value(key, raw, base)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config(path=None, overrides: Iterable[str] = ()) -> RunConfig:
    """Merge a config file (optional) with ``key=value`` override strings."""
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values = parse_lines(text.splitlines(), str(p), p.parent)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        values[key] = parse_value(key, raw, Path.cwd())
    return RunConfig(values)


def read_word_list(path) -> list[str]:
    """One word per line; blank lines and surrounding whitespace ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read word list {path}: {exc.strerror}") from None
    return [w.strip() for w in text.splitlines() if w.strip()]
