"""Command-line entry point: ``seq2ocr <command> [--config PATH] [--set key=value ...]``.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 gradient check above threshold.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import SCHEMA, ConfigError, RunConfig, load_config, read_word_list
from .dataset import (CorpusError, FontAtlas, RenderJitter, SynthSpec, build_vocab, load_corpus,
                      partition_by_vocab, render_corpus, write_corpus)
from .encoder import InvalidImageError, WordImage
from .metrics import label_error_rate
from .model import ModelConfig, Seq2SeqModel
from .retrieval import (DwieFeature, extract_dwie, knn_rank, mean_average_precision,
                        read_embeddings, write_embeddings)
from .rng import XorShift64Star
from .training import TrainConfig, gradient_check, predict, split_dataset, train
from .vocab import UnknownSymbolError, Vocab

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_THRESHOLD = 0, 1, 2, 3

log = logging.getLogger("seq2ocr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _note(msg: str) -> None:
    """Diagnostics go to stderr as '#' lines so stdout stays reproducible."""
    print(f"# {msg}", file=sys.stderr, flush=True)


def _emit(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


# ---- synth ---------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    cfg.require("words", "out_dir")
    words = read_word_list(cfg.words)
    if not words:
        raise CorpusError(f"word list {cfg.words} is empty")
    atlas = FontAtlas.builtin()
    atlas.margin_top, atlas.margin_bottom = cfg.margin_top, cfg.margin_bottom
    try:
        jitter = RenderJitter((cfg.pad_min, cfg.pad_max), (cfg.spacing_min, cfg.spacing_max),
                              cfg.noise, cfg.scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    samples = render_corpus(SynthSpec(words, cfg.renderings, cfg.seed, jitter, cfg.height), atlas)
    manifest = write_corpus(cfg.out_dir, samples)
    print(f"{manifest}\t{len(samples)}")
    return EXIT_OK


# ---- train ---------------------------------------------------------------

def _model_config(cfg: RunConfig) -> ModelConfig:
    try:
        return ModelConfig(cfg.height, cfg.layers, cfg.hidden, cfg.embed, cfg.cell)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg: RunConfig) -> TrainConfig:
    every = cfg.train_ler_every
    if cfg.target_train_ler is not None and every == 0:
        every = 1
    try:
        return TrainConfig(cfg.step_size, cfg.rms_decay, cfg.rms_epsilon, cfg.epochs, cfg.seed,
                           cfg.grad_clip, cfg.batch_size, every)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_train(cfg: RunConfig) -> int:
    cfg.require("manifest", "checkpoint")
    mcfg = _model_config(cfg)
    tcfg = _train_config(cfg)
    corpus = load_corpus(cfg.manifest, mcfg.height)
    if cfg.split == "holdout":
        train_set, val_set, test_set = split_dataset(corpus, cfg.seed)
    else:
        train_set, val_set, test_set = list(corpus), [], []
    vocab = build_vocab(s.label for s in train_set)
    for name, part in (("validation", val_set), ("test", test_set)):
        _, rejected = partition_by_vocab(part, vocab)
        if rejected:
            chars = sorted({c for s in rejected for c in vocab.missing(s.label)})
            _note(f"{len(rejected)} {name} sample(s) use symbols absent from training: "
                  f"{''.join(chars)!r}; they are excluded")
    val_set, _ = partition_by_vocab(val_set, vocab)

    model = Seq2SeqModel.initialize(mcfg, vocab, cfg.seed, cfg.init_scale, cfg.forget_bias)
    max_len = cfg.max_len or model.default_max_len(max(len(s.label) for s in train_set))
    _note(f"train={len(train_set)} val={len(val_set)} test={len(test_set)} "
          f"symbols={vocab.n_symbols} params={model.n_params}")

    with_train_ler = tcfg.train_ler_every > 0
    columns = ["epoch", "train_nll", "val_ler"] + (["train_ler"] if with_train_ler else [])
    csv_lines = [",".join(columns) + "\n"]
    csv_path = cfg.log_csv

    def flush_csv():
        if csv_path is not None:
            Path(csv_path).write_text("".join(csv_lines), encoding="utf-8")

    flush_csv()
    best = [float("inf")]

    def on_epoch(rec, m):
        row = [str(rec.epoch), _fmt(rec.train_nll), _fmt(rec.val_ler)]
        if with_train_ler:
            row.append(_fmt(rec.train_ler))
        csv_lines.append(",".join(row) + "\n")
        flush_csv()
        _note(f"epoch {rec.epoch} nll {rec.train_nll:.6f} val_ler {rec.val_ler} "
              f"train_ler {rec.train_ler} ({rec.seconds:.1f}s)")
        if rec.val_ler is not None and rec.val_ler < best[0]:
            best[0] = rec.val_ler
            if cfg.best_checkpoint is not None:
                checkpoint.save(m, cfg.best_checkpoint)
        return (cfg.target_train_ler is not None and rec.train_ler is not None
                and rec.train_ler < cfg.target_train_ler)

    result = train(model, train_set, tcfg, val_set, max_len, callback=on_epoch)
    checkpoint.save(result.model, cfg.checkpoint)
    last = result.history[-1] if result.history else None
    print(f"epochs\t{len(result.history)}")
    if last is not None:
        print(f"train_nll\t{_fmt(last.train_nll)}")
        if last.train_ler is not None:
            print(f"train_ler\t{_fmt(last.train_ler)}")
        if last.val_ler is not None:
            print(f"val_ler\t{_fmt(last.val_ler)}\tbest_epoch\t{result.best_epoch}")
    return EXIT_OK


# ---- predict / embed -----------------------------------------------------

def _load_model(cfg: RunConfig) -> Seq2SeqModel:
    cfg.require("checkpoint")
    return checkpoint.load(cfg.checkpoint)


def cmd_predict(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    cfg.require("manifest")
    samples = load_corpus(cfg.manifest, model.config.height)
    if not samples:
        raise CorpusError(f"manifest {cfg.manifest} lists no images")
    max_len = cfg.max_len or model.default_max_len(max(len(s.label) for s in samples))
    pairs, lines = [], []
    for s in samples:
        pred = predict(model, s.image, max_len)
        pairs.append((s.label, pred))
        lines.append(f"{s.id}\t{s.label}\t{pred}\n")
    _emit(cfg.predictions, "".join(lines))
    ler = label_error_rate(pairs)
    print(f"label_error_rate\t{_fmt(ler)}\t{len(pairs)}")
    return EXIT_OK


def cmd_embed(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    cfg.require("manifest", "embeddings")
    samples = load_corpus(cfg.manifest, model.config.height)
    if not samples:
        raise CorpusError(f"manifest {cfg.manifest} lists no images")
    try:
        feats = [extract_dwie(model, s.image, cfg.variant, cfg.norm, s.id, s.label) for s in samples]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_embeddings(cfg.embeddings, feats, cfg.embed_format)
    print(f"{cfg.embeddings}\t{len(feats)}\t{feats[0].dim}")
    return EXIT_OK


# ---- retrieve ------------------------------------------------------------

def _is_embedding_file(path: Path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(16)
    return head.startswith(b"DWIEMB01") or head.startswith(b"# variant=")


def _load_queries(cfg: RunConfig, index: list[DwieFeature]) -> list[DwieFeature]:
    if cfg.queries is None:
        return list(index)
    path = Path(cfg.queries)
    if not path.is_file():
        raise CorpusError(f"query file not found: {path}")
    if _is_embedding_file(path):
        return read_embeddings(path)
    by_id = {f.id: f for f in index}
    ids = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    unknown = [q for q in ids if q not in by_id]
    if unknown:
        raise CorpusError(f"{len(unknown)} query id(s) not in the index, e.g. {unknown[0]!r}")
    return [by_id[q] for q in ids]


def cmd_retrieve(cfg: RunConfig) -> int:
    cfg.require("embeddings")
    if cfg.n < 1:
        raise ConfigError("n must be >= 1")
    index = read_embeddings(cfg.embeddings)
    if not index:
        raise CorpusError(f"{cfg.embeddings} holds no embeddings")
    queries = _load_queries(cfg, index)
    labels = {f.id: f.label for f in index}
    if len(labels) != len(index):
        raise CorpusError("duplicate ids in the embedding file")
    results, rank_lines = [], []
    for q in queries:
        res = knn_rank(index, q, cfg.n, cfg.metric)
        results.append(res)
        for k, (item, dist) in enumerate(zip(res.ids, res.distances), 1):
            rank_lines.append(f"{q.id}\t{k}\t{item}\t{_fmt(dist)}\t{int(labels[item] == q.label)}\n")
    if cfg.rankings is not None:
        Path(cfg.rankings).write_text("".join(rank_lines), encoding="utf-8")
    report = mean_average_precision(results, labels, cfg.n, {q.id: q.label for q in queries})
    if report.n_excluded:
        _note(f"{report.n_excluded} query(ies) without relevant items were excluded")
    variant, norm = index[0].variant, index[0].norm
    rows = ["metric\tvalue\tn\tvariant\tnorm\n",
            f"mAP\t{_fmt(report.value)}\t{cfg.n}\t{variant}\t{norm}\n",
            f"queries\t{report.n_queries}\t{cfg.n}\t{variant}\t{norm}\n",
            f"excluded_queries\t{report.n_excluded}\t{cfg.n}\t{variant}\t{norm}\n"]
    _emit(cfg.report, "".join(rows))
    return EXIT_OK


# ---- gradcheck -----------------------------------------------------------

def gradcheck_problem(cfg: RunConfig):
    """Random model, binary image and label described by the ``gc_*`` keys."""
    if not 1 <= cfg.gc_vocab <= 26:
        raise ConfigError("gc_vocab must lie in 1..26")
    if cfg.gc_width < 1 or cfg.gc_label_len < 1:
        raise ConfigError("gc_width and gc_label_len must be >= 1")
    try:
        mcfg = ModelConfig(cfg.gc_height, cfg.gc_layers, cfg.gc_hidden, cfg.gc_embed, cfg.gc_cell)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    vocab = Vocab(tuple("abcdefghijklmnopqrstuvwxyz"[:cfg.gc_vocab]))
    model = Seq2SeqModel.initialize(mcfg, vocab, cfg.seed, cfg.gc_init_scale)
    rng = XorShift64Star(cfg.seed ^ 0x6C0C)
    bits = rng.random_array(cfg.gc_height * cfg.gc_width).reshape(cfg.gc_height, cfg.gc_width)
    image = WordImage((bits < 0.5).astype(np.uint8))
    label = [rng.randbelow(cfg.gc_vocab) for _ in range(cfg.gc_label_len)]
    return model, image, label


def cmd_gradcheck(cfg: RunConfig) -> int:
    model, image, label = gradcheck_problem(cfg)
    t0 = time.perf_counter()
    rep = gradient_check(model, image, label, cfg.gc_epsilon, cfg.gc_precision, cfg.gc_threshold)
    _note(f"gradcheck took {time.perf_counter() - t0:.1f}s")
    ok = rep.max_relative_error < cfg.gc_threshold
    print(f"max_relative_error\t{rep.max_relative_error:.6e}")
    print(f"worst\t{rep.worst_tensor}{list(rep.worst_index)}\tanalytic\t{rep.analytic!r}\tnumeric\t{rep.numeric!r}")
    print(f"coordinates\t{rep.n_coords}\tabove_threshold\t{rep.n_failed}")
    print(f"precision\t{rep.precision}\tthreshold\t{cfg.gc_threshold:g}\t{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_THRESHOLD


COMMANDS = {
    "synth": (cmd_synth, "render a synthetic corpus (words, out_dir)"),
    "train": (cmd_train, "train a model (manifest, checkpoint, log_csv)"),
    "predict": (cmd_predict, "greedy-decode a corpus and report LER (checkpoint, manifest)"),
    "embed": (cmd_embed, "export word-image embeddings (checkpoint, manifest, embeddings)"),
    "retrieve": (cmd_retrieve, "rank embeddings and report mAP-n (embeddings, queries, n)"),
    "gradcheck": (cmd_gradcheck, "compare analytic and finite-difference gradients"),
}


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:18s} {v.help} (default {v.default})" for k, v in SCHEMA.items())
    parser = _Parser(prog="seq2ocr", description=__doc__.splitlines()[0],
                     epilog="config keys:\n" + keys, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       dest="overrides", help="override one config key (repeatable)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="# %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"seq2ocr {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, checkpoint.CheckpointError, UnknownSymbolError, InvalidImageError,
            OSError, ValueError) as exc:
        print(f"seq2ocr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
