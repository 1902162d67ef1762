"""Empirical-risk training with BPTT and RMSProp, plus gradient checking."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .decoder import decode_greedy, nll_forward, teacher_forced_nll
from .encoder import WordImage, encode, encode_backward
from .metrics import label_error_rate
from .model import Seq2SeqModel
from .reference import reference_loss
from .rng import XorShift64Star

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    step_size: float = 1e-4
    rms_decay: float = 0.99
    rms_epsilon: float = 1e-8
    epochs: int = 10
    seed: int = 0
    grad_clip: float | None = None
    batch_size: int = 1
    # 0 disables; otherwise greedy-decode the training split every k epochs
    train_ler_every: int = 0

    def __post_init__(self):
        if not self.step_size >= 0.0:
            raise ValueError("step_size must be >= 0")
        if not 0.0 < self.rms_decay < 1.0:
            raise ValueError("rms_decay must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.grad_clip is not None and self.grad_clip <= 0.0:
            raise ValueError("grad_clip must be positive")


class RmsState:
    """Running mean of squared gradients, one array per parameter tensor."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.r = {k: np.zeros_like(v) for k, v in tensors.items()}


def rmsprop_update(theta: dict[str, np.ndarray], grad: dict[str, np.ndarray],
                   state: RmsState, cfg: TrainConfig) -> None:
    """In place: ``r = d r + (1-d) g^2``; ``theta -= step * g / (sqrt(r) + eps)``."""
    d, step, eps = cfg.rms_decay, cfg.step_size, cfg.rms_epsilon
    for name, g in grad.items():
        p, r = theta[name], state.r[name]
        if p.shape != g.shape or r.shape != g.shape:
            raise ValueError(f"{name}: shape mismatch {p.shape} / {g.shape} / {r.shape}")
        r *= d
        r += (1.0 - d) * (g * g)
        p -= step * g / (np.sqrt(r) + eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def loss_and_grads(model: Seq2SeqModel, image: WordImage, label_ids,
                   into: dict[str, np.ndarray] | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Per-sample NLL and its gradient w.r.t. every model tensor."""
    z, trace = encode(model, image, keep_trace=True)
    loss, dg = teacher_forced_nll(model, z, label_ids, into=into)
    encode_backward(model, trace, dg.z, dg.tensors)
    return loss, dg.tensors


def sample_loss(model: Seq2SeqModel, image: WordImage, label_ids) -> float:
    z, _ = encode(model, image)
    return nll_forward(model, z, label_ids)


def predict(model: Seq2SeqModel, image: WordImage, max_len: int) -> str:
    z, _ = encode(model, image)
    return decode_greedy(model, z, max_len).text


def corpus_ler(model: Seq2SeqModel, samples: Sequence, max_len: int) -> float:
    return label_error_rate([(s.label, predict(model, s.image, max_len)) for s in samples])


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_ler: float | None = None
    train_ler: float | None = None
    seconds: float = 0.0


@dataclass
class TrainResult:
    model: Seq2SeqModel
    history: list[EpochRecord] = field(default_factory=list)
    best_model: Seq2SeqModel | None = None
    best_epoch: int | None = None
    rms: RmsState | None = None


def train(model: Seq2SeqModel, train_samples: Sequence, cfg: TrainConfig,
          val_samples: Sequence = (), max_len: int | None = None,
          callback: Callable[[EpochRecord, Seq2SeqModel], bool | None] | None = None) -> TrainResult:
    """Minimize the mean per-sample NLL over ``train_samples``.

    The model is updated in place and also returned. Each epoch visits the
    training split in a fresh seeded shuffle; ``batch_size`` samples are
    averaged per update. After every epoch the validation split (if any)
    is greedy-decoded and the best-LER model is retained. ``callback``
    may return True to end training after the current epoch.
    """
    if not train_samples:
        raise ValueError("training split is empty")
    vocab = model.vocab
    encoded = []
    for s in train_samples:
        missing = vocab.missing(s.label)
        if missing:
            raise ValueError(f"training label {s.label!r} uses symbols outside the vocabulary: {missing}")
        encoded.append(vocab.encode(s.label))
    if max_len is None:
        max_len = model.default_max_len(max(len(s.label) for s in train_samples))

    result = TrainResult(model)
    state = RmsState(model.tensors)
    result.rms = state
    order_rng = XorShift64Star(cfg.seed ^ 0x5EED)
    best_ler = math.inf
    grads = model.zero_grads()

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(train_samples))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            for g in grads.values():
                g.fill(0.0)
            for k in batch:
                loss, _ = loss_and_grads(model, train_samples[k].image, encoded[k], into=grads)
                total += loss
            if len(batch) > 1:
                for g in grads.values():
                    g /= len(batch)
            if cfg.grad_clip is not None:
                clip_global_norm(grads, cfg.grad_clip)
            rmsprop_update(model.tensors, grads, state, cfg)

        rec = EpochRecord(epoch, total / len(train_samples))
        if val_samples:
            rec.val_ler = corpus_ler(model, val_samples, max_len)
            if rec.val_ler < best_ler:
                best_ler = rec.val_ler
                result.best_model = model.copy()
                result.best_epoch = epoch
        if cfg.train_ler_every and epoch % cfg.train_ler_every == 0:
            rec.train_ler = corpus_ler(model, train_samples, max_len)
        rec.seconds = time.perf_counter() - t0
        result.history.append(rec)
        log.info("epoch %d nll %.6f val_ler %s train_ler %s (%.1fs)", epoch, rec.train_nll,
                 rec.val_ler, rec.train_ler, rec.seconds)
        if callback is not None and callback(rec, model):
            break
    return result


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_tensor: str
    worst_index: tuple
    analytic: float
    numeric: float
    n_coords: int
    n_failed: int = 0
    precision: str = "float64"


def gradient_check(model: Seq2SeqModel, image: WordImage, label_ids,
                   epsilon: float = 1e-5, precision: str = "float64",
                   threshold: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients with central differences on every coordinate.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-12)``. With
    ``precision="float64"`` the differences are taken on the model's own
    forward pass. ``"extended"`` evaluates them with the independent
    long-double reference forward instead, which removes most of the
    float64 round-off from the numeric side; analytic gradients are
    float64 either way. ``n_failed`` counts coordinates above ``threshold``.
    """
    if precision not in ("float64", "extended"):
        raise ValueError(f"precision must be 'float64' or 'extended', got {precision!r}")
    label_ids = list(label_ids)
    _, analytic = loss_and_grads(model, image, label_ids)
    if precision == "extended":
        ld = np.longdouble
        params = {k: v.astype(ld) for k, v in model.tensors.items()}
        cols = list(image.columns().astype(ld))
        step = ld(epsilon)

        def loss():
            return reference_loss(params, model.config, model.vocab, cols, label_ids, ld)
    else:
        params = model.tensors
        step = epsilon

        def loss():
            return sample_loss(model, image, label_ids)

    worst = GradCheckReport(0.0, "", (), 0.0, 0.0, 0)
    n_coords = n_failed = 0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + step
            plus = loss()
            flat[j] = old - step
            minus = loss()
            flat[j] = old
            numeric = float((plus - minus) / (2 * step))
            a = float(a_flat[j])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            n_coords += 1
            n_failed += rel >= threshold
            if rel > worst.max_relative_error or not worst.worst_tensor:
                worst = GradCheckReport(rel, name, tuple(int(i) for i in np.unravel_index(j, theta.shape)),
                                        a, numeric, 0)
    worst.n_coords = n_coords
    worst.n_failed = n_failed
    worst.precision = precision
    return worst


def split_dataset(corpus: Sequence, seed: int) -> tuple[list, list, list]:
    """Seeded 60/20/20 split; train and validation sizes are floored."""
    n = len(corpus)
    if n < 5:
        raise ValueError(f"corpus of {n} samples is too small to split (need >= 5)")
    idx = XorShift64Star(seed).permutation(n)
    n_train = (n * 60) // 100
    n_val = (n * 20) // 100
    items = [corpus[k] for k in idx]
    return items[:n_train], items[n_train:n_train + n_val], items[n_train + n_val:]
