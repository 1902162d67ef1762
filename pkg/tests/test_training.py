import math
from fractions import Fraction

import numpy as np
import pytest

from seq2ocr.dataset import LabeledSample
from seq2ocr.model import ModelConfig, Seq2SeqModel
from seq2ocr.reference import reference_loss
from seq2ocr.training import (RmsState, TrainConfig, clip_global_norm, corpus_ler, gradient_check,
                              loss_and_grads, rmsprop_update, sample_loss, split_dataset, train)

from helpers import random_image, tiny_model


def test_rmsprop_first_step_by_hand():
    theta = {"w": np.array([1.0, -2.0])}
    grad = {"w": np.array([0.5, 0.0])}
    state = RmsState(theta)
    rmsprop_update(theta, grad, state, TrainConfig(step_size=1e-4, rms_decay=0.99, rms_epsilon=1e-8))
    r = Fraction(1, 100) * Fraction(1, 4)
    step = Fraction(1, 10**4) * Fraction(1, 2) / (Fraction(1, 20) + Fraction(1, 10**8))
    assert abs(state.r["w"][0] - float(r)) < 1e-17
    assert abs(theta["w"][0] - (1 - float(step))) <= 2.3e-16
    assert theta["w"][1] == -2.0  # zero gradient leaves the parameter alone


def test_rmsprop_running_average():
    theta, grad = {"w": np.zeros(1)}, {"w": np.ones(1)}
    state = RmsState(theta)
    cfg = TrainConfig(rms_decay=0.9)
    for k in range(1, 6):
        rmsprop_update(theta, grad, state, cfg)
        assert abs(state.r["w"][0] - (1 - 0.9 ** k)) < 1e-15


def test_train_config_validation():
    for bad in (dict(step_size=-1), dict(rms_decay=1.0), dict(batch_size=0), dict(epochs=-1),
                dict(grad_clip=0.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 1.0) == 5.0
    assert abs(math.hypot(g["a"][0], g["b"][0]) - 1.0) < 1e-15
    g = {"a": np.array([0.1])}
    clip_global_norm(g, 1.0)
    assert g["a"][0] == 0.1


def test_split_sizes_and_disjointness():
    tr, va, te = split_dataset(list(range(10)), seed=1)
    assert (len(tr), len(va), len(te)) == (6, 2, 2)
    assert sorted(tr + va + te) == list(range(10))
    tr, va, te = split_dataset(list(range(7)), seed=1)
    assert (len(tr), len(va), len(te)) == (4, 1, 2)
    assert split_dataset(list(range(50)), 3) == split_dataset(list(range(50)), 3)
    with pytest.raises(ValueError):
        split_dataset([1, 2, 3, 4], 0)


@pytest.mark.parametrize("cell", ["lstm", "rnn"])
def test_reference_forward_matches_model(cell, rng):
    m = tiny_model(cell, scale=0.7)
    img = random_image(rng, 6, 9)
    ld = np.longdouble
    ref = reference_loss({k: v.astype(ld) for k, v in m.tensors.items()}, m.config, m.vocab,
                         list(img.columns().astype(ld)), [0, 3, 1], ld)
    assert abs(float(ref) - sample_loss(m, img, [0, 3, 1])) < 1e-12


@pytest.mark.parametrize("cell", ["lstm", "rnn"])
def test_gradient_check_extended(cell, rng):
    m = tiny_model(cell, hidden=4, embed=3, scale=1.0, seed=3)
    rep = gradient_check(m, random_image(rng, 6, 5), [2, 0, 1], precision="extended")
    assert rep.n_coords == m.n_params
    assert rep.max_relative_error < 1e-6 and rep.n_failed == 0


def test_gradient_check_leaves_model_untouched(rng):
    m = tiny_model(hidden=3, embed=2)
    before = m.copy()
    gradient_check(m, random_image(rng, 6, 3), [1])
    for k in m.tensors:
        assert np.array_equal(m.tensors[k], before.tensors[k])


def test_batch_gradient_is_sum_of_samples(rng):
    m = tiny_model()
    a, b = random_image(rng, 6, 4), random_image(rng, 6, 6)
    _, ga = loss_and_grads(m, a, [0, 1])
    _, gb = loss_and_grads(m, b, [2])
    acc = m.zero_grads()
    loss_and_grads(m, a, [0, 1], into=acc)
    loss_and_grads(m, b, [2], into=acc)
    for k in acc:
        assert np.allclose(acc[k], ga[k] + gb[k], rtol=0, atol=1e-14)


def _toy_corpus(rng):
    return [LabeledSample(random_image(rng, 6, 4 + k), w, f"s{k}")
            for k, w in enumerate(["ab", "ba", "dc", "cad"])]


def test_training_reduces_loss_and_is_deterministic(rng):
    data = _toy_corpus(rng)
    runs = []
    for _ in range(2):
        m = tiny_model(hidden=8, embed=4, scale=None)
        res = train(m, data, TrainConfig(step_size=1e-2, epochs=15, seed=5), val_samples=data[:2])
        runs.append(res)
    h0, h1 = runs[0].history, runs[1].history
    assert [(r.train_nll, r.val_ler) for r in h0] == [(r.train_nll, r.val_ler) for r in h1]
    assert h0[-1].train_nll < h0[0].train_nll
    assert runs[0].best_epoch is not None
    assert min(r.val_ler for r in h0) == corpus_ler(runs[0].best_model, data[:2], 8)


def test_train_callback_can_stop(rng):
    res = train(tiny_model(), _toy_corpus(rng), TrainConfig(epochs=10), callback=lambda rec, m: rec.epoch == 3)
    assert len(res.history) == 3


def test_train_rejects_uncovered_labels(rng):
    bad = [LabeledSample(random_image(rng, 6, 3), "az", "x")]
    with pytest.raises(ValueError, match="outside the vocabulary"):
        train(tiny_model(), bad, TrainConfig(epochs=1))


def test_default_max_len():
    m = Seq2SeqModel.zeros(ModelConfig(), tiny_model().vocab)
    assert m.default_max_len(8) == 20
