import math

import numpy as np
import pytest

from seq2ocr.cells import LstmState, lstm_step
from seq2ocr.decoder import decode_greedy, nll_forward, teacher_forced_nll
from seq2ocr.encoder import EncoderOutput, encode
from seq2ocr.model import ModelConfig, Seq2SeqModel
from seq2ocr.tensor import ShapeError
from seq2ocr.vocab import UnknownSymbolError, Vocab

from helpers import random_image, tiny_model


def test_vocab_layout():
    v = Vocab.from_labels(["cab", "bad"])
    assert v.symbols == ("a", "b", "c", "d")
    assert (v.eos_id, v.sos_id, v.output_dim, v.size) == (4, 5, 5, 6)
    assert v.decode(v.encode("dab")) == "dab"
    with pytest.raises(UnknownSymbolError):
        v.encode("z")
    with pytest.raises(UnknownSymbolError):
        v.decode([4])
    with pytest.raises(ValueError):
        Vocab(("a", "a"))


def test_nll_matches_stepwise_evaluation(rng):
    m = tiny_model()
    z, _ = encode(m, random_image(rng, 6, 7))
    label = [2, 0, 3]
    v = m.vocab
    states = [LstmState(h, c) for h, c in zip(z.h, z.c)]
    expected = 0.0
    for prev, target in zip([v.sos_id] + label, label + [v.eos_id]):
        x = m.tensors["embed"][prev]
        for n in range(2):
            states[n], _ = lstm_step(m.layer("dec", n), x, states[n])
            x = states[n].h
        logits = m.tensors["out.W"] @ x + m.tensors["out.b"]
        expected -= logits[target] - math.log(sum(math.exp(a) for a in logits))
    assert abs(nll_forward(m, z, label) - expected) < 1e-12
    loss, _ = teacher_forced_nll(m, z, label)
    assert loss == nll_forward(m, z, label)


def test_zero_model_ties_go_to_lowest_id():
    m = Seq2SeqModel.zeros(ModelConfig(6, 2, 4, 3), Vocab(tuple("xyz")))
    z = EncoderOutput([np.zeros(4)] * 2, [np.zeros(4)] * 2)
    res = decode_greedy(m, z, 5)
    assert res.text == "xxxxx" and res.truncated and len(res.stepwise_logprobs) == 5


def test_decoding_stops_at_eos():
    m = Seq2SeqModel.zeros(ModelConfig(6, 1, 4, 3), Vocab(tuple("xyz")))
    m.tensors["out.b"][m.vocab.eos_id] = 1.0
    res = decode_greedy(m, EncoderOutput([np.zeros(4)], [np.zeros(4)]), 5)
    assert res.text == "" and res.ids == [] and not res.truncated


def test_greedy_output_is_reproducible(rng):
    m = tiny_model(scale=1.5)
    z, _ = encode(m, random_image(rng, 6, 12))
    a, b = decode_greedy(m, z, 9), decode_greedy(m, z, 9)
    assert a == b and len(a.ids) <= 9
    assert all(0 <= k < m.vocab.n_symbols for k in a.ids)


def test_invalid_inputs(rng):
    m = tiny_model()
    z, _ = encode(m, random_image(rng, 6, 4))
    with pytest.raises(ValueError):
        decode_greedy(m, z, 0)
    with pytest.raises(ValueError):
        nll_forward(m, z, [])
    with pytest.raises(UnknownSymbolError):
        nll_forward(m, z, [m.vocab.eos_id])
    with pytest.raises(ShapeError):
        nll_forward(m, EncoderOutput([np.zeros(5)], [np.zeros(5)]), [0])
    with pytest.raises(ShapeError):
        nll_forward(m, EncoderOutput([np.zeros(5)] * 2), [0])


def test_decoder_gradient_wrt_encoder_state(rng):
    m = tiny_model(scale=0.8)
    z, _ = encode(m, random_image(rng, 6, 5))
    label = [1, 3]
    _, g = teacher_forced_nll(m, z, label)
    eps = 1e-6
    for part, grad in (("h", g.z.h), ("c", g.z.c)):
        for n in range(2):
            for r in range(5):
                vec = getattr(z, part)[n]
                old = vec[r]
                vec[r] = old + eps
                plus = nll_forward(m, z, label)
                vec[r] = old - eps
                minus = nll_forward(m, z, label)
                vec[r] = old
                assert abs((plus - minus) / (2 * eps) - grad[n][r]) < 1e-7
