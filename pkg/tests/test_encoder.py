import numpy as np
import pytest

from seq2ocr.cells import LstmState, lstm_step, rnn_relu_step
from seq2ocr.encoder import EncoderOutput, InvalidImageError, WordImage, encode
from seq2ocr.model import ModelConfig, Seq2SeqModel
from seq2ocr.vocab import Vocab

from helpers import random_image, tiny_model


def test_image_contract():
    with pytest.raises(InvalidImageError):
        WordImage(np.array([[0, 2]]))
    with pytest.raises(InvalidImageError):
        WordImage(np.zeros((3, 0)))
    with pytest.raises(InvalidImageError):
        WordImage(np.zeros(4))
    img = WordImage(np.array([[1, 0, 1], [0, 0, 1]]))
    assert (img.height, img.width) == (2, 3)
    assert img.columns().tolist() == [[1, 0], [0, 0], [1, 1]]


def test_height_mismatch_rejected(rng):
    with pytest.raises(InvalidImageError):
        encode(tiny_model(), random_image(rng, 7, 4))


def test_zero_model_gives_zero_state(rng):
    m = Seq2SeqModel.zeros(ModelConfig(6, 2, 4, 3), Vocab(("a", "b")))
    z, _ = encode(m, random_image(rng, 6, 9))
    for v in z.h + z.c:
        assert np.array_equal(v, np.zeros(4))


@pytest.mark.parametrize("cell", ["lstm", "rnn"])
def test_state_dimension_independent_of_width(cell, rng):
    m = tiny_model(cell)
    dims = set()
    for w in (1, 3, 10, 50, 200):
        z, _ = encode(m, random_image(rng, 6, w))
        dims.add(z.dim)
        assert all(np.all(np.isfinite(v)) for v in z.h + (z.c or []))
    assert dims == {(4 if cell == "lstm" else 2) * 5}


def test_encoder_matches_stepwise_definition(backend, rng):
    m = tiny_model("lstm")
    img = random_image(rng, 6, 11)
    z, _ = encode(m, img)
    X = list(img.columns())
    for n in range(2):
        p = m.layer("enc", n)
        s = LstmState(np.zeros(5), np.zeros(5))
        out = []
        for x in X:
            s, _ = lstm_step(p, x, s)
            out.append(s.h)
        assert np.allclose(z.h[n], s.h, rtol=0, atol=1e-14)
        assert np.allclose(z.c[n], s.c, rtol=0, atol=1e-14)
        X = out


def test_rnn_encoder_matches_stepwise_definition(backend, rng):
    m = tiny_model("rnn")
    img = random_image(rng, 6, 8)
    z, _ = encode(m, img)
    assert z.c is None
    X = list(img.columns())
    for n in range(2):
        h = np.zeros(5)
        out = []
        for x in X:
            h = rnn_relu_step(m.layer("enc", n), x, h)
            out.append(h)
        assert np.allclose(z.h[n], h, rtol=0, atol=1e-14)
        X = out


def test_encoder_output_helpers():
    z = EncoderOutput([np.ones(2), np.ones(2)], [np.ones(2), np.ones(2)])
    assert z.layers == 2 and z.dim == 8 and len(z.states) == 2
    assert EncoderOutput.zeros_like(z).h[0].tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        EncoderOutput([np.ones(2)]).states
