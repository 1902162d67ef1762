"""Small model/data builders shared by the tests."""

import numpy as np

from seq2ocr.encoder import WordImage
from seq2ocr.model import ModelConfig, Seq2SeqModel
from seq2ocr.vocab import Vocab


def tiny_model(cell="lstm", height=6, layers=2, hidden=5, embed=3, symbols="abcd", seed=0, scale=0.5):
    cfg = ModelConfig(height, layers, hidden, embed, cell)
    return Seq2SeqModel.initialize(cfg, Vocab(tuple(symbols)), seed, scale=scale)


def random_image(rng, height, width, p=0.4):
    return WordImage((rng.random((height, width)) < p).astype(np.uint8))
