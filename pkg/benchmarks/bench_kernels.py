"""Time the compiled and numpy kernel backends on encoder-sized workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Prints microseconds per timestep for the LSTM and relu sequence kernels,
milliseconds per full training update (encode, decode, backward), and the
largest absolute difference between the backends' outputs.
"""

import argparse
import time

import numpy as np

from seq2ocr import kernels
from seq2ocr.dataset import FontAtlas, RenderJitter, render_word
from seq2ocr.model import ModelConfig, Seq2SeqModel
from seq2ocr.training import loss_and_grads
from seq2ocr.vocab import Vocab


def timeit(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def lstm_case(rng, T, n_in, d, binary):
    X = rng.random((T, n_in))
    if binary:
        X = (X < 0.3).astype(float)
    z = np.zeros(d)
    p = [rng.uniform(-0.1, 0.1, s) for s in ((4 * d, n_in), (4 * d, d), (3, d))] + [np.zeros(4 * d)]
    return X, z, p


def bench_backend(name, repeat, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    rows = {}
    with kernels.use_backend(name):
        for label, (T, n_in, d, binary) in {"lstm layer 1 (30 -> 64)": (80, 30, 64, True),
                                            "lstm layer 2 (64 -> 64)": (80, 64, 64, False)}.items():
            X, z, (Wx, Wh, wp, b) = lstm_case(rng, T, n_in, d, binary)
            H, C, G = kernels.lstm_forward(X, z, z, Wx, Wh, wp, b)
            g = [np.zeros_like(a) for a in (Wx, Wh, wp, b)]
            dH = rng.standard_normal((T, d))
            fwd = timeit(lambda: kernels.lstm_forward(X, z, z, Wx, Wh, wp, b), repeat) / T * 1e6
            bwd = timeit(lambda: kernels.lstm_backward(X, z, z, Wx, Wh, wp, H, C, G, dH, z, *g), repeat) / T * 1e6
            rows[label] = (fwd, bwd)
        T, d = 80, 64
        X = rng.random((T, d))
        W, U, b = rng.uniform(-0.1, 0.1, (d, d)), rng.uniform(-0.1, 0.1, (d, d)), np.zeros(d)
        H = kernels.rnn_forward(X, z, W, U, b)
        g = [np.zeros_like(a) for a in (W, U, b)]
        dH = rng.standard_normal((T, d))
        rows["relu layer (64 -> 64)"] = (
            timeit(lambda: kernels.rnn_forward(X, z, W, U, b), repeat) / T * 1e6,
            timeit(lambda: kernels.rnn_backward(X, z, W, U, H, dH, *g), repeat) / T * 1e6)

        vocab = Vocab(tuple("abcdefghijklmnopqrstuvwxyz"))
        model = Seq2SeqModel.initialize(ModelConfig(), vocab, 0)
        img = render_word("retrieval", FontAtlas.builtin(), RenderJitter(), seed=1)
        label = vocab.encode("retrieval")
        step = timeit(lambda: loss_and_grads(model, img, label), max(1, repeat // 10)) * 1e3
        loss, grads = loss_and_grads(model, img, label)
    return rows, step, (loss, grads), img.width


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    results = {name: bench_backend(name, args.repeat) for name in kernels.available_backends()}
    names = list(results)
    print("kernel timings, microseconds per timestep (forward / backward)")
    print(f"{'':28s}" + "".join(f"{n:>24s}" for n in names))
    for label in results[names[0]][0]:
        cells = "".join(f"{results[n][0][label][0]:11.2f} /{results[n][0][label][1]:10.2f}" for n in names)
        print(f"{label:28s}{cells}")
    width = results[names[0]][3]
    print(f"\ntraining update, 9-letter word ({width} columns), milliseconds")
    print(f"{'':28s}" + "".join(f"{results[n][1]:24.2f}" for n in names))
    if len(names) == 2:
        (la, ga), (lb, gb) = results[names[0]][2], results[names[1]][2]
        diff = max(float(np.max(np.abs(ga[k] - gb[k]))) for k in ga)
        fast, slow = sorted(names, key=lambda n: results[n][1])
        print(f"\nspeedup of {fast} over {slow}: {results[slow][1] / results[fast][1]:.1f}x")
        print(f"max |loss difference| {abs(la - lb):.2e}, max |gradient difference| {diff:.2e}")


if __name__ == "__main__":
    main()
