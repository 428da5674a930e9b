"""Compare the compiled and numpy GRU kernels.

    python benchmarks/bench_gru.py [--hidden 64] [--repeat 200] [--train-epochs 2]

Prints a TAB-separated table: per batch size, the forward+backward time of
one GRU cell under each backend, then (optionally) the wall time of a few
LMM training epochs on the toy corpus under each backend.
"""

from __future__ import annotations

import argparse
import time
import timeit

import numpy as np

from latmorph import kernels


def bench_cell(backend: str, n: int, n_in: int, hidden: int, repeat: int, dtype) -> float:
    kernels.use_backend(backend)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, n_in)).astype(dtype)
    h = rng.standard_normal((n, hidden)).astype(dtype)
    w_ih = (0.1 * rng.standard_normal((3 * hidden, n_in))).astype(dtype)
    w_hh = (0.1 * rng.standard_normal((3 * hidden, hidden))).astype(dtype)
    b = np.zeros(3 * hidden, dtype=dtype)
    g = np.ones((n, hidden), dtype=dtype)

    def run():
        out, cache = kernels.gru_forward(x, h, w_ih, w_hh, b)
        kernels.gru_backward(g, x, h, w_ih, w_hh, cache)

    run()
    return min(timeit.repeat(run, number=repeat, repeat=3)) / repeat


def bench_training(backend: str, epochs: int) -> float:
    from latmorph.config import RunConfig
    from latmorph.toygen import gen_corpus
    from latmorph.training import train

    kernels.use_backend(backend)
    pairs = [(p.source, p.target) for p in gen_corpus(1, 50)]
    cfg = RunConfig(epochs=epochs, checkpoint="")
    t0 = time.perf_counter()
    train(cfg, pairs, pairs)
    return time.perf_counter() - t0


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--inputs", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--batches", default="1,4,16,64,256")
    ap.add_argument("--train-epochs", type=int, default=2)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("# compiled kernels not built; only the numpy fallback is timed")
    print("batch\t" + "\t".join(f"{b}_us" for b in backends) + "\tspeedup")
    for n in (int(v) for v in args.batches.split(",")):
        times = {b: bench_cell(b, n, args.inputs, args.hidden, args.repeat, np.float32) * 1e6
                 for b in backends}
        speed = times["numpy"] / times["cython"] if "cython" in times else 1.0
        print(f"{n}\t" + "\t".join(f"{times[b]:.1f}" for b in backends) + f"\t{speed:.2f}")
    if args.train_epochs > 0:
        print("workload\t" + "\t".join(f"{b}_s" for b in backends) + "\tspeedup")
        times = {b: bench_training(b, args.train_epochs) for b in backends}
        speed = times["numpy"] / times["cython"] if "cython" in times else 1.0
        print(f"lmm_train_{args.train_epochs}ep\t" + "\t".join(f"{times[b]:.2f}" for b in backends)
              + f"\t{speed:.2f}")


if __name__ == "__main__":
    main()
