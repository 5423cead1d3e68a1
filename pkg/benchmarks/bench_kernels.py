"""Compare the compiled and pure-Python kernels on synthetic inputs.

    python3 benchmarks/bench_kernels.py [--utterances 2000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from scenethreads import kernels


def make_inputs(n, rng, pool=6, vocab=300, labels=40):
    speakers = rng.integers(0, 6, n)
    turns = np.cumsum(rng.random(n) < 0.6)
    lens = rng.integers(2, 12, n)
    indptr = np.concatenate([[0], np.cumsum(lens)])
    ids = np.concatenate([np.sort(rng.choice(vocab, k, replace=False)) for k in lens])
    ui = np.repeat(np.arange(n), pool)
    uj = np.maximum(ui - np.tile(np.arange(pool), n), 0)
    a, b = rng.integers(0, labels, n), rng.integers(0, labels, n)
    return speakers, turns, indptr, ids, ui, uj, a, b, labels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--utterances", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    speakers, turns, indptr, ids, ui, uj, a, b, k = make_inputs(args.utterances, np.random.default_rng(args.seed))
    ufeat = kernels.utterance_features(speakers)
    cases = {
        "contingency": lambda impl: kernels.contingency(a, b, k, k, impl=impl),
        "utterance_features": lambda impl: kernels.utterance_features(speakers, impl=impl),
        "pair_features": lambda impl: kernels.pair_features(speakers, turns, indptr, ids, ui, uj, ufeat, impl=impl),
    }
    impls = kernels.backends()
    print(f"{args.utterances} utterances, {len(ui)} pairs, best of {args.repeat}; default backend: {kernels.BACKEND}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for name, fn in cases.items():
        outs = {b: fn(impl) for b, impl in impls.items()}
        ref = outs["python"]
        for out in outs.values():
            assert np.array_equal(out, ref), f"{name}: backends disagree"
        times = {b: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)) for b, impl in impls.items()}
        speed = f"{times['python'] / times['cython']:.1f}x" if "cython" in times else "-"
        print(f"{name:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values()) + f"{speed:>10}")


if __name__ == "__main__":
    main()
