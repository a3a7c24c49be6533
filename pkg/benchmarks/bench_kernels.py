"""Compare the compiled and numpy kernel backends on fixed synthetic workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--quick]
"""

import argparse
import time

import numpy as np

from kdlab import _pykernels
from kdlab.align import _index_links
from kdlab.corpus import ParallelCorpus
from kdlab.hmmlab import random_hmm, sample_dataset
from kdlab.student import feature_matrix, n_features

try:
    from kdlab import _ckernels
except ImportError:
    _ckernels = None


def workloads(quick):
    n_seq = 200 if quick else 1000
    hmm = random_hmm(8, 20, seed=1)
    xs = [np.asarray(s.x, dtype=np.int64) for s in sample_dataset(hmm, n_seq, (10, 30), 2).seqs]
    lp, lA, lB = (np.log(m) for m in (hmm.init, hmm.trans, hmm.emit))
    P = (hmm.init, hmm.trans, hmm.emit)
    rng = np.random.default_rng(0)
    us = [rng.random(len(x)) for x in xs]

    n_pairs = 300 if quick else 2000
    src = [[f"s{w}" for w in rng.integers(0, 300, rng.integers(5, 25))] for _ in range(n_pairs)]
    tgt = [[f"t{w}" for w in rng.integers(0, 300, rng.integers(5, 25))] for _ in range(n_pairs)]
    idx = _index_links(ParallelCorpus.from_tokens(src, tgt))
    tprob = np.full(len(idx.keys), 0.01)

    train = sample_dataset(random_hmm(5, 10, seed=3), 500 if quick else 2000, (4, 10), 4)
    feats = feature_matrix(train.xs, 2, 10)
    labels = np.concatenate([np.asarray(s.y, dtype=np.int64) for s in train.seqs])
    order = np.arange(len(labels), dtype=np.int64)
    D = n_features(2, 10)

    def estep(k):
        counts = np.zeros(len(tprob))
        k.align_estep(tprob, idx.link_idx, idx.offsets, idx.src_len, idx.tgt_len,
                      0, len(idx.src_len), 4.0, 0.08, counts)

    return {
        "viterbi": lambda k: [k.viterbi(lp, lA, lB, x) for x in xs],
        "forward_backward": lambda k: [k.forward_backward(*P, x) for x in xs],
        "beam_search(4)": lambda k: [k.beam_search(*P, x, 4) for x in xs],
        "greedy": lambda k: [k.greedy(*P, x) for x in xs],
        "ffbs": lambda k: [k.ffbs(*P, x, u) for x, u in zip(xs, us)],
        "align_estep": estep,
        "sgd_epoch": lambda k: k.sgd_epoch(np.zeros((D, 5)), feats, labels, order, 0.1, 32),
    }


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':<18}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, fn in workloads(args.quick).items():
        tp = timed(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<18}{tp:>12.4f}{'-':>12}{'-':>10}")
            continue
        tc = timed(lambda: fn(_ckernels), args.repeat)
        print(f"{name:<18}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
