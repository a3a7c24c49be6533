"""Synthetic property experiments built on the HMM teacher.

Every driver derives its randomness from ``master_seed`` through named
sub-streams, so results depend only on (master_seed, arguments).
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from statistics import median

import numpy as np

from kdlab.hmmlab import (DecodeStrategy, HmmDataset, LabeledSeq, dataset_complexity, distill,
                          fit_supervised, random_hmm, reborn_loop, sample_dataset, token_agreement)
from kdlab.reports import TableReport
from kdlab.student import evaluate_bayes


def stream(master_seed: int, name: str, *index: int) -> int:
    """Integer seed for the sub-stream ``name`` at ``index``."""
    key = (zlib.crc32(name.encode()), *index)
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1)[0])


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def bayes_direction(seeds: int = 50, n_test: int = 5000, K: int = 5, V: int = 10,
                    len_range=(4, 10), master_seed: int = 42, threads: int = 1) -> TableReport:
    """Per seed: accuracies of both Bayes classifiers on a fresh sample of the teacher."""
    def one(i):
        hmm = random_hmm(K, V, seed=stream(master_seed, "bayes.hmm", i))
        test = sample_dataset(hmm, n_test, len_range, stream(master_seed, "bayes.test", i))
        b = evaluate_bayes(hmm, test)
        return [i, b["tok"].tacc, b["seq"].tacc, b["seq"].sacc, b["tok"].sacc]

    rows = _map(one, range(seeds), threads)
    tok_ok = sum(r[1] >= r[2] for r in rows)
    seq_ok = sum(r[3] >= r[4] for r in rows)
    return TableReport("bayes-direction",
                       ["seed", "tacc_tok", "tacc_seq", "sacc_seq", "sacc_tok"], rows,
                       {"seeds": seeds, "tok_wins_tacc": tok_ok, "seq_wins_sacc": seq_ok,
                        "frac_tacc": tok_ok / seeds, "frac_sacc": seq_ok / seeds})


def multimode_datasets(index: int, K: int = 5, V: int = 50, N: int = 2000, n_modes: int = 3,
                       len_range=(4, 10), master_seed: int = 42) -> dict[str, HmmDataset]:
    """Real multi-reference data and its two reductions.

    Observations come from one HMM; each of ``n_modes`` teachers with its own
    block of labels samples a label sequence from its posterior.  ``full``
    keeps every mode, ``random`` keeps one uniformly chosen mode per
    observation, ``distilled`` relabels with Viterbi under a single teacher
    fitted on ``full``.
    """
    src = random_hmm(K, V, seed=stream(master_seed, "mm.source", index))
    base = sample_dataset(src, N, len_range, stream(master_seed, "mm.x", index))
    modes = []
    for j in range(n_modes):
        teacher = random_hmm(K, V, seed=stream(master_seed, "mm.teacher", index, j))
        d = distill(teacher, base, DecodeStrategy("sample"),
                    seed=stream(master_seed, "mm.sample", index, j))
        modes.append([tuple(v + j * K for v in y) for y in d.ys])
    KK = n_modes * K
    full = HmmDataset(tuple(LabeledSeq(s.x, modes[j][i]) for j in range(n_modes)
                            for i, s in enumerate(base.seqs)), KK, V, "full")
    pick = np.random.default_rng(stream(master_seed, "mm.pick", index)).integers(0, n_modes, N)
    rand = HmmDataset(tuple(LabeledSeq(s.x, modes[pick[i]][i]) for i, s in enumerate(base.seqs)),
                      KK, V, "random-select")
    fitted = fit_supervised(full, K=KK, V=V)
    relabel = HmmDataset(tuple(LabeledSeq(s.x, modes[0][i]) for i, s in enumerate(base.seqs)),
                         KK, V, "x")
    dist = distill(fitted, relabel, DecodeStrategy("viterbi"))
    return {"distilled": dist, "random-select": rand, "full": full}


def multimode_complexity(seeds: int = 20, master_seed: int = 42, threads: int = 1,
                         **kw) -> TableReport:
    def one(i):
        ds = multimode_datasets(i, master_seed=master_seed, **kw)
        return [i] + [dataset_complexity(ds[k]) for k in ("distilled", "random-select", "full")]

    rows = _map(one, range(seeds), threads)
    ok = sum(r[1] < r[2] < r[3] for r in rows)
    means = [math.fsum(r[c] for r in rows) / seeds for c in (1, 2, 3)]
    return TableReport("multimode-complexity", ["seed", "distilled", "random_select", "full"],
                       rows, {"seeds": seeds, "ordered": ok,
                              "mean": dict(zip(("distilled", "random_select", "full"), means))},
                       {"type": "bars", "labels": ["distilled", "random-select", "full"],
                        "values": means, "title": "mean C(d)"})


STRATEGIES = ("beam:5", "greedy", "topk:10", "sample")


def strategy_complexity(seeds: int = 20, K: int = 20, V: int = 50, N: int = 2000,
                        len_range=(4, 10), master_seed: int = 42, threads: int = 1,
                        slack: float = 0.02) -> TableReport:
    """C(d) of one teacher's training set distilled with each decoding strategy."""
    names = [s if not s.startswith("topk") else f"topk:{min(10, K)}" for s in STRATEGIES]

    def one(i):
        hmm = random_hmm(K, V, seed=stream(master_seed, "strat.hmm", i))
        data = sample_dataset(hmm, N, len_range, stream(master_seed, "strat.data", i))
        seed = stream(master_seed, "strat.decode", i)
        return [i] + [dataset_complexity(distill(hmm, data, DecodeStrategy.parse(n), seed=seed))
                      for n in names]

    rows = _map(one, range(seeds), threads)
    ok = sum(all(r[c] <= r[c + 1] + slack for c in range(1, len(names))) for r in rows)
    means = [math.fsum(r[c] for r in rows) / seeds for c in range(1, len(names) + 1)]
    return TableReport("strategy-complexity", ["seed"] + names, rows,
                       {"seeds": seeds, "ordered": ok, "slack": slack,
                        "mean": dict(zip(names, means))},
                       {"type": "bars", "labels": names, "values": means, "title": "mean C(d)"})


def reborn_traces(seeds: int = 10, iters: int = 8, K: int = 5, V: int = 10, N: int = 2000,
                  len_range=(4, 10), strategy: str = "viterbi", smoothing_alpha: float = 0.0,
                  master_seed: int = 42, threads: int = 1) -> TableReport:
    """C(d) after each refit-and-relabel round; column 0 is the real data."""
    strat = DecodeStrategy.parse(strategy)

    def one(i):
        hmm = random_hmm(K, V, seed=stream(master_seed, "reborn.hmm", i))
        data = sample_dataset(hmm, N, len_range, stream(master_seed, "reborn.data", i))
        steps = reborn_loop(hmm, data, iters, strat, smoothing_alpha,
                            seed=stream(master_seed, "reborn.decode", i))
        return [i] + [s.complexity for s in steps]

    rows = _map(one, range(seeds), threads)
    med = [median(r[c] for r in rows) for c in range(1, iters + 2)]
    below = sum(r[2] < r[1] for r in rows)
    return TableReport("reborn-trace", ["seed"] + [f"C{t}" for t in range(iters + 1)], rows,
                       {"seeds": seeds, "median_trace": med, "first_below_real": below},
                       {"type": "bars", "labels": [str(t) for t in range(iters + 1)],
                        "values": med, "title": "median C(d) per iteration"})


def interpolation_overlap(seeds: int = 20, n: int = 1000, beam_k: int = 3, K: int = 5,
                          V: int = 10, len_range=(4, 10), master_seed: int = 42,
                          threads: int = 1) -> TableReport:
    """Token overlap with the references of interpolated vs. plain Viterbi labels."""
    def one(i):
        hmm = random_hmm(K, V, seed=stream(master_seed, "interp.hmm", i))
        data = sample_dataset(hmm, n, len_range, stream(master_seed, "interp.data", i))
        inter = distill(hmm, data, DecodeStrategy("interpolate", width=beam_k))
        vit = distill(hmm, data, DecodeStrategy("viterbi"))
        return [i, token_agreement(inter.ys, data.ys), token_agreement(vit.ys, data.ys)]

    rows = _map(one, range(seeds), threads)
    return TableReport("interpolation-overlap", ["seed", "interpolated", "viterbi"], rows,
                       {"seeds": seeds, "beam_k": beam_k,
                        "not_worse": sum(r[1] >= r[2] for r in rows),
                        "strictly_better": sum(r[1] > r[2] for r in rows)})
