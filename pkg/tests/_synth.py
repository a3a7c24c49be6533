"""Synthetic corpora shared by the test modules."""

import numpy as np

from kdlab.corpus import ParallelCorpus


def planted_corpus(n_pairs, vocab=200, len_range=(4, 12), swap_prob=0.3, seed=0,
                   distinct=True):
    """Pairs translated word by word through a fixed 1-1 dictionary, with random
    adjacent swaps on the target side.  Returns (corpus, gold links) where gold
    links are (source i, target j) sets.

    With ``distinct`` no word repeats inside a sentence; otherwise a swapped pair of
    identical words makes the gold link unidentifiable from the data."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(vocab)
    # Zipf-like word frequencies so that the aligner sees realistic skew
    zipf = 1.0 / np.arange(1, vocab + 1) ** 1.3
    zipf /= zipf.sum()
    src_sents, tgt_sents, gold = [], [], []
    for _ in range(n_pairs):
        n = int(rng.integers(len_range[0], len_range[1] + 1))
        if distinct:
            words = rng.choice(vocab, n, replace=False, p=zipf)
        else:
            words = np.minimum(rng.zipf(1.3, n) - 1, vocab - 1)
        order = list(range(n))
        j = 0
        while j < n - 1:
            if rng.random() < swap_prob:
                order[j], order[j + 1] = order[j + 1], order[j]
                j += 2
            else:
                j += 1
        src_sents.append([f"s{w}" for w in words])
        tgt_sents.append([f"t{perm[words[i]]}" for i in order])
        gold.append({(i, jj) for jj, i in enumerate(order)})
    return ParallelCorpus.from_tokens(src_sents, tgt_sents), gold


def random_corpus(n_pairs, src_vocab=8, tgt_vocab=8, max_len=6, seed=0):
    rng = np.random.default_rng(seed)
    src, tgt = [], []
    for _ in range(n_pairs):
        src.append([f"a{w}" for w in rng.integers(0, src_vocab, rng.integers(1, max_len + 1))])
        tgt.append([f"b{w}" for w in rng.integers(0, tgt_vocab, rng.integers(1, max_len + 1))])
    return ParallelCorpus.from_tokens(src, tgt)


def aer(alignments, gold):
    """Alignment error rate with sure = possible = gold links."""
    hits = n_pred = n_gold = 0
    for a, g in zip(alignments, gold):
        pred = {(i, j) for j, i in enumerate(a.links) if i is not None}
        hits += len(pred & g)
        n_pred += len(pred)
        n_gold += len(g)
    return 1.0 - 2.0 * hits / (n_pred + n_gold)
