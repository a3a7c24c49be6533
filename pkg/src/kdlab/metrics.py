"""Corpus measures: lexical complexity, faithfulness, fuzzy reordering, histograms.

All entropies are in nats unless ``log_base=2`` is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from kdlab.corpus import NULL_ID, NULL_TOKEN, ParallelCorpus, SentencePair, Vocab


def _log_scale(log_base) -> float:
    if log_base in (None, "e", math.e):
        return 1.0
    return 1.0 / math.log(float(log_base))


def entropy(dist) -> float:
    """Entropy (nats) of an unnormalized non-negative count/probability vector."""
    v = np.asarray([c for c in dist if c > 0], dtype=np.float64)
    if v.size == 0:
        return 0.0
    p = v / v.sum()
    return float(max(0.0, -(p * np.log(p)).sum()))


@dataclass
class LexCounts:
    """Expected link counts: source id -> target id -> count."""

    rows: dict[int, dict[int, float]]
    src_vocab: Vocab
    tgt_vocab: Vocab
    _entropy: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def total(self, s: int) -> float:
        return float(sum(self.rows.get(s, {}).values()))

    def totals(self) -> dict[int, float]:
        return {s: self.total(s) for s in self.rows}

    def add(self, s: int, t: int, c: float) -> None:
        row = self.rows.setdefault(s, {})
        row[t] = row.get(t, 0.0) + c
        self._entropy.pop(s, None)

    def entropy(self, s: int) -> float:
        if s not in self._entropy:
            row = self.rows.get(s)
            self._entropy[s] = entropy(row[t] for t in sorted(row)) if row else 0.0
        return self._entropy[s]

    def distribution(self, s: int) -> dict[str, float]:
        """p(y | x = s) keyed by target token string."""
        row = self.rows.get(s, {})
        tot = sum(row.values())
        return {self.tgt_vocab.token(t): c / tot for t, c in sorted(row.items()) if c > 0}

    def by_token(self) -> dict[str, int]:
        return {self.src_vocab.token(s): s for s in self.rows}


def lex_counts(corpus: ParallelCorpus, alignments=None, mode: str = "viterbi") -> LexCounts:
    """Accumulate link counts.

    ``mode`` is ``viterbi`` (``alignments`` = SentenceAlignment list, NULL links
    counted under the NULL word), ``posterior`` (``alignments`` = link-posterior
    matrices with NULL in the last column) or ``identity`` (target j linked to
    source j; needs equal lengths).
    """
    counts = LexCounts({}, corpus.src_vocab, corpus.tgt_vocab)
    if mode == "identity":
        for k, pair in enumerate(corpus.pairs):
            if len(pair.src) != len(pair.tgt):
                raise ValueError(
                    f"identity alignment needs equal lengths; pair {k} has "
                    f"{len(pair.src)} source vs {len(pair.tgt)} target tokens")
            for s, t in zip(pair.src, pair.tgt):
                counts.add(s, t, 1.0)
        return counts
    if alignments is None or len(alignments) != len(corpus.pairs):
        raise ValueError("need one alignment per sentence pair")
    if mode == "viterbi":
        for pair, al in zip(corpus.pairs, alignments):
            for j, i in enumerate(al.links):
                s = NULL_ID if i is None else pair.src[i]
                counts.add(s, pair.tgt[j], 1.0)
    elif mode == "posterior":
        for k, (pair, post) in enumerate(zip(corpus.pairs, alignments)):
            post = np.asarray(post)
            tx = len(pair.src)
            if post.shape != (len(pair.tgt), tx + 1):
                raise ValueError(f"pair {k}: posterior shape {post.shape} does not match")
            for j, t in enumerate(pair.tgt):
                for i in range(tx + 1):
                    c = float(post[j, i])
                    if c > 0:
                        counts.add(NULL_ID if i == tx else pair.src[i], t, c)
    else:
        raise ValueError(f"unknown count mode {mode!r}")
    return counts


# -- complexity -------------------------------------------------------

@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray

    def to_dict(self):
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist(),
                "densities": self.densities.tolist()}


def histogram(values: Sequence[float], bins: int = 20, range=None) -> Histogram:
    """Counts per bin and densities normalized by the *total* number of values,
    so densities integrate to the in-range fraction."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    if range is None:
        hi = float(v.max()) if v.size else 1.0
        range = (0.0, hi if hi > 0 else 1.0)
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise ValueError(f"inverted or empty histogram range ({lo}, {hi})")
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(v[(v >= lo) & (v <= hi)], bins=edges)
    width = (hi - lo) / bins
    dens = counts / (v.size * width) if v.size else np.zeros(bins)
    return Histogram(edges, counts.astype(np.int64), dens)


@dataclass
class ComplexityReport:
    word_entropy: dict[str, float]      # source token -> H(y | x = token)
    word_totals: dict[str, float]
    value: float                        # C(d)
    n_words: int
    sentence_entropy: list[float] | None = None
    unknown_tokens: int = 0
    hist: Histogram | None = None
    log_base: str = "e"

    kind = "complexity"

    def to_dict(self) -> dict:
        d = {
            "C": self.value,
            "n_words": self.n_words,
            "log_base": self.log_base,
            "words": [{"word": w, "entropy": h, "count": self.word_totals[w]}
                      for w, h in self.word_entropy.items()],
        }
        if self.sentence_entropy is not None:
            d["sentence_entropy"] = self.sentence_entropy
            d["mean_sentence_entropy"] = (float(np.mean(self.sentence_entropy))
                                          if self.sentence_entropy else 0.0)
            d["unknown_tokens"] = self.unknown_tokens
        if self.hist is not None:
            d["histogram"] = self.hist.to_dict()
        return d

    def csv_rows(self):
        return (["word", "count", "entropy"],
                [[w, self.word_totals[w], h] for w, h in self.word_entropy.items()])


def sentence_entropy(pair: SentencePair, counts: LexCounts) -> float:
    """Sum of H(y | x = x_t) over source tokens; unseen words add 0."""
    return float(sum(counts.entropy(s) for s in pair.src if s in counts.rows))


def sentence_entropies(corpus: ParallelCorpus, counts: LexCounts):
    vals = []
    unknown = 0
    for pair in corpus.pairs:
        unknown += sum(1 for s in pair.src if s not in counts.rows)
        vals.append(sentence_entropy(pair, counts))
    return vals, unknown


def complexity(counts: LexCounts, *, min_count: float = 1, exclude_null: bool = True,
               corpus: ParallelCorpus | None = None, bins: int = 20, hist_range=None,
               log_base="e") -> ComplexityReport:
    """Unweighted mean over source types of the entropy of their aligned targets."""
    scale = _log_scale(log_base)
    words = {}
    totals = {}
    for s in sorted(counts.rows):
        if exclude_null and s == NULL_ID:
            continue
        tot = counts.total(s)
        if tot < min_count or tot <= 0:
            continue
        tok = counts.src_vocab.token(s)
        words[tok] = counts.entropy(s) * scale
        totals[tok] = tot
    if not words:
        raise ValueError("no source words left after filtering")
    value = math.fsum(words.values()) / len(words)
    rep = ComplexityReport(words, totals, value, len(words), log_base=str(log_base))
    if corpus is not None:
        vals, unknown = sentence_entropies(corpus, counts)
        rep.sentence_entropy = [v * scale for v in vals]
        rep.unknown_tokens = unknown
        rep.hist = histogram(rep.sentence_entropy, bins, hist_range)
    return rep


# -- faithfulness -----------------------------------------------------

@dataclass
class FaithfulnessReport:
    value: float                  # F(d)
    word_kl: dict[str, float]
    skipped: int
    alpha: float
    mode: str = "smooth"
    log_base: str = "e"

    kind = "faithfulness"

    def to_dict(self) -> dict:
        return {"F": self.value, "n_words": len(self.word_kl), "skipped": self.skipped,
                "alpha": self.alpha, "mode": self.mode, "log_base": self.log_base,
                "words": [{"word": w, "kl": v} for w, v in self.word_kl.items()]}

    def csv_rows(self):
        return ["word", "kl"], [[w, v] for w, v in self.word_kl.items()]


def kl_smoothed(p: dict[str, float], q: dict[str, float], alpha: float) -> float:
    """KL(p || q) after adding ``alpha`` to both over the union support and renormalizing."""
    support = sorted(set(p) | set(q))
    n = len(support)
    ps = np.array([(p.get(y, 0.0) + alpha) / (1.0 + alpha * n) for y in support])
    qs = np.array([(q.get(y, 0.0) + alpha) / (1.0 + alpha * n) for y in support])
    mask = ps > 0
    if np.any(qs[mask] <= 0):
        return math.inf
    return float(max(0.0, (ps[mask] * np.log(ps[mask] / qs[mask])).sum()))


def kl_restricted(p: dict[str, float], q: dict[str, float]) -> float | None:
    """KL over the shared support, both sides renormalized; ``None`` if disjoint."""
    shared = sorted(set(p) & set(q))
    if not shared:
        return None
    ps = np.array([p[y] for y in shared])
    qs = np.array([q[y] for y in shared])
    ps /= ps.sum()
    qs /= qs.sum()
    return float(max(0.0, (ps * np.log(ps / qs)).sum()))


def faithfulness(real: LexCounts, alt: LexCounts, alpha: float = 1e-3, *,
                 mode: str = "smooth", exclude_null: bool = True,
                 log_base="e") -> FaithfulnessReport:
    """Mean over shared source words of KL(p_real(.|x) || p_alt(.|x)).

    Words are matched by token string, so the two count tables may come from
    corpora with different id assignments.
    """
    if not real.rows or not alt.rows:
        raise ValueError("faithfulness needs two non-empty count tables")
    scale = _log_scale(log_base)
    real_words = {w: s for w, s in real.by_token().items()
                  if not (exclude_null and w == NULL_TOKEN) and real.total(s) > 0}
    alt_words = {w: s for w, s in alt.by_token().items()
                 if not (exclude_null and w == NULL_TOKEN) and alt.total(s) > 0}
    kl = {}
    skipped = len(set(real_words) ^ set(alt_words))
    for w in sorted(set(real_words) & set(alt_words), key=lambda w: real_words[w]):
        p = real.distribution(real_words[w])
        q = alt.distribution(alt_words[w])
        if mode == "smooth":
            kl[w] = kl_smoothed(p, q, alpha) * scale
        elif mode == "restrict":
            v = kl_restricted(p, q)
            if v is None:
                skipped += 1
                continue
            kl[w] = v * scale
        else:
            raise ValueError(f"unknown faithfulness mode {mode!r}")
    if not kl:
        raise ValueError("no source words evaluated")
    value = math.fsum(kl.values()) / len(kl)
    return FaithfulnessReport(value, kl, skipped, alpha if mode == "smooth" else 0.0,
                              mode, str(log_base))


# -- reordering -------------------------------------------------------

def chunk_count(linked: Sequence[int]) -> int:
    if not linked:
        return 0
    breaks = sum(1 for a, b in zip(linked, linked[1:]) if b not in (a, a + 1))
    return breaks + 1


def fuzzy_reordering(alignment, pair: SentencePair | None = None) -> float:
    """1 - (chunks - 1) / (M - 1) over the linked source indices in target order."""
    s = alignment.linked_sources()
    m = len(s)
    if m <= 1:
        return 1.0
    return 1.0 - (chunk_count(s) - 1) / (m - 1)


@dataclass
class ReorderingReport:
    scores: list[float]
    chunks: list[int]
    mean: float

    kind = "reordering"

    def to_dict(self) -> dict:
        return {"mean": self.mean, "n_sentences": len(self.scores),
                "scores": self.scores, "chunks": self.chunks}

    def csv_rows(self):
        return (["sentence", "score", "chunks"],
                [[i, s, c] for i, (s, c) in enumerate(zip(self.scores, self.chunks))])


def reordering(alignments, corpus: ParallelCorpus | None = None) -> ReorderingReport:
    pairs = corpus.pairs if corpus is not None else [None] * len(alignments)
    scores = [fuzzy_reordering(a, p) for a, p in zip(alignments, pairs)]
    chunks = [chunk_count(a.linked_sources()) for a in alignments]
    mean = math.fsum(scores) / len(scores) if scores else 0.0
    return ReorderingReport(scores, chunks, mean)


def identity_alignments(corpus: ParallelCorpus):
    from kdlab.align import SentenceAlignment
    return [SentenceAlignment(tuple(range(len(p.tgt)))) for p in corpus.pairs]
