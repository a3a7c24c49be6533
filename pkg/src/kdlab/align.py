"""Diagonal-prior lexical alignment model trained by EM (fast_align style).

Each target position j of a pair links to NULL with probability ``null_prob``
or to source position i with probability proportional to
``exp(-tension * |i/T_x - j/T_y|)``; the linked word then emits the target
word through the translation table t(y|x).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from kdlab import kernels
from kdlab.corpus import NULL_ID, ParallelCorpus, SentencePair, Vocab

SCHEMA = "kdlab.align-model/1"
UNK_FLOOR = 1e-9
_POST_TIE = 1e-12


@dataclass(frozen=True)
class AlignConfig:
    em_iters: int = 5
    tension: float = 4.0
    null_prob: float = 0.08
    update_tension: bool = False
    add_alpha: float = 0.01
    threads: int = 1
    chunk_size: int = 1024

    def __post_init__(self):
        if not self.tension > 0:
            raise ValueError(f"tension must be positive, got {self.tension}")
        if not 0 <= self.null_prob < 1:
            raise ValueError(f"null_prob must lie in [0, 1), got {self.null_prob}")
        if self.em_iters < 0:
            raise ValueError("em_iters must be non-negative")
        if self.add_alpha < 0:
            raise ValueError("add_alpha must be non-negative")
        if self.chunk_size < 1 or self.threads < 1:
            raise ValueError("chunk_size and threads must be positive")


@dataclass(frozen=True)
class TranslationTable:
    """Sparse t(y|x) stored as parallel arrays sorted by (src, tgt)."""

    src: np.ndarray
    tgt: np.ndarray
    prob: np.ndarray
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_lookup", {
            (int(s), int(t)): float(p) for s, t, p in zip(self.src, self.tgt, self.prob)})

    def get(self, s: int, t: int, default: float = 0.0) -> float:
        return self._lookup.get((s, t), default)

    def row(self, s: int) -> dict[int, float]:
        mask = self.src == s
        return {int(t): float(p) for t, p in zip(self.tgt[mask], self.prob[mask])}

    def row_sums(self) -> dict[int, float]:
        sums = np.bincount(self.src, weights=self.prob)
        return {int(s): float(sums[s]) for s in np.unique(self.src)}

    def __len__(self):
        return len(self.prob)


@dataclass(frozen=True)
class SentenceAlignment:
    """One link per target position: a source position or ``None`` (NULL)."""

    links: tuple

    def pharaoh(self) -> str:
        return " ".join(f"{i}-{j}" for j, i in enumerate(self.links) if i is not None)

    def linked_sources(self) -> list[int]:
        return [i for i in self.links if i is not None]

    @classmethod
    def from_pharaoh(cls, links: list[tuple[int, int]], tgt_len: int) -> "SentenceAlignment":
        """Parse ``(i, j)`` links; with several links on one target the first wins."""
        out = [None] * tgt_len
        for i, j in links:
            if not 0 <= j < tgt_len:
                raise ValueError(f"target index {j} out of range for length {tgt_len}")
            if out[j] is None:
                out[j] = i
        return cls(tuple(out))


@dataclass(frozen=True)
class AlignmentModel:
    ttable: TranslationTable
    tension: float
    null_prob: float
    src_vocab: Vocab
    tgt_vocab: Vocab
    log_likelihood: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.tension > 0:
            raise ValueError("tension must be positive")
        if not 0 <= self.null_prob < 1:
            raise ValueError("null_prob must lie in [0, 1)")

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "tension": self.tension,
            "null_prob": self.null_prob,
            "src_vocab": list(self.src_vocab.tokens),
            "src_freqs": list(self.src_vocab.freqs),
            "tgt_vocab": list(self.tgt_vocab.tokens),
            "tgt_freqs": list(self.tgt_vocab.freqs),
            "log_likelihood": list(self.log_likelihood),
            "ttable": [[int(s), int(t), float(p)] for s, t, p in
                       zip(self.ttable.src, self.ttable.tgt, self.ttable.prob)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentModel":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported model schema {d.get('schema')!r}")
        triples = d["ttable"]
        ttable = TranslationTable(
            np.array([t[0] for t in triples], dtype=np.int64),
            np.array([t[1] for t in triples], dtype=np.int64),
            np.array([t[2] for t in triples], dtype=np.float64))
        return cls(ttable, float(d["tension"]), float(d["null_prob"]),
                   Vocab(tuple(d["src_vocab"]), tuple(d["src_freqs"])),
                   Vocab(tuple(d["tgt_vocab"]), tuple(d["tgt_freqs"])),
                   tuple(d.get("log_likelihood", ())))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "AlignmentModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# -- training ---------------------------------------------------------

@dataclass
class _LinkIndex:
    keys: np.ndarray       # unique (src * n_tgt + tgt) in sorted order
    link_idx: np.ndarray   # per pair, (T_x + 1) * T_y param indices, NULL first
    offsets: np.ndarray
    src_len: np.ndarray
    tgt_len: np.ndarray
    row_of: np.ndarray     # source id of every parameter


def _index_links(corpus: ParallelCorpus) -> _LinkIndex:
    n_tgt = max(len(corpus.tgt_vocab), 1)
    blocks = []
    src_len = np.empty(len(corpus), dtype=np.int64)
    tgt_len = np.empty(len(corpus), dtype=np.int64)
    for p, pair in enumerate(corpus.pairs):
        src = np.concatenate(([NULL_ID], np.asarray(pair.src, dtype=np.int64)))
        tgt = np.asarray(pair.tgt, dtype=np.int64)
        blocks.append((tgt[:, None] + src[None, :] * n_tgt).ravel())
        src_len[p] = len(pair.src)
        tgt_len[p] = len(pair.tgt)
    flat = np.concatenate(blocks)
    keys, inverse = np.unique(flat, return_inverse=True)
    offsets = np.zeros(len(corpus), dtype=np.int64)
    np.cumsum(((src_len + 1) * tgt_len)[:-1], out=offsets[1:])
    return _LinkIndex(keys, inverse.astype(np.int64), offsets, src_len, tgt_len,
                      keys // n_tgt)


def _estep(index: _LinkIndex, tprob, tension, null_prob, cfg: AlignConfig):
    n = len(index.src_len)
    bounds = [(lo, min(lo + cfg.chunk_size, n)) for lo in range(0, n, cfg.chunk_size)]

    def run(bound):
        counts = np.zeros(len(tprob))
        ll, dist, mass = kernels.align_estep(
            tprob, index.link_idx, index.offsets, index.src_len, index.tgt_len,
            bound[0], bound[1], float(tension), float(null_prob), counts)
        return counts, ll, dist, mass

    if cfg.threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    # merge in chunk order so the sums do not depend on the thread count
    counts = np.zeros(len(tprob))
    ll = dist = mass = 0.0
    for c, l, d, m in parts:
        counts += c
        ll += l
        dist += d
        mass += m
    return counts, ll, dist, mass


def _normalize(values, row_of, n_rows):
    totals = np.bincount(row_of, weights=values, minlength=n_rows)
    return values / totals[row_of]


def _length_profile(index: _LinkIndex):
    shapes, counts = np.unique(np.stack([index.src_len, index.tgt_len], axis=1),
                               axis=0, return_counts=True)
    return shapes, counts


def expected_distance(tension: float, shapes, counts) -> float:
    """Mean |i/T_x - j/T_y| under the diagonal prior, over all target positions."""
    num = 0.0
    den = 0.0
    for (tx, ty), c in zip(shapes, counts):
        pos = np.arange(tx) / tx
        d = np.abs(pos[None, :] - (np.arange(ty) / ty)[:, None])
        w = np.exp(-tension * (d - d.min(axis=1, keepdims=True)))
        num += c * float(((w * d).sum(axis=1) / w.sum(axis=1)).sum())
        den += c * ty
    return num / den


def _fit_tension(target: float, shapes, counts, lo=1e-3, hi=200.0, iters=60) -> float:
    # expected distance decreases in tension
    if expected_distance(hi, shapes, counts) >= target:
        return hi
    if expected_distance(lo, shapes, counts) <= target:
        return lo
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if expected_distance(mid, shapes, counts) > target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def train_alignment(corpus: ParallelCorpus, cfg: AlignConfig = AlignConfig(),
                    *, callback=None) -> AlignmentModel:
    """EM training; ``log_likelihood`` holds one entry per parameter state
    (initial uniform table, then after each M-step)."""
    if len(corpus) == 0:
        raise ValueError("cannot train an alignment model on an empty corpus")
    index = _index_links(corpus)
    n_rows = len(corpus.src_vocab)
    tprob = _normalize(np.ones(len(index.keys)), index.row_of, n_rows)
    tension = cfg.tension
    shapes = counts_by_shape = None
    if cfg.update_tension:
        shapes, counts_by_shape = _length_profile(index)
    history = []
    for it in range(cfg.em_iters):
        counts, ll, dist, mass = _estep(index, tprob, tension, cfg.null_prob, cfg)
        history.append(ll)
        if callback is not None:
            callback(it, ll)
        tprob = _normalize(counts + cfg.add_alpha, index.row_of, n_rows)
        if cfg.update_tension and mass > 0:
            tension = _fit_tension(dist / mass, shapes, counts_by_shape)
    _, ll, _, _ = _estep(index, tprob, tension, cfg.null_prob, cfg)
    history.append(ll)
    n_tgt = max(len(corpus.tgt_vocab), 1)
    ttable = TranslationTable(index.row_of.copy(), index.keys % n_tgt, tprob)
    return AlignmentModel(ttable, float(tension), cfg.null_prob,
                          corpus.src_vocab, corpus.tgt_vocab, tuple(history))


# -- inference --------------------------------------------------------

def _prior(tx: int, ty: int, tension: float, null_prob: float) -> np.ndarray:
    """[T_y, T_x + 1] link prior; the last column is NULL."""
    pos = np.arange(tx) / tx
    d = np.abs(pos[None, :] - (np.arange(ty) / ty)[:, None])
    w = np.exp(-tension * (d - d.min(axis=1, keepdims=True)))
    prior = np.empty((ty, tx + 1))
    prior[:, :tx] = (1.0 - null_prob) * w / w.sum(axis=1, keepdims=True)
    prior[:, tx] = null_prob
    return prior


def _emissions(model: AlignmentModel, pair: SentencePair):
    """t(y_j | x_i) for all j, i (NULL last); also which targets were seen in training."""
    tx, ty = len(pair.src), len(pair.tgt)
    srcs = list(pair.src) + [NULL_ID]
    n_tgt = len(model.tgt_vocab)
    known = np.array([0 <= y < n_tgt and model.tgt_vocab.freqs[y] > 0 for y in pair.tgt])
    em = np.empty((ty, tx + 1))
    for j, y in enumerate(pair.tgt):
        for i, s in enumerate(srcs):
            em[j, i] = model.ttable.get(s, y, UNK_FLOOR) if s >= 0 else UNK_FLOOR
            if em[j, i] <= 0.0:
                em[j, i] = UNK_FLOOR
    return em, known


def posterior_links(model: AlignmentModel, pair: SentencePair) -> np.ndarray:
    """Link posterior [T_y, T_x + 1]; column T_x is NULL.  Rows sum to 1.

    Targets never seen in training get all their mass on NULL.
    """
    tx, ty = len(pair.src), len(pair.tgt)
    em, known = _emissions(model, pair)
    joint = _prior(tx, ty, model.tension, model.null_prob) * em
    post = joint / joint.sum(axis=1, keepdims=True)
    post[~known] = 0.0
    post[~known, tx] = 1.0
    return post


def _pick_link(row: np.ndarray, j: int, ty: int):
    tx = len(row) - 1
    best = row.max()
    # near-equal candidates: closest to the diagonal, then smaller i; NULL last
    cands = [i for i in range(tx) if row[i] >= best * (1 - _POST_TIE)]
    if not cands:
        return None
    return min(cands, key=lambda i: (abs(i / tx - j / ty), i))


def viterbi_align(model: AlignmentModel, pair: SentencePair) -> SentenceAlignment:
    post = posterior_links(model, pair)
    ty = len(pair.tgt)
    return SentenceAlignment(tuple(_pick_link(post[j], j, ty) for j in range(ty)))


def corpus_log_likelihood(model: AlignmentModel, corpus: ParallelCorpus) -> float:
    """Sum over pairs of log p(tgt | src) under the model (pairs in model ids)."""
    total = 0.0
    for pair in to_model_ids(model, corpus):
        em, _ = _emissions(model, pair)
        joint = _prior(len(pair.src), len(pair.tgt), model.tension, model.null_prob) * em
        total += float(np.log(joint.sum(axis=1)).sum())
    return total


def to_model_ids(model: AlignmentModel, corpus: ParallelCorpus) -> list[SentencePair]:
    """Re-encode ``corpus`` in the model's vocabularies; unknown tokens become -1."""
    if corpus.src_vocab is model.src_vocab and corpus.tgt_vocab is model.tgt_vocab:
        return list(corpus.pairs)
    smap = [model.src_vocab.get(t, -1) for t in corpus.src_vocab.tokens]
    tmap = [model.tgt_vocab.get(t, -1) for t in corpus.tgt_vocab.tokens]
    return [SentencePair(tuple(smap[i] for i in p.src), tuple(tmap[i] for i in p.tgt))
            for p in corpus.pairs]


def align_corpus(model: AlignmentModel, corpus: ParallelCorpus) -> list[SentenceAlignment]:
    return [viterbi_align(model, p) for p in to_model_ids(model, corpus)]


def posterior_corpus(model: AlignmentModel, corpus: ParallelCorpus) -> list[np.ndarray]:
    return [posterior_links(model, p) for p in to_model_ids(model, corpus)]


def read_alignments(path, corpus: ParallelCorpus) -> list[SentenceAlignment]:
    from kdlab.corpus import read_pharaoh
    raw = read_pharaoh(path)
    if len(raw) != len(corpus):
        raise ValueError(f"{len(raw)} alignment lines for {len(corpus)} pairs")
    out = []
    for k, (links, pair) in enumerate(zip(raw, corpus.pairs)):
        for i, _ in links:
            if not 0 <= i < len(pair.src):
                raise ValueError(f"pair {k}: source index {i} out of range")
        out.append(SentenceAlignment.from_pharaoh(links, len(pair.tgt)))
    return out


def write_alignments(alignments, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for a in alignments:
            f.write(a.pharaoh() + "\n")
