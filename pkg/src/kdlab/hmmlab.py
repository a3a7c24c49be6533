"""Synthetic HMM teachers, exact Bayes decoders and distilled datasets.

The teacher is a discrete HMM; ``viterbi`` is the sequence-level Bayes
classifier (most probable label sequence) and ``marginal_argmax`` the
token-level one (most probable label per position).  Distilled datasets keep
the observation side and replace labels with a decoder's output.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from kdlab import kernels

SCHEMA = "kdlab.hmm/1"
TIE_TOL = 1e-9
_ROW_TOL = 1e-12
MAX_ENUMERATION = 10 ** 7


def _as_rows(a, name):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has negative or non-finite entries")
    sums = a.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError(f"{name} rows must sum to 1")
    return a


@dataclass(frozen=True)
class Hmm:
    init: np.ndarray     # [K]
    trans: np.ndarray    # [K, K]
    emit: np.ndarray     # [K, V]
    _logs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        init = _as_rows(self.init, "init")
        trans = _as_rows(self.trans, "trans")
        emit = _as_rows(self.emit, "emit")
        K = init.shape[0]
        if init.ndim != 1 or trans.shape != (K, K) or emit.ndim != 2 or emit.shape[0] != K:
            raise ValueError("inconsistent HMM shapes")
        object.__setattr__(self, "init", init)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "emit", emit)
        with np.errstate(divide="ignore"):
            logs = (np.log(init), np.ascontiguousarray(np.log(trans)),
                    np.ascontiguousarray(np.log(emit)))
        object.__setattr__(self, "_logs", logs)

    @property
    def K(self) -> int:
        return self.init.shape[0]

    @property
    def V(self) -> int:
        return self.emit.shape[1]

    @property
    def log_params(self):
        return self._logs

    def __eq__(self, other):
        return (isinstance(other, Hmm) and np.array_equal(self.init, other.init)
                and np.array_equal(self.trans, other.trans)
                and np.array_equal(self.emit, other.emit))

    __hash__ = None

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "K": self.K, "V": self.V, "init": self.init.tolist(),
                "trans": self.trans.tolist(), "emit": self.emit.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Hmm":
        hmm = cls(np.array(d["init"]), np.array(d["trans"]), np.array(d["emit"]))
        if (d.get("K", hmm.K), d.get("V", hmm.V)) != (hmm.K, hmm.V):
            raise ValueError("K/V fields disagree with parameter shapes")
        return hmm

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "Hmm":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def check_symbols(self, x) -> np.ndarray:
        x = np.ascontiguousarray(np.asarray(x, dtype=np.int64))
        if x.ndim != 1 or x.size == 0:
            raise ValueError("observation sequence must be a non-empty 1-D sequence")
        if x.min() < 0 or x.max() >= self.V:
            raise ValueError(f"observation symbols must lie in [0, {self.V})")
        return x


def _positive_uniform(rng, bound, size):
    # (0, bound]: flip numpy's [0, 1) draw
    return bound * (1.0 - rng.random(size))


def random_hmm(K: int, V: int, a: float = 1.0, b: float = 1.0, seed: int = 0) -> Hmm:
    """Weights uniform in (0, a] for init/transitions and (0, b] for emissions,
    then row-normalized."""
    if K < 1 or V < 1:
        raise ValueError("K and V must be >= 1")
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    rng = np.random.default_rng(seed)
    init = _positive_uniform(rng, a, K)
    trans = _positive_uniform(rng, a, (K, K))
    emit = _positive_uniform(rng, b, (K, V))
    return Hmm(init / init.sum(), trans / trans.sum(axis=1, keepdims=True),
               emit / emit.sum(axis=1, keepdims=True))


# -- datasets ---------------------------------------------------------

@dataclass(frozen=True)
class LabeledSeq:
    x: tuple[int, ...]
    y: tuple[int, ...]

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y differ in length")


@dataclass(frozen=True)
class HmmDataset:
    seqs: tuple[LabeledSeq, ...]
    K: int
    V: int
    tag: str = "real"

    def __post_init__(self):
        for s in self.seqs:
            if (s.x and (min(s.x) < 0 or max(s.x) >= self.V)) or \
                    (s.y and (min(s.y) < 0 or max(s.y) >= self.K)):
                raise ValueError("dataset ids out of range for K/V")

    def __len__(self):
        return len(self.seqs)

    def __iter__(self):
        return iter(self.seqs)

    @property
    def xs(self):
        return [s.x for s in self.seqs]

    @property
    def ys(self):
        return [s.y for s in self.seqs]

    def n_tokens(self) -> int:
        return sum(len(s.x) for s in self.seqs)

    def with_labels(self, ys, tag: str) -> "HmmDataset":
        if len(ys) != len(self.seqs):
            raise ValueError("label count mismatch")
        return HmmDataset(tuple(LabeledSeq(s.x, tuple(int(v) for v in y))
                                for s, y in zip(self.seqs, ys)), self.K, self.V, tag)

    def to_corpus(self):
        from kdlab.corpus import corpus_from_ids
        return corpus_from_ids(self.xs, self.ys)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for s in self.seqs:
                f.write(" ".join(map(str, s.x)) + " ||| " + " ".join(map(str, s.y)) + "\n")

    @classmethod
    def load(cls, path, K: int | None = None, V: int | None = None,
             tag: str = "real") -> "HmmDataset":
        from kdlab.corpus import CorpusFormatError
        seqs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.rstrip("\n").split("|||")
                if len(parts) != 2:
                    raise CorpusFormatError("expected 'x ||| y'", lineno, path)
                try:
                    x = tuple(int(v) for v in parts[0].split())
                    y = tuple(int(v) for v in parts[1].split())
                except ValueError:
                    raise CorpusFormatError("non-integer symbol", lineno, path) from None
                if not x or len(x) != len(y):
                    raise CorpusFormatError("sides empty or of unequal length", lineno, path)
                seqs.append(LabeledSeq(x, y))
        if K is None:
            K = max((max(s.y) for s in seqs), default=0) + 1
        if V is None:
            V = max((max(s.x) for s in seqs), default=0) + 1
        return cls(tuple(seqs), K, V, tag)


def sample_dataset(hmm: Hmm, N: int, len_range=(4, 10), seed: int = 0,
                   tag: str = "real") -> HmmDataset:
    """Ancestral samples; each length uniform on [Tmin, Tmax]."""
    tmin, tmax = len_range
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 1 <= tmin <= tmax:
        raise ValueError(f"invalid length range {len_range}")
    rng = np.random.default_rng(seed)
    lengths = rng.integers(tmin, tmax + 1, size=N)
    seqs = []
    for T in lengths:
        u = rng.random(2 * int(T))
        x, y = kernels.ancestral(hmm.init, hmm.trans, hmm.emit, int(T), u)
        seqs.append(LabeledSeq(tuple(x.tolist()), tuple(y.tolist())))
    return HmmDataset(tuple(seqs), hmm.K, hmm.V, tag)


# -- exact inference --------------------------------------------------

def viterbi(hmm: Hmm, x) -> np.ndarray:
    """argmax_y p(y | x); near-ties go to the smallest label at each backtrace step."""
    x = hmm.check_symbols(x)
    return kernels.viterbi(*hmm.log_params, x)


def _argmax_rows(p: np.ndarray, tol: float = _ROW_TOL) -> np.ndarray:
    m = p.max(axis=1, keepdims=True)
    return np.argmax(p >= m - tol, axis=1).astype(np.int64)


def forward_backward(hmm: Hmm, x):
    x = hmm.check_symbols(x)
    return kernels.forward_backward(hmm.init, hmm.trans, hmm.emit, x)


def posterior_marginals(hmm: Hmm, x) -> np.ndarray:
    alpha, beta, _ = forward_backward(hmm, x)
    g = alpha * beta
    return g / g.sum(axis=1, keepdims=True)


def log_likelihood(hmm: Hmm, x) -> float:
    _, _, scale = forward_backward(hmm, x)
    return float(np.log(scale).sum())


def marginal_argmax(hmm: Hmm, x) -> np.ndarray:
    return _argmax_rows(posterior_marginals(hmm, x))


def _row_entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def exact_seq_entropy(hmm: Hmm, x) -> float:
    """H(Y | X = x) via the chain rule over the posterior Markov chain."""
    x = hmm.check_symbols(x)
    alpha, beta, _ = kernels.forward_backward(hmm.init, hmm.trans, hmm.emit, x)
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    h = float(_row_entropy(gamma[0]))
    for t in range(1, len(x)):
        cond = hmm.trans * (hmm.emit[:, x[t]] * beta[t])[None, :]
        tot = cond.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore"):
            cond = np.where(tot > 0, cond / tot, 0.0)
        h += float(gamma[t - 1] @ _row_entropy(cond))
    return max(h, 0.0)


def marginal_entropy_sum(hmm: Hmm, x) -> float:
    """Sum over positions of the entropy of the posterior marginals."""
    return float(_row_entropy(posterior_marginals(hmm, x)).sum())


# -- decoding strategies ----------------------------------------------

_NAMES = ("viterbi", "marginal_argmax", "greedy", "beam", "sample", "topk_sample",
          "interpolate")


@dataclass(frozen=True)
class DecodeStrategy:
    name: str
    width: int = 1     # beam width, or the candidate count for interpolate
    k: int = 1         # top-k size

    def __post_init__(self):
        if self.name not in _NAMES:
            raise ValueError(f"unknown strategy {self.name!r}")
        if self.width < 1 or self.k < 1:
            raise ValueError("beam width and top-k size must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "DecodeStrategy":
        """``viterbi | tok | greedy | beam:W | sample | topk:K | interpolate:K``."""
        name, _, arg = text.partition(":")
        aliases = {"tok": "marginal_argmax", "seq": "viterbi", "topk": "topk_sample"}
        name = aliases.get(name, name)
        if name == "beam":
            return cls("beam", width=int(arg) if arg else 5)
        if name == "topk_sample":
            return cls("topk_sample", k=int(arg) if arg else 10)
        if name == "interpolate":
            return cls("interpolate", width=int(arg) if arg else 3)
        if arg:
            raise ValueError(f"strategy {name!r} takes no argument")
        return cls(name)

    def __str__(self):
        if self.name == "beam":
            return f"beam:{self.width}"
        if self.name == "topk_sample":
            return f"topk:{self.k}"
        if self.name == "interpolate":
            return f"interpolate:{self.width}"
        return {"marginal_argmax": "tok"}.get(self.name, self.name)

    @property
    def stochastic(self) -> bool:
        return self.name in ("sample", "topk_sample")


def beam_search(hmm: Hmm, x, width: int):
    """Ranked final hypotheses (one per end label) and their log p(y | x)."""
    x = hmm.check_symbols(x)
    return kernels.beam_search(hmm.init, hmm.trans, hmm.emit, x, int(width))


def decode(hmm: Hmm, x, strategy: DecodeStrategy, rng=None, y_ref=None) -> np.ndarray:
    x = hmm.check_symbols(x)
    name = strategy.name
    if name == "viterbi":
        return viterbi(hmm, x)
    if name == "marginal_argmax":
        return marginal_argmax(hmm, x)
    if name == "greedy":
        return kernels.greedy(hmm.init, hmm.trans, hmm.emit, x)
    if name == "beam":
        return beam_search(hmm, x, strategy.width)[0][0]
    if name == "interpolate":
        if y_ref is None:
            raise ValueError("interpolate needs a reference label sequence")
        return interpolate_select(hmm, x, y_ref, strategy.width)
    if rng is None:
        raise ValueError(f"strategy {name} needs an rng")
    u = rng.random(len(x))
    if name == "sample":
        return kernels.ffbs(hmm.init, hmm.trans, hmm.emit, x, u)
    k = min(strategy.k, hmm.K)
    return kernels.topk_sample(hmm.init, hmm.trans, hmm.emit, x, k, u)


def interpolate_select(hmm: Hmm, x, y_ref, beam_k: int) -> np.ndarray:
    """The candidate among the ``beam_k`` best (beam width K) with the most
    position matches against ``y_ref``; ties go to the higher-scored one."""
    if beam_k < 1:
        raise ValueError("beam_k must be >= 1")
    paths, _ = beam_search(hmm, x, hmm.K)
    ref = np.asarray(y_ref)
    if ref.shape != (len(x),):
        raise ValueError("reference length differs from the observation length")
    best = 0
    best_overlap = -1
    for r, path in enumerate(paths[:beam_k]):
        ov = int((path == ref).sum())
        if ov > best_overlap:
            best, best_overlap = r, ov
    return paths[best]


def seq_rng(seed: int, index: int) -> np.random.Generator:
    """Per-sequence stream, independent of how sequences are split over threads."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def distill(hmm: Hmm, dataset: HmmDataset, strategy: DecodeStrategy, seed: int = 0,
            threads: int = 1, chunk: int = 256) -> HmmDataset:
    """Replace every label sequence by the teacher's decode of its observations."""
    if dataset.V > hmm.V:
        raise ValueError("dataset symbols incompatible with the teacher")
    seqs = dataset.seqs

    def run(lo):
        out = []
        for i in range(lo, min(lo + chunk, len(seqs))):
            rng = seq_rng(seed, i) if strategy.stochastic else None
            out.append(decode(hmm, seqs[i].x, strategy, rng, y_ref=seqs[i].y))
        return out

    starts = range(0, len(seqs), chunk)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    ys = [y for part in parts for y in part]
    return HmmDataset(tuple(LabeledSeq(s.x, tuple(int(v) for v in y))
                            for s, y in zip(seqs, ys)), hmm.K, hmm.V, str(strategy))


# -- supervised refit and the born-again loop -------------------------

def fit_supervised(dataset: HmmDataset, smoothing_alpha: float = 0.0,
                   K: int | None = None, V: int | None = None) -> Hmm:
    """Add-alpha relative frequencies of labeled starts, transitions and emissions.

    Rows without any counts (and alpha = 0) fall back to uniform.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    K = dataset.K if K is None else K
    V = dataset.V if V is None else V
    ci = np.zeros(K)
    ct = np.zeros((K, K))
    ce = np.zeros((K, V))
    for s in dataset.seqs:
        y = np.asarray(s.y)
        x = np.asarray(s.x)
        ci[y[0]] += 1
        np.add.at(ct, (y[:-1], y[1:]), 1)
        np.add.at(ce, (y, x), 1)

    def norm(c):
        c = c + smoothing_alpha
        tot = c.sum(axis=-1, keepdims=True)
        width = c.shape[-1]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, c / tot, 1.0 / width)

    return Hmm(norm(ci), norm(ct), norm(ce))


def dataset_complexity(dataset: HmmDataset, log_base="e") -> float:
    """C(d) of a labeled dataset with position-identity alignments."""
    from kdlab.metrics import complexity, lex_counts
    corpus = dataset.to_corpus()
    return complexity(lex_counts(corpus, mode="identity"), log_base=log_base).value


@dataclass
class RebornStep:
    iteration: int
    dataset: HmmDataset
    complexity: float
    faithfulness: float
    agreement_with_real: float    # token match rate vs original labels
    agreement_with_true_seq: float  # token match rate vs true-teacher Viterbi labels


def token_agreement(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> float:
    hits = sum(int(np.sum(np.asarray(u) == np.asarray(v))) for u, v in zip(a, b))
    total = sum(len(u) for u in a)
    return hits / total if total else 1.0


def reborn_loop(true_hmm: Hmm, dataset: HmmDataset, iters: int,
                strategy: DecodeStrategy = DecodeStrategy("viterbi"),
                smoothing_alpha: float = 0.0, seed: int = 0,
                faith_alpha: float = 1e-3) -> list[RebornStep]:
    """Iterated refit-and-distill.  Step 0 is the input; step i refits a
    teacher on step i-1's data and relabels the observations with it."""
    from kdlab.metrics import faithfulness, lex_counts
    if iters < 1:
        raise ValueError("iters must be >= 1")
    real_counts = lex_counts(dataset.to_corpus(), mode="identity")
    true_seq = [viterbi(true_hmm, s.x) for s in dataset.seqs]

    def step(i, ds):
        counts = lex_counts(ds.to_corpus(), mode="identity")
        from kdlab.metrics import complexity
        return RebornStep(i, ds, complexity(counts).value,
                          faithfulness(real_counts, counts, faith_alpha).value,
                          token_agreement(ds.ys, dataset.ys),
                          token_agreement(ds.ys, true_seq))

    trace = [step(0, dataset)]
    current = dataset
    for i in range(1, iters + 1):
        teacher = fit_supervised(current, smoothing_alpha, K=dataset.K, V=dataset.V)
        current = distill(teacher, current, strategy, seed=seed + i)
        current = HmmDataset(current.seqs, current.K, current.V, f"reborn-{i}")
        trace.append(step(i, current))
    return trace


# -- exhaustive oracle ------------------------------------------------

@dataclass
class BruteForce:
    sequences: np.ndarray    # [K^T, T]
    probs: np.ndarray        # p(y | x) per row
    mode: np.ndarray
    marginals: np.ndarray    # [T, K]
    entropy: float
    log_evidence: float


def brute_force(hmm: Hmm, x) -> BruteForce:
    """Enumerate all K^T label sequences."""
    x = hmm.check_symbols(x)
    K, T = hmm.K, len(x)
    if K ** T > MAX_ENUMERATION:
        raise ValueError(f"K^T = {K ** T} exceeds the enumeration limit")
    seqs = np.array(list(itertools.product(range(K), repeat=T)), dtype=np.int64).reshape(-1, T)
    log_pi, log_A, log_B = hmm.log_params
    logp = log_pi[seqs[:, 0]] + log_B[seqs[:, 0], x[0]]
    for t in range(1, T):
        logp = logp + log_A[seqs[:, t - 1], seqs[:, t]] + log_B[seqs[:, t], x[t]]
    top = logp.max()
    log_evidence = float(top + np.log(np.exp(logp - top).sum()))
    probs = np.exp(logp - log_evidence)
    # mode: among near-maximal sequences, smallest when read from the end
    cands = np.flatnonzero(logp >= top - TIE_TOL)
    mode = seqs[min(cands, key=lambda r: tuple(seqs[r][::-1]))]
    marg = np.zeros((T, K))
    for t in range(T):
        marg[t] = np.bincount(seqs[:, t], weights=probs, minlength=K)
    pos = probs[probs > 0]
    ent = float(-(pos * np.log(pos)).sum())
    return BruteForce(seqs, probs, mode, marg, max(ent, 0.0), log_evidence)
