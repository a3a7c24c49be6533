"""Weak non-autoregressive student and the distillation win-rate experiment.

The student predicts every label independently from a window of observations
with a linear softmax, so it cannot model label-label dependencies.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from kdlab import kernels
from kdlab.hmmlab import (Hmm, HmmDataset, DecodeStrategy, distill, marginal_argmax,
                          random_hmm, sample_dataset, viterbi)

VARIANTS = ("real", "seq", "tok")


@dataclass(frozen=True)
class TrainConfig:
    window: int = 2
    lr: float = 0.1
    epochs: int = 30
    batch_size: int | None = 32    # None: full batch
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.window < 0 or self.epochs < 0 or self.patience < 1:
            raise ValueError("window/epochs must be >= 0 and patience >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def n_features(window: int, V: int) -> int:
    return (2 * window + 1) * (V + 1) + 1


def featurize(x, t: int, window: int, V: int) -> np.ndarray:
    """Active feature ids at position t: one per window slot (padding symbol V
    outside the sequence) plus the bias."""
    n = len(x)
    if not 0 <= t < n:
        raise IndexError(f"position {t} outside sequence of length {n}")
    out = np.empty(2 * window + 2, dtype=np.int64)
    for slot, pos in enumerate(range(t - window, t + window + 1)):
        sym = x[pos] if 0 <= pos < n else V
        out[slot] = slot * (V + 1) + sym
    out[-1] = n_features(window, V) - 1
    return out


def feature_matrix(xs, window: int, V: int) -> np.ndarray:
    """Stack of ``featurize`` rows for every position of every sequence."""
    rows = []
    offsets = np.arange(2 * window + 1) * (V + 1)
    bias = n_features(window, V) - 1
    for x in xs:
        padded = np.concatenate([np.full(window, V), np.asarray(x, dtype=np.int64),
                                 np.full(window, V)])
        n = len(x)
        idx = np.arange(n)[:, None] + np.arange(2 * window + 1)[None, :]
        block = np.empty((n, 2 * window + 2), dtype=np.int64)
        block[:, :-1] = padded[idx] + offsets[None, :]
        block[:, -1] = bias
        rows.append(block)
    if not rows:
        return np.empty((0, 2 * window + 2), dtype=np.int64)
    return np.ascontiguousarray(np.concatenate(rows))


def _labels(ys) -> np.ndarray:
    return np.ascontiguousarray(np.concatenate([np.asarray(y, dtype=np.int64) for y in ys]))


@dataclass
class StudentModel:
    window: int
    K: int
    V: int
    weights: np.ndarray                  # [n_features, K]
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def scores(self, x) -> np.ndarray:
        f = feature_matrix([x], self.window, self.V)
        return self.weights[f].sum(axis=1)


def train_student(train: HmmDataset, valid: HmmDataset | None,
                  cfg: TrainConfig = TrainConfig()) -> StudentModel:
    """Mini-batch SGD on per-position cross-entropy from zero weights; keeps the
    weights with the lowest validation loss (training loss without ``valid``)."""
    if valid is not None and (valid.K, valid.V) != (train.K, train.V):
        raise ValueError("train and validation sets disagree on K/V")
    K, V = train.K, train.V
    W = np.zeros((n_features(cfg.window, V), K))
    feats = feature_matrix(train.xs, cfg.window, V)
    labels = _labels(train.ys)
    if valid is not None:
        vfeats = feature_matrix(valid.xs, cfg.window, V)
        vlabels = _labels(valid.ys)
    else:
        vfeats, vlabels = feats, labels
    n = len(labels)
    batch = n if cfg.batch_size is None else cfg.batch_size
    rng = np.random.default_rng(cfg.seed)

    def loss(F, y):
        return kernels.softmax_loss(W, F, y) / max(len(y), 1)

    train_hist = [loss(feats, labels)]
    valid_hist = [loss(vfeats, vlabels)]
    best_W, best_val, best_epoch = W.copy(), valid_hist[0], 0
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n).astype(np.int64) if cfg.batch_size else np.arange(n)
        kernels.sgd_epoch(W, feats, labels, order, cfg.lr, batch)
        train_hist.append(loss(feats, labels))
        valid_hist.append(loss(vfeats, vlabels))
        if valid_hist[-1] < best_val:
            best_W, best_val, best_epoch = W.copy(), valid_hist[-1], epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return StudentModel(cfg.window, K, V, best_W, train_hist, valid_hist, best_epoch)


def predict(student: StudentModel, x) -> np.ndarray:
    # argmax takes the first maximum: smallest label on ties
    return np.argmax(student.scores(x), axis=1).astype(np.int64)


@dataclass(frozen=True)
class EvalReport:
    token_matches: int
    total_tokens: int
    seq_matches: int
    total_seqs: int

    @property
    def tacc(self) -> float:
        return self.token_matches / self.total_tokens

    @property
    def sacc(self) -> float:
        return self.seq_matches / self.total_seqs

    def to_dict(self) -> dict:
        return {"tacc": self.tacc, "sacc": self.sacc, **asdict(self)}


def score_predictions(preds, test: HmmDataset) -> EvalReport:
    if len(test) == 0:
        raise ValueError("empty test set")
    tok = seq = total = 0
    for p, s in zip(preds, test.seqs):
        hits = int(np.sum(np.asarray(p) == np.asarray(s.y)))
        tok += hits
        total += len(s.y)
        seq += int(hits == len(s.y))
    return EvalReport(tok, total, seq, len(test))


def evaluate(student: StudentModel, test: HmmDataset) -> EvalReport:
    if len(test) == 0:
        raise ValueError("empty test set")
    feats = feature_matrix(test.xs, student.window, student.V)
    flat = np.argmax(student.weights[feats].sum(axis=1), axis=1)
    lengths = [len(s.x) for s in test.seqs]
    preds = np.split(flat, np.cumsum(lengths)[:-1])
    return score_predictions(preds, test)


def evaluate_bayes(hmm: Hmm, test: HmmDataset) -> dict[str, EvalReport]:
    """Both Bayes classifiers of the true teacher, scored like a student."""
    return {"seq": score_predictions([viterbi(hmm, s.x) for s in test.seqs], test),
            "tok": score_predictions([marginal_argmax(hmm, s.x) for s in test.seqs], test)}


# -- experiment -------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    seeds: int = 50
    K: int = 5
    V: int = 10
    a: float = 1.0
    b: float = 1.0
    len_range: tuple[int, int] = (4, 10)
    n_train: int = 2000
    n_valid: int = 500
    n_test: int = 2000
    train: TrainConfig = TrainConfig()
    master_seed: int = 42
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        train = TrainConfig(**d.pop("train", {}))
        if "len_range" in d:
            d["len_range"] = tuple(d["len_range"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(train=train, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["len_range"] = list(self.len_range)
        return d


@dataclass
class SeedResult:
    seed: int
    student: dict[str, EvalReport]
    bayes: dict[str, EvalReport]


def _winner(values: dict[str, float]) -> str | None:
    best = max(values.values())
    top = [k for k, v in values.items() if v == best]
    return top[0] if len(top) == 1 else None


@dataclass
class WinRateReport:
    seeds: int
    mean_tacc: dict[str, float]
    mean_sacc: dict[str, float]
    wins_tacc: dict[str, int]
    wins_sacc: dict[str, int]
    ties_tacc: int
    ties_sacc: int
    per_seed: list[SeedResult]

    kind = "winrate"

    def win_rate(self, metric: str, variant: str) -> float:
        wins = self.wins_tacc if metric == "tacc" else self.wins_sacc
        return wins[variant] / self.seeds

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "mean_tacc": self.mean_tacc, "mean_sacc": self.mean_sacc,
            "wins_tacc": self.wins_tacc, "wins_sacc": self.wins_sacc,
            "ties_tacc": self.ties_tacc, "ties_sacc": self.ties_sacc,
            "per_seed": [{"seed": r.seed,
                          "student": {k: v.to_dict() for k, v in r.student.items()},
                          "bayes": {k: v.to_dict() for k, v in r.bayes.items()}}
                         for r in self.per_seed],
        }

    def csv_rows(self):
        head = ["seed"] + [f"{m}_{v}" for v in VARIANTS for m in ("tacc", "sacc")] + \
            ["bayes_seq_tacc", "bayes_seq_sacc", "bayes_tok_tacc", "bayes_tok_sacc"]
        rows = []
        for r in self.per_seed:
            row = [r.seed]
            for v in VARIANTS:
                row += [r.student[v].tacc, r.student[v].sacc]
            row += [r.bayes["seq"].tacc, r.bayes["seq"].sacc,
                    r.bayes["tok"].tacc, r.bayes["tok"].sacc]
            rows.append(row)
        return head, rows


def seed_streams(master_seed: int, index: int, n: int = 6) -> list[int]:
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return [int(v) for v in ss.generate_state(n, dtype=np.uint32)]


def run_seed(true_hmm: Hmm, cfg: ExperimentConfig, index: int) -> SeedResult:
    """One replicate: sample data, distill both ways, train three students."""
    _, s_train, s_valid, s_test, s_student, _ = seed_streams(cfg.master_seed, index)
    train = sample_dataset(true_hmm, cfg.n_train, cfg.len_range, s_train)
    valid = sample_dataset(true_hmm, cfg.n_valid, cfg.len_range, s_valid)
    test = sample_dataset(true_hmm, cfg.n_test, cfg.len_range, s_test)
    seq, tok = DecodeStrategy("viterbi"), DecodeStrategy("marginal_argmax")
    sets = {
        "real": (train, valid),
        "seq": (distill(true_hmm, train, seq), distill(true_hmm, valid, seq)),
        "tok": (distill(true_hmm, train, tok), distill(true_hmm, valid, tok)),
    }
    tcfg = TrainConfig(**{**asdict(cfg.train), "seed": s_student})
    student = {v: evaluate(train_student(tr, va, tcfg), test) for v, (tr, va) in sets.items()}
    return SeedResult(index, student, evaluate_bayes(true_hmm, test))


def _hmm_for(cfg: ExperimentConfig, index: int) -> Hmm:
    return random_hmm(cfg.K, cfg.V, cfg.a, cfg.b, seed_streams(cfg.master_seed, index)[0])


def aggregate(results: list[SeedResult]) -> WinRateReport:
    n = len(results)
    wins = {"tacc": dict.fromkeys(VARIANTS, 0), "sacc": dict.fromkeys(VARIANTS, 0)}
    ties = {"tacc": 0, "sacc": 0}
    for r in results:
        for metric in ("tacc", "sacc"):
            w = _winner({v: getattr(r.student[v], metric) for v in VARIANTS})
            if w is None:
                ties[metric] += 1
            else:
                wins[metric][w] += 1
    mean = {m: {v: math.fsum(getattr(r.student[v], m) for r in results) / n for v in VARIANTS}
            for m in ("tacc", "sacc")}
    return WinRateReport(n, mean["tacc"], mean["sacc"], wins["tacc"], wins["sacc"],
                         ties["tacc"], ties["sacc"], results)


def run_experiment(cfg: ExperimentConfig, hmms=None) -> WinRateReport:
    """Replicates over ``cfg.seeds`` random teachers (or the given ``hmms``)."""
    if cfg.seeds < 1:
        raise ValueError("need at least one seed")
    if hmms is None:
        hmms = [_hmm_for(cfg, i) for i in range(cfg.seeds)]
    if len(hmms) != cfg.seeds:
        raise ValueError("one HMM per seed expected")
    jobs = list(enumerate(hmms))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(lambda j: run_seed(j[1], cfg, j[0]), jobs))
    else:
        results = [run_seed(h, cfg, i) for i, h in jobs]
    return aggregate(results)
