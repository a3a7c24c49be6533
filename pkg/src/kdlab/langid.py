"""Per-sentence language posteriors from unigram profiles, and simplex summaries."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

UNK = "<UNK>"
_SQRT3_2 = math.sqrt(3.0) / 2.0
# vertices of the ternary plot; language k sits at VERTICES[k]
VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, _SQRT3_2]])


@dataclass(frozen=True)
class LangProfile:
    label: str
    probs: dict[str, float]   # includes UNK
    n_tokens: int

    def prob(self, token: str) -> float:
        return self.probs.get(token, self.probs[UNK])


def fit_profiles(corpora: Mapping[str, Sequence[Sequence[str]]],
                 alpha: float = 0.5) -> list[LangProfile]:
    """p(tok | l) = (count + alpha) / (total + alpha * (|V_joint| + 1)), UNK included."""
    if len(corpora) < 2:
        raise ValueError("need at least two languages")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    counts = {}
    for label, sents in corpora.items():
        c = Counter(tok for sent in sents for tok in sent)
        if not c:
            raise ValueError(f"language {label!r} has no tokens")
        counts[label] = c
    joint = sorted(set().union(*counts.values()))
    profiles = []
    for label, c in counts.items():
        total = sum(c.values())
        denom = total + alpha * (len(joint) + 1)
        probs = {tok: (c.get(tok, 0) + alpha) / denom for tok in joint}
        probs[UNK] = alpha / denom
        profiles.append(LangProfile(label, probs, total))
    return profiles


def token_posterior(profiles: Sequence[LangProfile], token: str) -> np.ndarray:
    lik = np.array([p.prob(token) for p in profiles])
    s = lik.sum()
    if s <= 0:
        return np.full(len(profiles), 1.0 / len(profiles))
    return lik / s


def sentence_posterior(profiles: Sequence[LangProfile], sentence: Sequence[str]) -> np.ndarray:
    """Average over tokens of p(l | y_t) under a uniform language prior."""
    if not sentence:
        raise ValueError("empty sentence")
    post = np.zeros(len(profiles))
    for tok in sentence:
        post += token_posterior(profiles, tok)
    return post / len(sentence)


def ternary(post) -> tuple[float, float]:
    """Affine embedding of a 3-simplex point into the plane."""
    post = np.asarray(post, dtype=np.float64)
    if post.shape != (3,):
        raise ValueError("ternary coordinates need exactly three languages")
    xy = post @ VERTICES
    return float(xy[0]), float(xy[1])


@dataclass
class SimplexReport:
    labels: list[str]
    posteriors: np.ndarray        # [N, K]
    argmax: list[int]
    coords: list[tuple[float, float]] | None
    counts: dict[str, int]
    purity: float

    kind = "simplex"

    def to_dict(self) -> dict:
        d = {"labels": self.labels, "purity": self.purity, "counts": self.counts,
             "posteriors": self.posteriors.tolist(), "argmax": self.argmax}
        if self.coords is not None:
            d["ternary"] = [list(c) for c in self.coords]
        return d

    def csv_rows(self):
        head = ["sentence"] + [f"p_{l}" for l in self.labels] + ["argmax"]
        if self.coords is not None:
            head += ["tx", "ty"]
        rows = []
        for i, p in enumerate(self.posteriors):
            row = [i] + [float(v) for v in p] + [self.labels[self.argmax[i]]]
            if self.coords is not None:
                row += list(self.coords[i])
            rows.append(row)
        return head, rows


def simplex_report(profiles: Sequence[LangProfile], sentences: Sequence[Sequence[str]],
                   *, with_ternary: bool | None = None) -> SimplexReport:
    k = len(profiles)
    if with_ternary is None:
        with_ternary = k == 3
    if with_ternary and k != 3:
        raise ValueError(f"ternary coordinates need 3 languages, got {k}")
    post = np.array([sentence_posterior(profiles, s) for s in sentences]).reshape(-1, k)
    arg = [int(np.argmax(p)) for p in post]
    labels = [p.label for p in profiles]
    counts = {l: 0 for l in labels}
    for a in arg:
        counts[labels[a]] += 1
    purity = float(post.max(axis=1).mean()) if len(post) else 0.0
    coords = [ternary(p) for p in post] if with_ternary else None
    return SimplexReport(labels, post, arg, coords, counts, purity)
