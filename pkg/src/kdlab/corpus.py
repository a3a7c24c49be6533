"""Parallel corpora: vocabularies, loading, writing, target replacement.

Tokenization is whitespace splitting.  The canonical interchange format is one
``src ||| tgt`` pair per line; the two-file format keeps source and target in
separate line-aligned files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

NULL_TOKEN = "<NULL>"
NULL_ID = 0
SEPARATOR = "|||"
DEFAULT_MAX_LEN = 250


class CorpusFormatError(ValueError):
    """A malformed corpus line; ``lineno`` is 1-based (``None`` if not line-bound)."""

    def __init__(self, message: str, lineno: int | None = None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass(frozen=True)
class Vocab:
    """Dense token <-> id map with per-id frequencies."""

    tokens: tuple[str, ...]
    freqs: tuple[int, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.tokens) != len(self.freqs):
            raise ValueError("tokens and freqs differ in length")
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "index", index)

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], with_null: bool = False) -> "Vocab":
        """Ids follow first occurrence, so identical input gives identical ids."""
        tokens: list[str] = [NULL_TOKEN] if with_null else []
        counts: dict[str, int] = {NULL_TOKEN: 0} if with_null else {}
        for sent in sentences:
            for tok in sent:
                if tok in counts:
                    counts[tok] += 1
                else:
                    counts[tok] = 1
                    tokens.append(tok)
        return cls(tuple(tokens), tuple(counts[t] for t in tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index[token]

    def get(self, token: str, default=None):
        return self.index.get(token, default)

    def token(self, i: int) -> str:
        return self.tokens[i]

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.index[t] for t in tokens)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]


@dataclass(frozen=True)
class SentencePair:
    src: tuple[int, ...]
    tgt: tuple[int, ...]


@dataclass(frozen=True)
class ParallelCorpus:
    """Sentence pairs over a source vocabulary (id 0 = NULL) and a target vocabulary."""

    pairs: tuple[SentencePair, ...]
    src_vocab: Vocab
    tgt_vocab: Vocab

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @classmethod
    def from_tokens(cls, src_sents: Sequence[Sequence[str]],
                    tgt_sents: Sequence[Sequence[str]]) -> "ParallelCorpus":
        if len(src_sents) != len(tgt_sents):
            raise ValueError(f"{len(src_sents)} source vs {len(tgt_sents)} target sentences")
        for i, (s, t) in enumerate(zip(src_sents, tgt_sents)):
            if not s or not t:
                raise CorpusFormatError(f"pair {i} has an empty side")
            if NULL_TOKEN in s:
                raise CorpusFormatError(f"pair {i}: source uses reserved token {NULL_TOKEN}")
        src_vocab = Vocab.build(src_sents, with_null=True)
        tgt_vocab = Vocab.build(tgt_sents)
        pairs = tuple(SentencePair(src_vocab.encode(s), tgt_vocab.encode(t))
                      for s, t in zip(src_sents, tgt_sents))
        return cls(pairs, src_vocab, tgt_vocab)

    def source_tokens(self, i: int) -> list[str]:
        return self.src_vocab.decode(self.pairs[i].src)

    def target_tokens(self, i: int) -> list[str]:
        return self.tgt_vocab.decode(self.pairs[i].tgt)

    def token_pairs(self):
        for p in self.pairs:
            yield self.src_vocab.decode(p.src), self.tgt_vocab.decode(p.tgt)

    def same_content(self, other: "ParallelCorpus") -> bool:
        """Equality of token sequences, ignoring id assignment."""
        return list(self.token_pairs()) == list(other.token_pairs())


def _split(text: str, lowercase: bool) -> list[str]:
    if lowercase:
        text = text.lower()
    return text.split()


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        return [line.rstrip("\n").rstrip("\r") for line in f]


def load_parallel(path, fmt: str = "pipe", *, target_path=None,
                  lowercase: bool = False,
                  max_len: int | None = DEFAULT_MAX_LEN) -> ParallelCorpus:
    """Load a corpus in ``pipe`` (``src ||| tgt``) or ``two-file`` format.

    Pairs with either side longer than ``max_len`` are dropped (count logged).
    """
    src_sents: list[list[str]] = []
    tgt_sents: list[list[str]] = []
    if fmt == "pipe":
        for lineno, line in enumerate(_read_lines(path), start=1):
            fields = line.split(SEPARATOR)
            if len(fields) != 2:
                raise CorpusFormatError(
                    f"expected exactly one '{SEPARATOR}' separator, found {len(fields) - 1}",
                    lineno, path)
            src, tgt = _split(fields[0], lowercase), _split(fields[1], lowercase)
            if not src or not tgt:
                raise CorpusFormatError("empty side", lineno, path)
            src_sents.append(src)
            tgt_sents.append(tgt)
    elif fmt == "two-file":
        if target_path is None:
            raise ValueError("two-file format needs target_path")
        src_lines = _read_lines(path)
        tgt_lines = _read_lines(target_path)
        if len(src_lines) != len(tgt_lines):
            raise CorpusFormatError(
                f"source has {len(src_lines)} lines, target has {len(tgt_lines)}", None, path)
        for lineno, (s, t) in enumerate(zip(src_lines, tgt_lines), start=1):
            src, tgt = _split(s, lowercase), _split(t, lowercase)
            if not src or not tgt:
                raise CorpusFormatError("empty side", lineno, path)
            src_sents.append(src)
            tgt_sents.append(tgt)
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")

    if max_len is not None:
        kept = [(s, t) for s, t in zip(src_sents, tgt_sents)
                if len(s) <= max_len and len(t) <= max_len]
        dropped = len(src_sents) - len(kept)
        if dropped:
            log.info("dropped %d pairs longer than %d tokens", dropped, max_len)
        src_sents = [s for s, _ in kept]
        tgt_sents = [t for _, t in kept]
    return ParallelCorpus.from_tokens(src_sents, tgt_sents)


def write_parallel(corpus: ParallelCorpus, path, fmt: str = "pipe", *,
                   target_path=None) -> None:
    """Write ``corpus`` with single-space separated tokens and LF line endings."""
    if fmt == "pipe":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for src, tgt in corpus.token_pairs():
                f.write(f"{' '.join(src)} {SEPARATOR} {' '.join(tgt)}\n")
    elif fmt == "two-file":
        if target_path is None:
            raise ValueError("two-file format needs target_path")
        with open(path, "w", encoding="utf-8", newline="\n") as fs, \
                open(target_path, "w", encoding="utf-8", newline="\n") as ft:
            for src, tgt in corpus.token_pairs():
                fs.write(" ".join(src) + "\n")
                ft.write(" ".join(tgt) + "\n")
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")


def replace_targets(corpus: ParallelCorpus,
                    new_targets: Sequence[Sequence[str]]) -> ParallelCorpus:
    """Swap in new target sentences (token strings); the target vocabulary is rebuilt."""
    if len(new_targets) != len(corpus.pairs):
        raise ValueError(f"{len(new_targets)} targets for {len(corpus.pairs)} pairs")
    targets = [list(t) for t in new_targets]
    for i, t in enumerate(targets):
        if not t:
            raise CorpusFormatError(f"replacement target {i} is empty")
    tgt_vocab = Vocab.build(targets)
    pairs = tuple(SentencePair(p.src, tgt_vocab.encode(t))
                  for p, t in zip(corpus.pairs, targets))
    return ParallelCorpus(pairs, corpus.src_vocab, tgt_vocab)


def corpus_from_ids(src_seqs: Sequence[Sequence[int]],
                    tgt_seqs: Sequence[Sequence[int]]) -> ParallelCorpus:
    """Integer-symbol sequences as a corpus whose tokens are the decimal ids."""
    return ParallelCorpus.from_tokens(
        [[str(int(v)) for v in s] for s in src_seqs],
        [[str(int(v)) for v in t] for t in tgt_seqs])


def digest(path) -> str:
    import hashlib
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def read_pharaoh(path) -> list[list[tuple[int, int]]]:
    """Read ``i-j`` link lines (source i, target j)."""
    out = []
    for lineno, line in enumerate(_read_lines(Path(path)), start=1):
        links = []
        for item in line.split():
            try:
                i, j = item.split("-")
                links.append((int(i), int(j)))
            except ValueError:
                raise CorpusFormatError(f"bad link {item!r}", lineno, path) from None
        out.append(links)
    return out
