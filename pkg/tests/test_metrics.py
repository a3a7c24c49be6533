import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _synth import random_corpus
from kdlab.align import SentenceAlignment, align_corpus, train_alignment
from kdlab.corpus import NULL_ID, ParallelCorpus
from kdlab.metrics import (chunk_count, complexity, entropy, faithfulness, fuzzy_reordering,
                           histogram, identity_alignments, kl_restricted, kl_smoothed,
                           lex_counts, reordering, sentence_entropies)

LN2 = math.log(2)


def toy():
    """a -> {x, y} once each, b -> z twice."""
    return ParallelCorpus.from_tokens([["a"], ["a"], ["b"], ["b"]],
                                      [["x"], ["y"], ["z"], ["z"]])


def ident(corpus):
    return lex_counts(corpus, mode="identity")


class TestComplexity:
    def test_two_word_toy(self):
        rep = complexity(ident(toy()))
        assert rep.word_entropy["a"] == pytest.approx(LN2, abs=1e-12)
        assert rep.word_entropy["b"] == 0.0
        assert rep.value == pytest.approx(LN2 / 2, abs=1e-12)
        assert round(rep.value, 4) == 0.3466

    def test_viterbi_links_same_as_identity(self):
        c = toy()
        links = [SentenceAlignment((0,))] * 4
        assert complexity(lex_counts(c, links)).value == complexity(ident(c)).value

    def test_deterministic_zero(self):
        c = ParallelCorpus.from_tokens([["a", "b"]] * 3, [["x", "y"]] * 3)
        assert complexity(ident(c)).value == 0.0

    def test_null_excluded_by_default(self):
        c = ParallelCorpus.from_tokens([["a"], ["a"]], [["x", "y"], ["x", "z"]])
        links = [SentenceAlignment((0, None)), SentenceAlignment((0, None))]
        counts = lex_counts(c, links)
        assert NULL_ID in counts.rows
        assert complexity(counts).value == 0.0
        assert complexity(counts, exclude_null=False).value == pytest.approx(LN2 / 2)

    def test_min_count_filters(self):
        c = ParallelCorpus.from_tokens([["a"], ["a"], ["b"]], [["x"], ["y"], ["z"]])
        assert complexity(ident(c), min_count=2).value == pytest.approx(LN2)
        with pytest.raises(ValueError):
            complexity(ident(c), min_count=5)

    def test_log2(self):
        assert complexity(ident(toy()), log_base="2").value == pytest.approx(0.5)

    def test_sentence_entropy(self):
        c = ParallelCorpus.from_tokens([["a"], ["a"], ["b"], ["b"], ["a", "a"], ["b"]],
                                       [["x"], ["y"], ["z"], ["z"], ["x", "y"], ["z"]])
        counts = ident(c)
        vals, unknown = sentence_entropies(c, counts)
        h_a = entropy([2, 2])
        assert vals[-2] == pytest.approx(2 * h_a)
        assert vals[-1] == 0.0
        assert unknown == 0

    def test_sentence_entropy_recount(self):
        c = random_corpus(50, max_len=4, seed=3)
        c = ParallelCorpus.from_tokens(*zip(*[(s, s[::-1]) for s, _ in c.token_pairs()]))
        counts = ident(c)
        table = {}
        for src, tgt in c.token_pairs():
            for s, t in zip(src, tgt):
                table.setdefault(s, {}).setdefault(t, 0)
                table[s][t] += 1

        def h(s):
            tot = sum(table[s].values())
            return -sum(v / tot * math.log(v / tot) for v in table[s].values())

        vals, _ = sentence_entropies(c, counts)
        expect = [sum(h(s) for s in src) for src, _ in c.token_pairs()]
        np.testing.assert_allclose(vals, expect, atol=1e-12)

    def test_posterior_one_hot_equals_viterbi(self):
        c = toy()
        post = [np.array([[1.0, 0.0]])] * 4
        a = lex_counts(c, post, mode="posterior")
        b = lex_counts(c, [SentenceAlignment((0,))] * 4)
        assert a.rows == b.rows

    def test_posterior_fractional(self):
        c = ParallelCorpus.from_tokens([["a", "b"]], [["x"]])
        counts = lex_counts(c, [np.array([[0.5, 0.5, 0.0]])], mode="posterior")
        a, b = c.src_vocab.id("a"), c.src_vocab.id("b")
        assert counts.rows[a] == {0: 0.5} and counts.rows[b] == {0: 0.5}

    def test_identity_length_mismatch_names_pair(self):
        c = ParallelCorpus.from_tokens([["a"], ["a", "b"]], [["x"], ["x"]])
        with pytest.raises(ValueError, match="pair 1"):
            ident(c)

    def test_complexity_report_fields(self):
        rep = complexity(ident(toy()), corpus=toy(), bins=4)
        d = rep.to_dict()
        assert d["C"] == rep.value and d["n_words"] == 2
        assert sum(rep.hist.counts) == 4


pairs_strategy = st.lists(
    st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from("wxyz")), min_size=1, max_size=5),
    min_size=1, max_size=12)


def corpus_of(pairs):
    return ParallelCorpus.from_tokens([[s for s, _ in p] for p in pairs],
                                      [[t for _, t in p] for p in pairs])


class TestProperties:
    @given(pairs_strategy)
    @settings(max_examples=60, deadline=None)
    def test_entropy_bounds(self, pairs):
        counts = ident(corpus_of(pairs))
        for s, row in counts.rows.items():
            h = counts.entropy(s)
            assert -1e-12 <= h <= math.log(len(row)) + 1e-12

    @given(pairs_strategy, st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariance(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        a, b = corpus_of(pairs), corpus_of(shuffled)
        assert complexity(ident(a)).value == pytest.approx(complexity(ident(b)).value, abs=1e-12)
        assert faithfulness(ident(a), ident(b)).value == pytest.approx(0.0, abs=1e-12)
        assert reordering(identity_alignments(a), a).mean == \
            pytest.approx(reordering(identity_alignments(b), b).mean)

    @given(pairs_strategy)
    @settings(max_examples=60, deadline=None)
    def test_duplication_invariance(self, pairs):
        once, twice = corpus_of(pairs), corpus_of(pairs + pairs)
        assert complexity(ident(once)).value == pytest.approx(complexity(ident(twice)).value,
                                                              abs=1e-12)

    @given(pairs_strategy, pairs_strategy, st.floats(1e-6, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_kl_non_negative(self, p1, p2, alpha):
        a, b = ident(corpus_of(p1)), ident(corpus_of(p2))
        try:
            rep = faithfulness(a, b, alpha)
        except ValueError:
            return  # no shared words
        assert all(v >= 0 for v in rep.word_kl.values())
        assert rep.value == pytest.approx(math.fsum(rep.word_kl.values()) / len(rep.word_kl))

    @given(st.lists(st.floats(0, 10), max_size=50), st.integers(1, 12))
    @settings(max_examples=60, deadline=None)
    def test_histogram_integrates_to_in_range_fraction(self, values, bins):
        h = histogram(values, bins=bins, range=(0.0, 10.0))
        assert h.counts.sum() == len(values)
        width = 10.0 / bins
        if values:
            assert float(h.densities.sum() * width) == pytest.approx(1.0)


class TestFaithfulness:
    def counts(self, real, alt):
        src = [["a"]] * len(real)
        return ident(ParallelCorpus.from_tokens(src, [[t] for t in real])), \
            ident(ParallelCorpus.from_tokens([["a"]] * len(alt), [[t] for t in alt]))

    def test_identical_zero(self):
        a, _ = self.counts(["x", "y"], [])
        assert faithfulness(a, a).value == 0.0

    def test_half_split_ln2(self):
        real, alt = self.counts(["x", "x"], ["x", "y"])
        assert faithfulness(real, alt, alpha=1e-12).value == pytest.approx(LN2, abs=1e-9)

    def test_alpha_direct_summation(self):
        real, alt = self.counts(["x", "x"], ["x", "y"])
        a = 1e-3
        p = [(1 + a) / (1 + 2 * a), a / (1 + 2 * a)]
        q = [(0.5 + a) / (1 + 2 * a), (0.5 + a) / (1 + 2 * a)]
        expect = sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))
        assert faithfulness(real, alt, alpha=a).value == pytest.approx(expect, abs=1e-14)

    def test_restrict_mode(self):
        assert kl_restricted({"x": 1.0}, {"x": 0.5, "y": 0.5}) == 0.0
        assert kl_restricted({"x": 1.0}, {"y": 1.0}) is None
        real, alt = self.counts(["x", "x"], ["x", "y"])
        assert faithfulness(real, alt, mode="restrict").value == 0.0

    def test_matches_by_token_string(self):
        # same words, different id assignment order
        a = ident(ParallelCorpus.from_tokens([["a"], ["b"]], [["x"], ["y"]]))
        b = ident(ParallelCorpus.from_tokens([["b"], ["a"]], [["y"], ["x"]]))
        assert faithfulness(a, b).value == pytest.approx(0.0, abs=1e-15)

    def test_skipped_words(self):
        a = ident(ParallelCorpus.from_tokens([["a"], ["b"]], [["x"], ["y"]]))
        b = ident(ParallelCorpus.from_tokens([["a"], ["c"]], [["x"], ["y"]]))
        rep = faithfulness(a, b)
        assert rep.skipped == 2 and list(rep.word_kl) == ["a"]

    def test_disjoint_error(self):
        a = ident(ParallelCorpus.from_tokens([["a"]], [["x"]]))
        b = ident(ParallelCorpus.from_tokens([["b"]], [["x"]]))
        with pytest.raises(ValueError):
            faithfulness(a, b)

    def test_kl_smoothed_closed_form(self):
        assert kl_smoothed({"x": 1.0}, {"x": 1.0}, 0.1) == 0.0


def chunks_oracle(s):
    """Count maximal runs where each step is +0 or +1."""
    runs = 1
    for k in range(1, len(s)):
        if s[k] - s[k - 1] not in (0, 1):
            runs += 1
    return runs


class TestReordering:
    @pytest.mark.parametrize("s, expect", [([0, 1, 2, 3], 1.0), ([3, 2, 1, 0], 0.0),
                                           ([0, 1, 3, 2], 1 / 3)])
    def test_canonical(self, s, expect):
        assert fuzzy_reordering(SentenceAlignment(tuple(s))) == pytest.approx(expect, abs=1e-12)

    def test_null_skipped_and_short(self):
        assert fuzzy_reordering(SentenceAlignment((None, 0, None))) == 1.0
        assert fuzzy_reordering(SentenceAlignment((None,))) == 1.0
        assert fuzzy_reordering(SentenceAlignment((0, 0, 1, 1))) == 1.0

    @given(st.lists(st.integers(0, 6), min_size=2, max_size=10))
    def test_chunk_rule(self, s):
        assert chunk_count(s) == chunks_oracle(s)
        score = fuzzy_reordering(SentenceAlignment(tuple(s)))
        assert 0.0 <= score <= 1.0
        assert score == pytest.approx(1 - (chunks_oracle(s) - 1) / (len(s) - 1))

    def test_report(self):
        rep = reordering([SentenceAlignment((0, 1)), SentenceAlignment((1, 0))])
        assert rep.mean == 0.5 and rep.chunks == [1, 2]


class TestHistogram:
    def test_counts(self):
        assert histogram([0, 0, 1], bins=2, range=(0, 2)).counts.tolist() == [2, 1]

    def test_empty(self):
        h = histogram([], bins=3, range=(0, 1))
        assert h.counts.tolist() == [0, 0, 0] and h.densities.tolist() == [0, 0, 0]

    def test_inverted(self):
        with pytest.raises(ValueError):
            histogram([1], bins=2, range=(2, 1))

    def test_out_of_range_fraction(self):
        h = histogram([0.5, 5.0], bins=2, range=(0, 1))
        assert float(h.densities.sum() * 0.5) == pytest.approx(0.5)


def test_trained_alignment_pipeline():
    c = random_corpus(60, seed=1)
    links = align_corpus(train_alignment(c), c)
    rep = complexity(lex_counts(c, links))
    assert rep.value >= 0
    assert 0 <= reordering(links, c).mean <= 1
