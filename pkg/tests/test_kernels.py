"""Both kernel backends against each other and against enumeration."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumerate_posterior, random_instance
from conftest import BACKENDS
from kdlab import _pykernels
from kdlab.student import feature_matrix

TIE = _pykernels.TIE_TOL


def logs(init, trans, emit):
    with np.errstate(divide="ignore"):
        return np.log(init), np.log(trans), np.log(emit)


def greedy_oracle(init, trans, emit, x):
    """Left-to-right argmax of exact conditionals p(y_t | y_{t-1}, x) by enumeration."""
    e = enumerate_posterior(init, trans, emit, x)
    prefix = ()
    for t in range(len(x)):
        w = np.zeros(len(init))
        for y, p in zip(e["seqs"], e["p"]):
            if y[:t] == prefix:
                w[y[t]] += p
        lw = np.log(np.maximum(w, 1e-300))
        prefix += (int(np.flatnonzero(lw >= lw.max() - TIE)[0]),)
    return np.array(prefix)


class TestAgainstEnumeration:
    @pytest.mark.parametrize("seed", range(40))
    def test_dp_kernels(self, backend, seed):
        rng = np.random.default_rng(seed)
        init, trans, emit, x = random_instance(rng)
        e = enumerate_posterior(init, trans, emit, x)
        assert np.array_equal(backend.viterbi(*logs(init, trans, emit), x), e["mode"])
        alpha, beta, scale = backend.forward_backward(init, trans, emit, x)
        gamma = alpha * beta
        np.testing.assert_allclose(gamma, e["marginals"], atol=1e-10)
        K = len(init)
        paths, scores = backend.beam_search(init, trans, emit, x, K)
        assert np.array_equal(paths[0], e["mode"])
        best = -np.log(np.exp(e["logp"] - e["logp"].max()).sum())
        assert scores[0] == pytest.approx(best, abs=1e-9)
        assert np.array_equal(backend.greedy(init, trans, emit, x), greedy_oracle(init, trans, emit, x))

    def test_beam_scores_are_posterior_log_probs(self, backend):
        rng = np.random.default_rng(5)
        init, trans, emit, x = random_instance(rng, kmax=3, tmax=5)
        e = enumerate_posterior(init, trans, emit, x)
        table = {y: np.log(p) for y, p in zip(e["seqs"], e["p"])}
        paths, scores = backend.beam_search(init, trans, emit, x, 3)
        for path, s in zip(paths, scores):
            assert s == pytest.approx(table[tuple(path)], abs=1e-9)
        assert np.all(np.diff(scores) <= 1e-12)

    def test_ffbs_distribution(self, backend):
        rng = np.random.default_rng(0)
        init = np.array([0.6, 0.4])
        trans = np.array([[0.7, 0.3], [0.2, 0.8]])
        emit = np.array([[0.5, 0.5], [0.1, 0.9]])
        x = np.array([1, 0, 1])
        e = enumerate_posterior(init, trans, emit, x)
        n = 100_000 if backend.BACKEND == "cython" else 20_000
        U = rng.random((n, 3))
        freq = {}
        for u in U:
            y = tuple(backend.ffbs(init, trans, emit, x, u))
            freq[y] = freq.get(y, 0) + 1
        for y, p in zip(e["seqs"], e["p"]):
            sigma = np.sqrt(p * (1 - p) / n)
            assert abs(freq.get(y, 0) / n - p) <= 3 * sigma + 1e-12

    def test_topk_full_matches_distribution(self, backend):
        rng = np.random.default_rng(1)
        init, trans, emit, _ = random_instance(np.random.default_rng(3), kmax=3)
        K = len(init)
        x = np.array([0, 0])
        e = enumerate_posterior(init, trans, emit, x)
        n = 40_000
        freq = {}
        for u in rng.random((n, 2)):
            y = tuple(backend.topk_sample(init, trans, emit, x, K, u))
            freq[y] = freq.get(y, 0) + 1
        for y, p in zip(e["seqs"], e["p"]):
            assert abs(freq.get(y, 0) / n - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12

    def test_ancestral_uses_inverse_cdf(self, backend):
        init = np.array([0.25, 0.75])
        trans = np.array([[1.0, 0.0], [0.0, 1.0]])
        emit = np.array([[1.0, 0.0], [0.0, 1.0]])
        x, y = backend.ancestral(init, trans, emit, 3, np.array([0.1, 0.5, 0.9, 0.5, 0.3, 0.5]))
        assert y.tolist() == [0, 0, 0] and x.tolist() == [0, 0, 0]
        x, y = backend.ancestral(init, trans, emit, 2, np.array([0.3, 0.5, 0.0, 0.5]))
        assert y.tolist() == [1, 1]


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
class TestBackendsAgree:
    py, cy = BACKENDS

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    @settings(max_examples=150, deadline=None)
    def test_decoders(self, seed, width):
        rng = np.random.default_rng(seed)
        init, trans, emit, x = random_instance(rng, kmax=5, vmax=6, tmax=12)
        lp = logs(init, trans, emit)
        assert np.array_equal(self.py.viterbi(*lp, x), self.cy.viterbi(*lp, x))
        assert np.array_equal(self.py.greedy(init, trans, emit, x),
                              self.cy.greedy(init, trans, emit, x))
        pa, sa = self.py.beam_search(init, trans, emit, x, width)
        pb, sb = self.cy.beam_search(init, trans, emit, x, width)
        assert np.array_equal(pa, pb)
        np.testing.assert_allclose(sa, sb, rtol=1e-12, atol=1e-12)
        for a, b in zip(self.py.forward_backward(init, trans, emit, x),
                        self.cy.forward_backward(init, trans, emit, x)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)
        u = rng.random(2 * len(x))
        assert np.array_equal(self.py.ffbs(init, trans, emit, x, u[:len(x)]),
                              self.cy.ffbs(init, trans, emit, x, u[:len(x)]))
        k = int(rng.integers(1, len(init) + 1))
        assert np.array_equal(self.py.topk_sample(init, trans, emit, x, k, u[:len(x)]),
                              self.cy.topk_sample(init, trans, emit, x, k, u[:len(x)]))
        for a, b in zip(self.py.ancestral(init, trans, emit, len(x), u),
                        self.cy.ancestral(init, trans, emit, len(x), u)):
            assert np.array_equal(a, b)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_align_estep(self, seed):
        from _synth import random_corpus
        from kdlab.align import _index_links
        idx = _index_links(random_corpus(25, seed=seed % 1000))
        rng = np.random.default_rng(seed)
        tprob = rng.random(len(idx.keys))
        out = []
        for k in (self.py, self.cy):
            counts = np.zeros(len(tprob))
            res = k.align_estep(tprob, idx.link_idx, idx.offsets, idx.src_len, idx.tgt_len,
                                0, len(idx.src_len), 4.0, 0.08, counts)
            out.append((res, counts))
        np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-12)
        np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-12, atol=1e-15)

    def test_sgd_and_loss(self):
        rng = np.random.default_rng(0)
        xs = [rng.integers(0, 6, rng.integers(3, 9)) for _ in range(200)]
        feats = feature_matrix(xs, 2, 6)
        labels = rng.integers(0, 4, len(feats)).astype(np.int64)
        order = rng.permutation(len(labels)).astype(np.int64)
        Wa = np.zeros((int(feats.max()) + 1, 4))
        Wb = Wa.copy()
        for _ in range(3):
            self.py.sgd_epoch(Wa, feats, labels, order, 0.2, 16)
            self.cy.sgd_epoch(Wb, feats, labels, order, 0.2, 16)
        np.testing.assert_allclose(Wa, Wb, rtol=1e-10, atol=1e-12)
        assert self.py.softmax_loss(Wa, feats, labels) == \
            pytest.approx(self.cy.softmax_loss(Wb, feats, labels), rel=1e-12)


def test_sgd_gradient_matches_finite_difference(backend):
    rng = np.random.default_rng(2)
    feats = feature_matrix([rng.integers(0, 3, 5) for _ in range(4)], 1, 3)
    labels = rng.integers(0, 3, len(feats)).astype(np.int64)
    W = rng.normal(size=(int(feats.max()) + 1, 3))
    W2 = W.copy()
    lr = 1e-3
    backend.sgd_epoch(W2, feats, labels, np.arange(len(labels), dtype=np.int64), lr, len(labels))
    grad = (W - W2) / lr * len(labels)
    h = 1e-6
    num = np.zeros_like(W)
    for idx in np.ndindex(*W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        num[idx] = (backend.softmax_loss(Wp, feats, labels)
                    - backend.softmax_loss(Wm, feats, labels)) / (2 * h)
    np.testing.assert_allclose(grad, num, atol=1e-6)
