"""Pure-Python/numpy implementations of the hot loops.

Mirrors ``_ckernels.pyx`` function for function; ``kdlab.kernels`` picks
whichever is importable.  Discrete outputs (paths, samples given the same
uniforms) agree exactly with the compiled backend; floating outputs agree
to rounding.
"""

import math

import numpy as np

BACKEND = "python"

_NEG_INF = float("-inf")
# log-scores closer than this are ties; ties go to the smallest index
TIE_TOL = 1e-9


def argmax_tol(v):
    """Smallest index whose value is within ``TIE_TOL`` of the maximum."""
    m = float(np.max(v))
    return int(np.flatnonzero(v >= m - TIE_TOL)[0])


def top_labels(v, width):
    """Repeated ``argmax_tol`` over the remaining entries, at most ``width``."""
    v = np.array(v, dtype=np.float64)
    out = []
    removed = np.zeros(len(v), dtype=bool)
    for _ in range(min(width, len(v))):
        rest = np.where(removed, np.nan, v)
        m = np.nanmax(rest)
        j = int(np.flatnonzero(~removed & (v >= m - TIE_TOL))[0])
        out.append(j)
        removed[j] = True
    return np.array(out, dtype=np.int64)


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def _pick(w, u):
    """Inverse-CDF draw from unnormalized weights ``w`` with ``u`` in [0, 1)."""
    cum = np.cumsum(w)
    target = u * cum[-1]
    j = int(np.searchsorted(cum, target, side="right"))
    if j >= len(w):
        j = int(np.flatnonzero(w > 0)[-1])
    return j


def viterbi(log_pi, log_A, log_B, x):
    T = len(x)
    K = len(log_pi)
    back = np.zeros((T, K), dtype=np.int64)
    delta = log_pi + log_B[:, x[0]]
    for t in range(1, T):
        cand = delta[:, None] + log_A
        for j in range(K):
            back[t, j] = argmax_tol(cand[:, j])
        delta = cand[back[t], np.arange(K)] + log_B[:, x[t]]
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = argmax_tol(delta)
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def forward_backward(pi, A, B, x):
    T = len(x)
    K = len(pi)
    alpha = np.empty((T, K))
    beta = np.empty((T, K))
    scale = np.empty(T)
    a = pi * B[:, x[0]]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, T):
        a = (alpha[t - 1] @ A) * B[:, x[t]]
        scale[t] = a.sum()
        alpha[t] = a / scale[t]
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (B[:, x[t + 1]] * beta[t + 1])) / scale[t + 1]
    return alpha, beta, scale


def _backward_norm(A, B, x):
    """Backward messages renormalized per step; only ratios within a step matter."""
    T = len(x)
    K = A.shape[0]
    beta = np.empty((T, K))
    beta[T - 1] = 1.0 / K
    for t in range(T - 2, -1, -1):
        b = A @ (B[:, x[t + 1]] * beta[t + 1])
        beta[t] = b / b.sum()
    return beta


def _first_weights(pi, B, x, beta):
    return pi * B[:, x[0]] * beta[0]


def _step_weights(A, B, x, beta, t, prev):
    return A[prev] * B[:, x[t]] * beta[t]


def beam_search(pi, A, B, x, width):
    T = len(x)
    K = len(pi)
    beta = _backward_norm(A, B, x)
    w = _first_weights(pi, B, x, beta)
    score = _log(w) - math.log(w.sum())
    keep = top_labels(score, width)
    hyp_end = keep
    hyp_score = score[keep]
    hyp_paths = [[int(j)] for j in hyp_end]
    for t in range(1, T):
        # candidate matrix rows ordered by previous end label
        order = np.argsort(hyp_end, kind="stable")
        cand = np.empty((len(order), K))
        for r, h in enumerate(order):
            wt = _step_weights(A, B, x, beta, t, hyp_end[h])
            cand[r] = hyp_score[h] + (_log(wt) - math.log(wt.sum()))
        best = np.empty(K)
        best_h = np.empty(K, dtype=np.int64)
        for j in range(K):
            r = argmax_tol(cand[:, j])
            best[j] = cand[r, j]
            best_h[j] = order[r]
        keep = top_labels(best, width)
        hyp_paths = [hyp_paths[best_h[j]] + [int(j)] for j in keep]
        hyp_end = keep
        hyp_score = best[keep]
    # hypotheses are kept in ranked order
    paths = np.array(hyp_paths, dtype=np.int64)
    return paths, np.asarray(hyp_score, dtype=np.float64)


def greedy(pi, A, B, x):
    T = len(x)
    beta = _backward_norm(A, B, x)
    path = np.empty(T, dtype=np.int64)
    path[0] = argmax_tol(_log(_first_weights(pi, B, x, beta)))
    for t in range(1, T):
        path[t] = argmax_tol(_log(_step_weights(A, B, x, beta, t, path[t - 1])))
    return path


def _topk(w, k):
    if k >= len(w):
        return w
    idx = top_labels(_log(w), k)
    out = np.zeros_like(w)
    out[idx] = w[idx]
    return out


def topk_sample(pi, A, B, x, k, u):
    T = len(x)
    beta = _backward_norm(A, B, x)
    path = np.empty(T, dtype=np.int64)
    path[0] = _pick(_topk(_first_weights(pi, B, x, beta), k), u[0])
    for t in range(1, T):
        w = _step_weights(A, B, x, beta, t, path[t - 1])
        path[t] = _pick(_topk(w, k), u[t])
    return path


def ffbs(pi, A, B, x, u):
    T = len(x)
    alpha, _, _ = forward_backward(pi, A, B, x)
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = _pick(alpha[T - 1], u[T - 1])
    for t in range(T - 2, -1, -1):
        path[t] = _pick(alpha[t] * A[:, path[t + 1]], u[t])
    return path


def ancestral(pi, A, B, T, u):
    x = np.empty(T, dtype=np.int64)
    y = np.empty(T, dtype=np.int64)
    y[0] = _pick(pi, u[0])
    x[0] = _pick(B[y[0]], u[1])
    for t in range(1, T):
        y[t] = _pick(A[y[t - 1]], u[2 * t])
        x[t] = _pick(B[y[t]], u[2 * t + 1])
    return x, y


def align_estep(tprob, link_idx, offsets, src_len, tgt_len, lo, hi,
                tension, null_prob, counts):
    loglik = 0.0
    dist_sum = 0.0
    mass = 0.0
    for p in range(lo, hi):
        tx = int(src_len[p])
        ty = int(tgt_len[p])
        block = link_idx[offsets[p]:offsets[p] + (tx + 1) * ty].reshape(ty, tx + 1)
        pos = np.arange(tx) / tx
        for j in range(ty):
            d = np.abs(pos - j / ty)
            wgt = np.exp(-tension * (d - d.min()))
            prior = np.empty(tx + 1)
            prior[0] = null_prob
            prior[1:] = (1.0 - null_prob) * wgt / wgt.sum()
            joint = prior * tprob[block[j]]
            z = joint.sum()
            loglik += math.log(z)
            post = joint / z
            np.add.at(counts, block[j], post)
            dist_sum += float(post[1:] @ d)
            mass += float(post[1:].sum())
    return loglik, dist_sum, mass


def sgd_epoch(W, feats, labels, order, lr, batch):
    n = len(order)
    for start in range(0, n, batch):
        idx = order[start:start + batch]
        f = feats[idx]
        s = W[f].sum(axis=1)
        s -= s.max(axis=1, keepdims=True)
        p = np.exp(s)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(len(idx)), labels[idx]] -= 1.0
        grad = np.zeros_like(W)
        F = f.shape[1]
        np.add.at(grad, f.ravel(), np.repeat(p, F, axis=0))
        W -= (lr / len(idx)) * grad
    return None


def softmax_loss(W, feats, labels):
    s = W[feats].sum(axis=1)
    m = s.max(axis=1, keepdims=True)
    lse = (m[:, 0] + np.log(np.exp(s - m).sum(axis=1)))
    return float((lse - s[np.arange(len(labels)), labels]).sum())
