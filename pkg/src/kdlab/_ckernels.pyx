# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.  API mirrors ``kdlab._pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()

BACKEND = "cython"

# log-scores closer than this are ties; ties go to the smallest index
cdef double TIE_TOL = 1e-9


cdef inline Py_ssize_t _pick(double[::1] w, double u) noexcept nogil:
    cdef Py_ssize_t n = w.shape[0], j
    cdef double total = 0.0, cum = 0.0, target
    for j in range(n):
        total += w[j]
    target = u * total
    for j in range(n):
        cum += w[j]
        if target < cum:
            return j
    j = n - 1
    while j > 0 and w[j] <= 0.0:
        j -= 1
    return j


def viterbi(const double[::1] log_pi, const double[:, ::1] log_A,
            const double[:, ::1] log_B, const long long[::1] x):
    cdef Py_ssize_t T = x.shape[0], K = log_pi.shape[0], t, i, j, bi
    cdef double best, v
    back_arr = np.zeros((T, K), dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef long long[:, ::1] back = back_arr
    cdef long long[::1] path = path_arr
    cdef double[::1] delta = np.empty(K)
    cdef double[::1] nxt = np.empty(K)
    with nogil:
        for j in range(K):
            delta[j] = log_pi[j] + log_B[j, x[0]]
        for t in range(1, T):
            for j in range(K):
                best = delta[0] + log_A[0, j]
                for i in range(1, K):
                    v = delta[i] + log_A[i, j]
                    if v > best:
                        best = v
                for i in range(K):
                    v = delta[i] + log_A[i, j]
                    if v >= best - TIE_TOL:
                        bi = i
                        break
                back[t, j] = bi
                nxt[j] = v + log_B[j, x[t]]
            for j in range(K):
                delta[j] = nxt[j]
        path[T - 1] = _argmax_tol(delta)
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr


cdef void _forward(const double[::1] pi, const double[:, ::1] A,
                   const double[:, ::1] B, const long long[::1] x,
                   double[:, ::1] alpha, double[::1] scale) noexcept nogil:
    cdef Py_ssize_t T = x.shape[0], K = pi.shape[0], t, i, j
    cdef double s, a
    s = 0.0
    for j in range(K):
        alpha[0, j] = pi[j] * B[j, x[0]]
        s += alpha[0, j]
    scale[0] = s
    for j in range(K):
        alpha[0, j] /= s
    for t in range(1, T):
        s = 0.0
        for j in range(K):
            a = 0.0
            for i in range(K):
                a += alpha[t - 1, i] * A[i, j]
            alpha[t, j] = a * B[j, x[t]]
            s += alpha[t, j]
        scale[t] = s
        for j in range(K):
            alpha[t, j] /= s


def forward_backward(const double[::1] pi, const double[:, ::1] A,
                     const double[:, ::1] B, const long long[::1] x):
    cdef Py_ssize_t T = x.shape[0], K = pi.shape[0], t, i, j
    cdef double b
    alpha_arr = np.empty((T, K))
    beta_arr = np.empty((T, K))
    scale_arr = np.empty(T)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[::1] scale = scale_arr
    with nogil:
        _forward(pi, A, B, x, alpha, scale)
        for j in range(K):
            beta[T - 1, j] = 1.0
        for t in range(T - 2, -1, -1):
            for i in range(K):
                b = 0.0
                for j in range(K):
                    b += A[i, j] * (B[j, x[t + 1]] * beta[t + 1, j])
                beta[t, i] = b / scale[t + 1]
    return alpha_arr, beta_arr, scale_arr


cdef void _backward_norm(const double[:, ::1] A, const double[:, ::1] B,
                         const long long[::1] x, double[:, ::1] beta) noexcept nogil:
    cdef Py_ssize_t T = x.shape[0], K = A.shape[0], t, i, j
    cdef double b, s
    for j in range(K):
        beta[T - 1, j] = 1.0 / K
    for t in range(T - 2, -1, -1):
        s = 0.0
        for i in range(K):
            b = 0.0
            for j in range(K):
                b += A[i, j] * (B[j, x[t + 1]] * beta[t + 1, j])
            beta[t, i] = b
            s += b
        for i in range(K):
            beta[t, i] /= s


cdef inline void _first_weights(const double[::1] pi, const double[:, ::1] B,
                                const long long[::1] x, double[:, ::1] beta,
                                double[::1] w) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(pi.shape[0]):
        w[j] = pi[j] * B[j, x[0]] * beta[0, j]


cdef inline void _step_weights(const double[:, ::1] A, const double[:, ::1] B,
                               const long long[::1] x, double[:, ::1] beta,
                               Py_ssize_t t, Py_ssize_t prev,
                               double[::1] w) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(A.shape[0]):
        w[j] = A[prev, j] * B[j, x[t]] * beta[t, j]


cdef inline double _safe_log(double v) noexcept nogil:
    if v <= 0.0:
        return -INFINITY
    return log(v)


cdef inline Py_ssize_t _argmax_tol(double[::1] v) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0], j
    cdef double m = v[0]
    for j in range(1, n):
        if v[j] > m:
            m = v[j]
    for j in range(n):
        if v[j] >= m - TIE_TOL:
            return j
    return 0


cdef void _top_labels(double[::1] score, Py_ssize_t width,
                      long long[::1] out, char[::1] removed) noexcept nogil:
    """Repeated tolerance argmax over the not-yet-chosen entries."""
    cdef Py_ssize_t K = score.shape[0], r, j, pick
    cdef double m
    cdef bint have
    for j in range(K):
        removed[j] = 0
    if width > K:
        width = K
    for r in range(width):
        have = False
        m = 0.0
        for j in range(K):
            if not removed[j] and (not have or score[j] > m):
                m = score[j]
                have = True
        pick = 0
        for j in range(K):
            if not removed[j] and score[j] >= m - TIE_TOL:
                pick = j
                break
        out[r] = pick
        removed[pick] = 1


def beam_search(const double[::1] pi, const double[:, ::1] A,
                const double[:, ::1] B, const long long[::1] x, Py_ssize_t width):
    cdef Py_ssize_t T = x.shape[0], K = pi.shape[0], t, h, j, i, nh, W, bh
    cdef double s, c, m
    cdef bint have
    W = width if width < K else K
    cdef double[:, ::1] beta = np.empty((T, K))
    cdef double[::1] w = np.empty(K)
    cdef double[::1] score = np.empty(K)
    cdef double[:, ::1] cand = np.empty((K, K))
    cdef double[::1] best = np.empty(K)
    cdef long long[::1] best_h = np.empty(K, dtype=np.int64)
    cdef long long[::1] keep = np.empty(K, dtype=np.int64)
    cdef char[::1] removed = np.empty(K, dtype=np.int8)
    cdef long long[::1] hyp_end = np.empty(K, dtype=np.int64)
    cdef double[::1] hyp_score = np.empty(K)
    cdef long long[::1] by_label = np.empty(K, dtype=np.int64)
    # back[t, slot] = slot of the parent hypothesis at t-1
    cdef long long[:, ::1] back = np.zeros((T, K), dtype=np.int64)
    cdef long long[:, ::1] ends = np.zeros((T, K), dtype=np.int64)
    with nogil:
        _backward_norm(A, B, x, beta)
        _first_weights(pi, B, x, beta, w)
        s = 0.0
        for j in range(K):
            s += w[j]
        for j in range(K):
            score[j] = _safe_log(w[j]) - log(s)
        _top_labels(score, W, keep, removed)
        nh = W
        for h in range(nh):
            hyp_end[h] = keep[h]
            hyp_score[h] = score[keep[h]]
            ends[0, h] = keep[h]
        for t in range(1, T):
            for j in range(K):
                by_label[j] = -1
            for h in range(nh):
                by_label[hyp_end[h]] = h
            for i in range(K):
                h = by_label[i]
                if h < 0:
                    continue
                _step_weights(A, B, x, beta, t, i, w)
                s = 0.0
                for j in range(K):
                    s += w[j]
                for j in range(K):
                    cand[i, j] = hyp_score[h] + (_safe_log(w[j]) - log(s))
            for j in range(K):
                have = False
                m = 0.0
                for i in range(K):
                    if by_label[i] >= 0 and (not have or cand[i, j] > m):
                        m = cand[i, j]
                        have = True
                for i in range(K):
                    if by_label[i] >= 0 and cand[i, j] >= m - TIE_TOL:
                        best[j] = cand[i, j]
                        best_h[j] = by_label[i]
                        break
            _top_labels(best, W, keep, removed)
            for h in range(nh):
                back[t, h] = best_h[keep[h]]
                ends[t, h] = keep[h]
                hyp_end[h] = keep[h]
                hyp_score[h] = best[keep[h]]
    # hypotheses are kept in ranked order
    paths = np.empty((nh, T), dtype=np.int64)
    cdef long long[:, ::1] pv = paths
    cdef Py_ssize_t slot
    for h in range(nh):
        slot = h
        for t in range(T - 1, -1, -1):
            pv[h, t] = ends[t, slot]
            slot = back[t, slot]
    return paths, np.asarray(hyp_score[:nh]).copy()


def greedy(const double[::1] pi, const double[:, ::1] A,
           const double[:, ::1] B, const long long[::1] x):
    cdef Py_ssize_t T = x.shape[0], K = pi.shape[0], t, j
    path_arr = np.empty(T, dtype=np.int64)
    cdef long long[::1] path = path_arr
    cdef double[:, ::1] beta = np.empty((T, K))
    cdef double[::1] w = np.empty(K)
    cdef double[::1] lw = np.empty(K)
    with nogil:
        _backward_norm(A, B, x, beta)
        _first_weights(pi, B, x, beta, w)
        for t in range(T):
            if t > 0:
                _step_weights(A, B, x, beta, t, path[t - 1], w)
            for j in range(K):
                lw[j] = _safe_log(w[j])
            path[t] = _argmax_tol(lw)
    return path_arr


cdef void _topk_inplace(double[::1] w, Py_ssize_t k, long long[::1] tmp,
                        double[::1] lw, char[::1] removed) noexcept nogil:
    cdef Py_ssize_t K = w.shape[0], j
    if k >= K:
        return
    for j in range(K):
        lw[j] = _safe_log(w[j])
    _top_labels(lw, k, tmp, removed)
    # removed[] now flags the kept labels
    for j in range(K):
        if not removed[j]:
            w[j] = 0.0


def topk_sample(const double[::1] pi, const double[:, ::1] A,
                const double[:, ::1] B, const long long[::1] x,
                Py_ssize_t k, const double[::1] u):
    cdef Py_ssize_t T = x.shape[0], K = pi.shape[0], t
    path_arr = np.empty(T, dtype=np.int64)
    cdef long long[::1] path = path_arr
    cdef double[:, ::1] beta = np.empty((T, K))
    cdef double[::1] w = np.empty(K)
    cdef long long[::1] tmp = np.empty(K, dtype=np.int64)
    cdef double[::1] lw = np.empty(K)
    cdef char[::1] removed = np.empty(K, dtype=np.int8)
    with nogil:
        _backward_norm(A, B, x, beta)
        _first_weights(pi, B, x, beta, w)
        for t in range(T):
            if t > 0:
                _step_weights(A, B, x, beta, t, path[t - 1], w)
            _topk_inplace(w, k, tmp, lw, removed)
            path[t] = _pick(w, u[t])
    return path_arr


def ffbs(const double[::1] pi, const double[:, ::1] A,
         const double[:, ::1] B, const long long[::1] x, const double[::1] u):
    cdef Py_ssize_t T = x.shape[0], K = pi.shape[0], t, i
    path_arr = np.empty(T, dtype=np.int64)
    cdef long long[::1] path = path_arr
    cdef double[:, ::1] alpha = np.empty((T, K))
    cdef double[::1] scale = np.empty(T)
    cdef double[::1] w = np.empty(K)
    with nogil:
        _forward(pi, A, B, x, alpha, scale)
        for i in range(K):
            w[i] = alpha[T - 1, i]
        path[T - 1] = _pick(w, u[T - 1])
        for t in range(T - 2, -1, -1):
            for i in range(K):
                w[i] = alpha[t, i] * A[i, path[t + 1]]
            path[t] = _pick(w, u[t])
    return path_arr


def ancestral(const double[::1] pi, const double[:, ::1] A,
              const double[:, ::1] B, Py_ssize_t T, const double[::1] u):
    cdef Py_ssize_t t
    x_arr = np.empty(T, dtype=np.int64)
    y_arr = np.empty(T, dtype=np.int64)
    cdef long long[::1] xv = x_arr
    cdef long long[::1] yv = y_arr
    cdef double[::1] row = np.empty(pi.shape[0])
    cdef double[::1] erow = np.empty(B.shape[1])
    with nogil:
        row[:] = pi
        yv[0] = _pick(row, u[0])
        erow[:] = B[yv[0]]
        xv[0] = _pick(erow, u[1])
        for t in range(1, T):
            row[:] = A[yv[t - 1]]
            yv[t] = _pick(row, u[2 * t])
            erow[:] = B[yv[t]]
            xv[t] = _pick(erow, u[2 * t + 1])
    return x_arr, y_arr


def align_estep(const double[::1] tprob, const long long[::1] link_idx,
                const long long[::1] offsets, const long long[::1] src_len,
                const long long[::1] tgt_len, Py_ssize_t lo, Py_ssize_t hi,
                double tension, double null_prob, double[::1] counts):
    cdef Py_ssize_t p, i, j, tx, ty, base, maxx = 1
    cdef double loglik = 0.0, dist_sum = 0.0, mass = 0.0
    cdef double z, wsum, post, dmin
    for p in range(lo, hi):
        if src_len[p] + 1 > maxx:
            maxx = src_len[p] + 1
    cdef double[::1] joint = np.empty(maxx)
    cdef double[::1] dist = np.empty(maxx)
    with nogil:
        for p in range(lo, hi):
            tx = src_len[p]
            ty = tgt_len[p]
            for j in range(ty):
                base = offsets[p] + j * (tx + 1)
                wsum = 0.0
                dmin = 1.0
                for i in range(tx):
                    dist[i + 1] = fabs(<double>i / tx - <double>j / ty)
                    if dist[i + 1] < dmin:
                        dmin = dist[i + 1]
                for i in range(tx):
                    joint[i + 1] = exp(-tension * (dist[i + 1] - dmin))
                    wsum += joint[i + 1]
                joint[0] = null_prob * tprob[link_idx[base]]
                z = joint[0]
                for i in range(1, tx + 1):
                    joint[i] = ((1.0 - null_prob) * joint[i] / wsum) * tprob[link_idx[base + i]]
                    z += joint[i]
                loglik += log(z)
                for i in range(tx + 1):
                    post = joint[i] / z
                    counts[link_idx[base + i]] += post
                    if i > 0:
                        dist_sum += post * dist[i]
                        mass += post
    return loglik, dist_sum, mass


def sgd_epoch(double[:, ::1] W, const long long[:, ::1] feats,
              const long long[::1] labels, const long long[::1] order,
              double lr, Py_ssize_t batch):
    cdef Py_ssize_t n = order.shape[0], D = W.shape[0], K = W.shape[1]
    cdef Py_ssize_t F = feats.shape[1], start, stop, e, ex, f, k
    cdef double m, s, step
    cdef double[:, ::1] grad = np.zeros((D, K))
    cdef double[::1] p = np.empty(K)
    with nogil:
        start = 0
        while start < n:
            stop = start + batch
            if stop > n:
                stop = n
            grad[:, :] = 0.0
            for e in range(start, stop):
                ex = order[e]
                for k in range(K):
                    p[k] = 0.0
                for f in range(F):
                    for k in range(K):
                        p[k] += W[feats[ex, f], k]
                m = p[0]
                for k in range(1, K):
                    if p[k] > m:
                        m = p[k]
                s = 0.0
                for k in range(K):
                    p[k] = exp(p[k] - m)
                    s += p[k]
                for k in range(K):
                    p[k] /= s
                p[labels[ex]] -= 1.0
                for f in range(F):
                    for k in range(K):
                        grad[feats[ex, f], k] += p[k]
            step = lr / (stop - start)
            for f in range(D):
                for k in range(K):
                    W[f, k] -= step * grad[f, k]
            start = stop
    return None


def softmax_loss(const double[:, ::1] W, const long long[:, ::1] feats,
                 const long long[::1] labels):
    cdef Py_ssize_t n = feats.shape[0], K = W.shape[1], F = feats.shape[1], e, f, k
    cdef double total = 0.0, m, s
    cdef double[::1] sc = np.empty(K)
    with nogil:
        for e in range(n):
            for k in range(K):
                sc[k] = 0.0
            for f in range(F):
                for k in range(K):
                    sc[k] += W[feats[e, f], k]
            m = sc[0]
            for k in range(1, K):
                if sc[k] > m:
                    m = sc[k]
            s = 0.0
            for k in range(K):
                s += exp(sc[k] - m)
            total += m + log(s) - sc[labels[e]]
    return total
