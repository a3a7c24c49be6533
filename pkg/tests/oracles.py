"""Exhaustive-enumeration oracle for small HMM instances, independent of the package."""

import itertools

import numpy as np

TOL = 1e-9


def enumerate_posterior(init, trans, emit, x):
    """All label sequences with log p(y, x), normalized p(y | x), marginals, entropy, mode."""
    K = len(init)
    T = len(x)
    seqs = list(itertools.product(range(K), repeat=T))
    logp = np.empty(len(seqs))
    with np.errstate(divide="ignore"):
        li, lt, le = np.log(init), np.log(trans), np.log(emit)
    for n, y in enumerate(seqs):
        v = li[y[0]] + le[y[0], x[0]]
        for t in range(1, T):
            v += lt[y[t - 1], y[t]] + le[y[t], x[t]]
        logp[n] = v
    m = logp.max()
    p = np.exp(logp - m)
    p /= p.sum()
    marg = np.zeros((T, K))
    for n, y in enumerate(seqs):
        for t in range(T):
            marg[t, y[t]] += p[n]
    nz = p[p > 0]
    ent = float(-(nz * np.log(nz)).sum())
    near = [seqs[n] for n in range(len(seqs)) if logp[n] >= m - TOL]
    mode = min(near, key=lambda y: y[::-1])
    return {"seqs": seqs, "p": p, "logp": logp, "marginals": marg, "entropy": ent,
            "mode": np.array(mode)}


def random_instance(rng, kmax=4, vmax=5, tmax=8):
    K = int(rng.integers(1, kmax + 1))
    V = int(rng.integers(1, vmax + 1))
    T = int(rng.integers(1, tmax + 1))
    init = 1.0 - rng.random(K)
    trans = 1.0 - rng.random((K, K))
    emit = 1.0 - rng.random((K, V))
    init /= init.sum()
    trans /= trans.sum(axis=1, keepdims=True)
    emit /= emit.sum(axis=1, keepdims=True)
    x = rng.integers(0, V, T)
    return init, trans, emit, x
