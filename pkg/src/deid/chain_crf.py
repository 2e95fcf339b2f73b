"""Linear-chain scoring over label sequences.

A sequence ``y`` scores ``sum_i a[i, y_i] + sum_{i>=1} T[y_{i-1}, y_i]``;
there are no start or stop transitions.  ``T`` holds unconstrained real
scores.  The heavy recursions live in :mod:`deid.kernels`.
"""
from __future__ import annotations

import itertools

import numpy as np

from . import kernels
from .numerics import logsumexp

MAX_ENUMERATION = 10 ** 6


def _check(a, T):
    a = np.ascontiguousarray(a, dtype=np.float64)
    T = np.ascontiguousarray(T, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("emissions must be a nonempty (n, k) array")
    k = a.shape[1]
    if T.shape != (k, k):
        raise ValueError(f"transition matrix has shape {T.shape}, expected {(k, k)}")
    return a, T


def sequence_score(a, T, y) -> float:
    a, T = _check(a, T)
    y = np.asarray(y, dtype=np.int64)
    n, k = a.shape
    if y.shape != (n,):
        raise ValueError("label sequence length differs from emissions")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"label out of range 0..{k - 1}")
    return float(a[np.arange(n), y].sum() + T[y[:-1], y[1:]].sum())


def log_partition(a, T) -> float:
    a, T = _check(a, T)
    return kernels.crf_forward_backward(a, T)[0]


def posterior_marginals(a, T):
    """Per-position label marginals (n, k) and adjacent-pair marginals (n-1, k, k)."""
    a, T = _check(a, T)
    _, unary, pairwise = kernels.crf_forward_backward(a, T)
    return unary, pairwise


def forward_backward(a, T):
    a, T = _check(a, T)
    return kernels.crf_forward_backward(a, T)


def viterbi(a, T):
    a, T = _check(a, T)
    path, score = kernels.crf_viterbi(a, T)
    return [int(v) for v in path], score


def nll_and_grads(a, T, y):
    """Negative log-likelihood of ``y`` plus its gradients w.r.t. ``a`` and ``T``."""
    a, T = _check(a, T)
    y = np.asarray(y, dtype=np.int64)
    n = a.shape[0]
    logZ, unary, pairwise = kernels.crf_forward_backward(a, T)
    loss = logZ - sequence_score(a, T, y)
    da = unary.copy()
    da[np.arange(n), y] -= 1.0
    dT = pairwise.sum(axis=0)
    np.subtract.at(dT, (y[:-1], y[1:]), 1.0)
    return loss, da, dT


def _all_sequences(n, k) -> np.ndarray:
    """Every label sequence as a (k^n, n) array, in lexicographic order."""
    if k ** n > MAX_ENUMERATION:
        raise ValueError(f"refusing to enumerate {k}^{n} label sequences")
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(k ** n, n)


def brute_force_scores(a, T):
    a, T = _check(a, T)
    n, k = a.shape
    seqs = _all_sequences(n, k)
    scores = a[np.arange(n), seqs].sum(axis=1)
    if n > 1:
        scores = scores + T[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_force_best(a, T):
    """Best sequence by enumeration; the first maximum in lexicographic order."""
    seqs, scores = brute_force_scores(a, T)
    j = int(np.argmax(scores))
    return [int(v) for v in seqs[j]], float(scores[j])


def brute_force_logZ(a, T) -> float:
    _, scores = brute_force_scores(a, T)
    return logsumexp(scores)


def brute_force_marginals(a, T):
    a, T = _check(a, T)
    n, k = a.shape
    seqs, scores = brute_force_scores(a, T)
    probs = np.exp(scores - logsumexp(scores))
    unary = np.zeros((n, k))
    pairwise = np.zeros((max(n - 1, 0), k, k))
    for i in range(n):
        np.add.at(unary[i], seqs[:, i], probs)
    for i in range(1, n):
        np.add.at(pairwise[i - 1], (seqs[:, i - 1], seqs[:, i]), probs)
    return unary, pairwise
