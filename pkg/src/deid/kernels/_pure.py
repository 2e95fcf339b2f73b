"""Reference numpy implementation of the hot kernels.

The compiled module ``_fast`` exposes the same four functions with the same
signatures; :mod:`deid.kernels` picks one at import time.

LSTM layout: ``Wi`` and ``Wo`` are ``(d_h, d_in + 2*d_h)`` and ``Wc`` is
``(d_h, d_in + d_h)``.  Column blocks are ``[x; h_prev; c]`` where the third
block of ``Wi`` reads ``c_prev`` and the third block of ``Wo`` reads ``c_t``
(or ``h_prev`` again when ``literal`` is set).
"""
import numpy as np


def _sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(X, Wi, Wc, Wo, bi, bc, bo, literal):
    n, d_in = X.shape
    d_h = bi.shape[0]
    Xi = X @ Wi[:, :d_in].T + bi
    Xc = X @ Wc[:, :d_in].T + bc
    Xo = X @ Wo[:, :d_in].T + bo
    Ui_h, Ui_c = Wi[:, d_in:d_in + d_h], Wi[:, d_in + d_h:]
    Uc_h = Wc[:, d_in:]
    Uo_h, Uo_c = Wo[:, d_in:d_in + d_h], Wo[:, d_in + d_h:]

    H = np.empty((n, d_h))
    C = np.empty((n, d_h))
    I = np.empty((n, d_h))
    G = np.empty((n, d_h))
    O = np.empty((n, d_h))
    h = np.zeros(d_h)
    c = np.zeros(d_h)
    for t in range(n):
        i = _sig(Xi[t] + Ui_h @ h + Ui_c @ c)
        g = np.tanh(Xc[t] + Uc_h @ h)
        c_new = (1.0 - i) * c + i * g
        third = h if literal else c_new
        o = _sig(Xo[t] + Uo_h @ h + Uo_c @ third)
        h = o * np.tanh(c_new)
        c = c_new
        H[t], C[t], I[t], G[t], O[t] = h, c, i, g, o
    return H, C, I, G, O


def lstm_backward(X, H, C, I, G, O, Wi, Wc, Wo, literal, dH):
    n, d_in = X.shape
    d_h = H.shape[1]
    Ui_h, Ui_c = Wi[:, d_in:d_in + d_h], Wi[:, d_in + d_h:]
    Uc_h = Wc[:, d_in:]
    Uo_h, Uo_c = Wo[:, d_in:d_in + d_h], Wo[:, d_in + d_h:]

    dZi = np.empty((n, d_h))
    dZc = np.empty((n, d_h))
    dZo = np.empty((n, d_h))
    dh_carry = np.zeros(d_h)
    dc_carry = np.zeros(d_h)
    zero = np.zeros(d_h)
    for t in range(n - 1, -1, -1):
        c_prev = C[t - 1] if t > 0 else zero
        tc = np.tanh(C[t])
        dh = dH[t] + dh_carry
        dzo = dh * tc * O[t] * (1.0 - O[t])
        dc = dc_carry + dh * O[t] * (1.0 - tc * tc)
        back_o3 = Uo_c.T @ dzo
        dh_prev = Uo_h.T @ dzo
        if literal:
            dh_prev = dh_prev + back_o3
        else:
            dc = dc + back_o3
        dzi = dc * (G[t] - c_prev) * I[t] * (1.0 - I[t])
        dzc = dc * I[t] * (1.0 - G[t] * G[t])
        dc_carry = dc * (1.0 - I[t]) + Ui_c.T @ dzi
        dh_carry = dh_prev + Ui_h.T @ dzi + Uc_h.T @ dzc
        dZi[t], dZc[t], dZo[t] = dzi, dzc, dzo

    Hp = np.vstack([np.zeros((1, d_h)), H[:-1]])
    Cp = np.vstack([np.zeros((1, d_h)), C[:-1]])
    dWi = dZi.T @ np.hstack([X, Hp, Cp])
    dWc = dZc.T @ np.hstack([X, Hp])
    dWo = dZo.T @ np.hstack([X, Hp, Hp if literal else C])
    dX = dZi @ Wi[:, :d_in] + dZc @ Wc[:, :d_in] + dZo @ Wo[:, :d_in]
    return dX, dWi, dWc, dWo, dZi.sum(0), dZc.sum(0), dZo.sum(0)


def _lse_cols(M):
    m = M.max(axis=0)
    return m + np.log(np.exp(M - m).sum(axis=0))


def _lse_rows(M):
    m = M.max(axis=1)
    return m + np.log(np.exp(M - m[:, None]).sum(axis=1))


def crf_forward_backward(A, T):
    """Return ``(logZ, unary, pairwise)`` for emissions ``A`` (n, k)."""
    n, k = A.shape
    alpha = np.empty((n, k))
    beta = np.zeros((n, k))
    alpha[0] = A[0]
    for t in range(1, n):
        alpha[t] = A[t] + _lse_cols(alpha[t - 1][:, None] + T)
    for t in range(n - 2, -1, -1):
        beta[t] = _lse_rows(T + (A[t + 1] + beta[t + 1])[None, :])
    last = alpha[n - 1]
    m = last.max()
    logZ = float(m + np.log(np.exp(last - m).sum()))
    unary = np.exp(alpha + beta - logZ)
    pairwise = np.empty((max(n - 1, 0), k, k))
    for t in range(1, n):
        pairwise[t - 1] = np.exp(
            alpha[t - 1][:, None] + T + (A[t] + beta[t])[None, :] - logZ
        )
    return logZ, unary, pairwise


def crf_viterbi(A, T):
    """Best path and its score; ties go to the lowest label index."""
    n, k = A.shape
    back = np.zeros((n, k), dtype=np.int64)
    delta = A[0].copy()
    for t in range(1, n):
        s = delta[:, None] + T
        back[t] = np.argmax(s, axis=0)
        delta = A[t] + s[back[t], np.arange(k)]
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = int(np.argmax(delta))
    score = float(delta[path[n - 1]])
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, score
