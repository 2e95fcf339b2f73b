# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pure.py`` (same signatures)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp, log
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef inline double _sig(double z) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * z))


cdef inline void _matvec(double[:, ::1] W, int off, int m, double* x,
                         double beta, double* y) noexcept nogil:
    # y = W[:, off:off+m] @ x + beta * y
    cdef int rows = W.shape[0]
    cdef int lda = W.shape[1]
    cdef int inc = 1
    cdef double one = 1.0
    cdef char trans = b'T'
    dgemv(&trans, &m, &rows, &one, &W[0, off], &lda, x, &inc, &beta, y, &inc)


cdef inline void _tmatvec(double[:, ::1] W, int off, int m, double* z,
                          double beta, double* y) noexcept nogil:
    # y = W[:, off:off+m].T @ z + beta * y
    cdef int rows = W.shape[0]
    cdef int lda = W.shape[1]
    cdef int inc = 1
    cdef double one = 1.0
    cdef char trans = b'N'
    dgemv(&trans, &m, &rows, &one, &W[0, off], &lda, z, &inc, &beta, y, &inc)


def lstm_forward(X, Wi, Wc, Wo, bi, bc, bo, bint literal):
    cdef int n = X.shape[0]
    cdef int d_in = X.shape[1]
    cdef int d_h = bi.shape[0]
    cdef double[:, ::1] Xi = np.ascontiguousarray(X @ Wi[:, :d_in].T + bi)
    cdef double[:, ::1] Xc = np.ascontiguousarray(X @ Wc[:, :d_in].T + bc)
    cdef double[:, ::1] Xo = np.ascontiguousarray(X @ Wo[:, :d_in].T + bo)
    cdef double[:, ::1] wi = np.ascontiguousarray(Wi)
    cdef double[:, ::1] wc = np.ascontiguousarray(Wc)
    cdef double[:, ::1] wo = np.ascontiguousarray(Wo)

    H_ = np.empty((n, d_h))
    C_ = np.empty((n, d_h))
    I_ = np.empty((n, d_h))
    G_ = np.empty((n, d_h))
    O_ = np.empty((n, d_h))
    cdef double[:, ::1] H = H_, C = C_, I = I_, G = G_, O = O_
    # hc holds [h_prev; c] contiguously so one gemv covers both blocks
    cdef double[::1] hc = np.zeros(2 * d_h)
    cdef double[::1] hh = np.zeros(2 * d_h)
    cdef double[::1] zi = np.empty(d_h), zc = np.empty(d_h), zo = np.empty(d_h)
    cdef int t, r
    cdef double iv, gv, cv
    with nogil:
        for t in range(n):
            _matvec(wi, d_in, 2 * d_h, &hc[0], 0.0, &zi[0])
            _matvec(wc, d_in, d_h, &hc[0], 0.0, &zc[0])
            for r in range(d_h):
                iv = _sig(Xi[t, r] + zi[r])
                gv = tanh(Xc[t, r] + zc[r])
                cv = (1.0 - iv) * hc[d_h + r] + iv * gv
                I[t, r] = iv
                G[t, r] = gv
                C[t, r] = cv
            if literal:
                for r in range(d_h):
                    hh[r] = hc[r]
                    hh[d_h + r] = hc[r]
                _matvec(wo, d_in, 2 * d_h, &hh[0], 0.0, &zo[0])
            else:
                for r in range(d_h):
                    hc[d_h + r] = C[t, r]
                _matvec(wo, d_in, 2 * d_h, &hc[0], 0.0, &zo[0])
            for r in range(d_h):
                O[t, r] = _sig(Xo[t, r] + zo[r])
                H[t, r] = O[t, r] * tanh(C[t, r])
                hc[r] = H[t, r]
                hc[d_h + r] = C[t, r]
    return H_, C_, I_, G_, O_


def lstm_backward(X, H_, C_, I_, G_, O_, Wi, Wc, Wo, bint literal, dH_):
    cdef int n = X.shape[0]
    cdef int d_in = X.shape[1]
    cdef int d_h = H_.shape[1]
    cdef double[:, ::1] wi = np.ascontiguousarray(Wi)
    cdef double[:, ::1] wc = np.ascontiguousarray(Wc)
    cdef double[:, ::1] wo = np.ascontiguousarray(Wo)
    cdef double[:, ::1] H = np.ascontiguousarray(H_), C = np.ascontiguousarray(C_)
    cdef double[:, ::1] I = np.ascontiguousarray(I_), G = np.ascontiguousarray(G_)
    cdef double[:, ::1] O = np.ascontiguousarray(O_)
    cdef double[:, ::1] dH = np.ascontiguousarray(dH_, dtype=np.float64)

    dZi_ = np.empty((n, d_h))
    dZc_ = np.empty((n, d_h))
    dZo_ = np.empty((n, d_h))
    cdef double[:, ::1] dZi = dZi_, dZc = dZc_, dZo = dZo_
    cdef double[::1] dh_carry = np.zeros(d_h), dc_carry = np.zeros(d_h)
    cdef double[::1] dh = np.empty(d_h), dc = np.empty(d_h)
    cdef double[::1] back_o = np.empty(2 * d_h), back_i = np.empty(2 * d_h)
    cdef int t, r
    cdef double tc, cp, o
    with nogil:
        for t in range(n - 1, -1, -1):
            for r in range(d_h):
                tc = tanh(C[t, r])
                o = O[t, r]
                dh[r] = dH[t, r] + dh_carry[r]
                dZo[t, r] = dh[r] * tc * o * (1.0 - o)
                dc[r] = dc_carry[r] + dh[r] * o * (1.0 - tc * tc)
            _tmatvec(wo, d_in, 2 * d_h, &dZo[t, 0], 0.0, &back_o[0])
            for r in range(d_h):
                if literal:
                    dh_carry[r] = back_o[r] + back_o[d_h + r]
                else:
                    dh_carry[r] = back_o[r]
                    dc[r] = dc[r] + back_o[d_h + r]
                cp = C[t - 1, r] if t > 0 else 0.0
                dZi[t, r] = dc[r] * (G[t, r] - cp) * I[t, r] * (1.0 - I[t, r])
                dZc[t, r] = dc[r] * I[t, r] * (1.0 - G[t, r] * G[t, r])
                dc_carry[r] = dc[r] * (1.0 - I[t, r])
            _tmatvec(wi, d_in, 2 * d_h, &dZi[t, 0], 0.0, &back_i[0])
            for r in range(d_h):
                dh_carry[r] = dh_carry[r] + back_i[r]
                dc_carry[r] = dc_carry[r] + back_i[d_h + r]
            _tmatvec(wc, d_in, d_h, &dZc[t, 0], 1.0, &dh_carry[0])

    Hp = np.vstack([np.zeros((1, d_h)), H_[:-1]])
    Cp = np.vstack([np.zeros((1, d_h)), C_[:-1]])
    dWi = dZi_.T @ np.hstack([X, Hp, Cp])
    dWc = dZc_.T @ np.hstack([X, Hp])
    dWo = dZo_.T @ np.hstack([X, Hp, Hp if literal else C_])
    dX = dZi_ @ Wi[:, :d_in] + dZc_ @ Wc[:, :d_in] + dZo_ @ Wo[:, :d_in]
    return dX, dWi, dWc, dWo, dZi_.sum(0), dZc_.sum(0), dZo_.sum(0)


def crf_forward_backward(A_, T_):
    cdef double[:, ::1] A = np.ascontiguousarray(A_, dtype=np.float64)
    cdef double[:, ::1] T = np.ascontiguousarray(T_, dtype=np.float64)
    cdef int n = A.shape[0]
    cdef int k = A.shape[1]
    alpha_ = np.empty((n, k))
    beta_ = np.zeros((n, k))
    unary_ = np.empty((n, k))
    pairwise_ = np.empty((max(n - 1, 0), k, k))
    cdef double[:, ::1] alpha = alpha_, beta = beta_, unary = unary_
    cdef double[:, :, ::1] pairwise = pairwise_
    cdef int t, i, j
    cdef double m, s, v, logZ
    with nogil:
        for j in range(k):
            alpha[0, j] = A[0, j]
        for t in range(1, n):
            for j in range(k):
                m = alpha[t - 1, 0] + T[0, j]
                for i in range(1, k):
                    v = alpha[t - 1, i] + T[i, j]
                    if v > m:
                        m = v
                s = 0.0
                for i in range(k):
                    s = s + exp(alpha[t - 1, i] + T[i, j] - m)
                alpha[t, j] = A[t, j] + m + log(s)
        for t in range(n - 2, -1, -1):
            for i in range(k):
                m = T[i, 0] + A[t + 1, 0] + beta[t + 1, 0]
                for j in range(1, k):
                    v = T[i, j] + A[t + 1, j] + beta[t + 1, j]
                    if v > m:
                        m = v
                s = 0.0
                for j in range(k):
                    s = s + exp(T[i, j] + A[t + 1, j] + beta[t + 1, j] - m)
                beta[t, i] = m + log(s)
        m = alpha[n - 1, 0]
        for j in range(1, k):
            if alpha[n - 1, j] > m:
                m = alpha[n - 1, j]
        s = 0.0
        for j in range(k):
            s = s + exp(alpha[n - 1, j] - m)
        logZ = m + log(s)
        for t in range(n):
            for j in range(k):
                unary[t, j] = exp(alpha[t, j] + beta[t, j] - logZ)
        for t in range(1, n):
            for i in range(k):
                for j in range(k):
                    pairwise[t - 1, i, j] = exp(
                        alpha[t - 1, i] + T[i, j] + A[t, j] + beta[t, j] - logZ)
    return logZ, unary_, pairwise_


def crf_viterbi(A_, T_):
    cdef double[:, ::1] A = np.ascontiguousarray(A_, dtype=np.float64)
    cdef double[:, ::1] T = np.ascontiguousarray(T_, dtype=np.float64)
    cdef int n = A.shape[0]
    cdef int k = A.shape[1]
    back_ = np.zeros((n, k), dtype=np.int64)
    path_ = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] back = back_
    cdef cnp.int64_t[::1] path = path_
    cdef double[::1] delta = np.empty(k), nxt = np.empty(k)
    cdef int t, i, j, best
    cdef double m, v
    with nogil:
        for j in range(k):
            delta[j] = A[0, j]
        for t in range(1, n):
            for j in range(k):
                best = 0
                m = delta[0] + T[0, j]
                for i in range(1, k):
                    v = delta[i] + T[i, j]
                    if v > m:
                        m = v
                        best = i
                back[t, j] = best
                nxt[j] = A[t, j] + m
            for j in range(k):
                delta[j] = nxt[j]
        best = 0
        for j in range(1, k):
            if delta[j] > delta[best]:
                best = j
        path[n - 1] = best
        for t in range(n - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_, float(delta[path_[n - 1]])
