"""Coupled input/forget LSTM with peephole terms, and its bidirectional use.

One step computes::

    i_t = sigmoid(Wi [x_t; h_{t-1}; c_{t-1}] + bi)
    c_t = (1 - i_t) * c_{t-1} + i_t * tanh(Wc [x_t; h_{t-1}] + bc)
    o_t = sigmoid(Wo [x_t; h_{t-1}; c_t] + bo)
    h_t = o_t * tanh(c_t)

With ``literal=True`` the third block of the output gate reads ``h_{t-1}``
a second time instead of ``c_t``.  States start at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import sigmoid, xavier_uniform

PARAM_NAMES = ("Wi", "Wc", "Wo", "bi", "bc", "bo")


@dataclass
class LstmParams:
    Wi: np.ndarray
    Wc: np.ndarray
    Wo: np.ndarray
    bi: np.ndarray
    bc: np.ndarray
    bo: np.ndarray

    def __post_init__(self):
        d_h = self.bi.shape[0]
        d_in = self.Wc.shape[1] - d_h
        expect = {
            "Wi": (d_h, d_in + 2 * d_h),
            "Wc": (d_h, d_in + d_h),
            "Wo": (d_h, d_in + 2 * d_h),
            "bi": (d_h,),
            "bc": (d_h,),
            "bo": (d_h,),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def d_h(self) -> int:
        return self.bi.shape[0]

    @property
    def d_in(self) -> int:
        return self.Wc.shape[1] - self.d_h

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_h: int) -> "LstmParams":
        return cls(
            Wi=xavier_uniform(rng, d_h, d_in + 2 * d_h),
            Wc=xavier_uniform(rng, d_h, d_in + d_h),
            Wo=xavier_uniform(rng, d_h, d_in + 2 * d_h),
            bi=np.zeros(d_h),
            bc=np.zeros(d_h),
            bo=np.zeros(d_h),
        )

    @classmethod
    def zeros(cls, d_in: int, d_h: int) -> "LstmParams":
        return cls(
            np.zeros((d_h, d_in + 2 * d_h)), np.zeros((d_h, d_in + d_h)),
            np.zeros((d_h, d_in + 2 * d_h)), np.zeros(d_h), np.zeros(d_h), np.zeros(d_h),
        )

    @classmethod
    def from_dict(cls, params: dict, prefix: str) -> "LstmParams":
        return cls(*(params[f"{prefix}.{n}"] for n in PARAM_NAMES))

    def to_dict(self, prefix: str) -> dict:
        return {f"{prefix}.{n}": getattr(self, n) for n in PARAM_NAMES}

    @staticmethod
    def size(d_in: int, d_h: int) -> int:
        return d_h * (d_in + 2 * d_h) * 2 + d_h * (d_in + d_h) + 3 * d_h


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class LstmCache:
    """Everything the backward pass needs, rows in processing order."""
    X: np.ndarray
    H: np.ndarray
    C: np.ndarray
    I: np.ndarray
    G: np.ndarray
    O: np.ndarray
    literal: bool


def lstm_step(x, prev: LstmState, params: LstmParams, literal: bool = False) -> LstmState:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.d_in,) or prev.h.shape != (params.d_h,) or prev.c.shape != (params.d_h,):
        raise ValueError("input or state dimension does not match the parameters")
    i = sigmoid(params.Wi @ np.concatenate([x, prev.h, prev.c]) + params.bi)
    g = np.tanh(params.Wc @ np.concatenate([x, prev.h]) + params.bc)
    c = (1.0 - i) * prev.c + i * g
    third = prev.h if literal else c
    o = sigmoid(params.Wo @ np.concatenate([x, prev.h, third]) + params.bo)
    return LstmState(o * np.tanh(c), c)


def forward(X: np.ndarray, params: LstmParams, literal: bool = False) -> LstmCache:
    """Run the kernel over the rows of ``X`` in order."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d_in:
        raise ValueError(f"input has shape {X.shape}, expected (n, {params.d_in})")
    H, C, I, G, O = kernels.lstm_forward(
        X, params.Wi, params.Wc, params.Wo, params.bi, params.bc, params.bo, literal
    )
    return LstmCache(X, H, C, I, G, O, literal)


def backward(cache: LstmCache, params: LstmParams, dH: np.ndarray):
    """Gradients for upstream ``dH`` on the hidden states of ``cache``.

    Returns ``(dX, grads)`` where ``grads`` maps Wi..bo to arrays.
    """
    dX, dWi, dWc, dWo, dbi, dbc, dbo = kernels.lstm_backward(
        cache.X, cache.H, cache.C, cache.I, cache.G, cache.O,
        params.Wi, params.Wc, params.Wo, cache.literal, np.ascontiguousarray(dH),
    )
    return dX, dict(Wi=dWi, Wc=dWc, Wo=dWo, bi=dbi, bc=dbc, bo=dbo)


def run_sequence(xs, params: LstmParams, direction: str = "forward", literal: bool = False) -> list[LstmState]:
    """States for every element, reported in the original element order."""
    if len(xs) == 0:
        raise ValueError("empty input sequence")
    X = np.vstack([np.asarray(x, dtype=np.float64) for x in xs])
    if direction == "forward":
        cache = forward(X, params, literal)
        order = range(len(xs))
    elif direction == "backward":
        cache = forward(X[::-1], params, literal)
        order = range(len(xs) - 1, -1, -1)
    else:
        raise ValueError(f"direction must be forward or backward, not {direction!r}")
    return [LstmState(cache.H[j].copy(), cache.C[j].copy()) for j in order]


def bilstm_outputs(xs, fwd: LstmParams, bwd: LstmParams, mode: str = "per-element", literal: bool = False):
    """Concatenated forward/backward hidden states.

    ``per-element`` gives one ``2*d_h`` vector per input; ``summary`` gives
    the final forward state joined with the final backward state (the one
    computed after reading the first element).
    """
    f = run_sequence(xs, fwd, "forward", literal)
    b = run_sequence(xs, bwd, "backward", literal)
    if mode == "per-element":
        return [np.concatenate([fs.h, bs.h]) for fs, bs in zip(f, b)]
    if mode == "summary":
        return np.concatenate([f[-1].h, b[0].h])
    raise ValueError(f"mode must be per-element or summary, not {mode!r}")


@dataclass
class BatchCache:
    X: np.ndarray  # (L, B, d_in), time-major, rows right-padded
    H: np.ndarray
    C: np.ndarray
    I: np.ndarray
    G: np.ndarray
    O: np.ndarray
    literal: bool


def _blocks(params: LstmParams):
    d, h = params.d_in, params.d_h
    Wi, Wc, Wo = params.Wi, params.Wc, params.Wo
    return (Wi[:, :d], Wi[:, d:d + h], Wi[:, d + h:],
            Wc[:, :d], Wc[:, d:],
            Wo[:, :d], Wo[:, d:d + h], Wo[:, d + h:])


def forward_batch(X: np.ndarray, params: LstmParams, literal: bool = False) -> BatchCache:
    """Run ``B`` sequences at once; ``X`` is ``(L, B, d_in)``.

    Shorter sequences must be padded at the end: the state of row ``b`` at
    step ``t`` depends only on its inputs up to ``t``, so padding never
    leaks into the states at or before a row's true last step.
    """
    X = np.asarray(X, dtype=np.float64)
    L, B, _ = X.shape
    h = params.d_h
    Wix, Wih, Wic, Wcx, Wch, Wox, Woh, Wo3 = _blocks(params)
    Pi = X @ Wix.T + params.bi
    Pc = X @ Wcx.T + params.bc
    Po = X @ Wox.T + params.bo
    H = np.empty((L, B, h)); C = np.empty((L, B, h))
    I = np.empty((L, B, h)); G = np.empty((L, B, h)); O = np.empty((L, B, h))
    hp = np.zeros((B, h)); cp = np.zeros((B, h))
    for t in range(L):
        i = sigmoid(Pi[t] + hp @ Wih.T + cp @ Wic.T)
        g = np.tanh(Pc[t] + hp @ Wch.T)
        c = (1.0 - i) * cp + i * g
        o = sigmoid(Po[t] + hp @ Woh.T + (hp if literal else c) @ Wo3.T)
        hp = o * np.tanh(c)
        cp = c
        H[t], C[t], I[t], G[t], O[t] = hp, c, i, g, o
    return BatchCache(X, H, C, I, G, O, literal)


def backward_batch(cache: BatchCache, params: LstmParams, dH: np.ndarray):
    """Batched counterpart of :func:`backward`; ``dH`` is ``(L, B, d_h)``."""
    X, H, C, I, G, O, literal = cache.X, cache.H, cache.C, cache.I, cache.G, cache.O, cache.literal
    L, B, d = X.shape
    h = params.d_h
    Wix, Wih, Wic, Wcx, Wch, Wox, Woh, Wo3 = _blocks(params)
    dZi = np.empty((L, B, h)); dZg = np.empty((L, B, h)); dZo = np.empty((L, B, h))
    dh_next = np.zeros((B, h)); dc_next = np.zeros((B, h))
    zeros = np.zeros((B, h))
    for t in range(L - 1, -1, -1):
        cp = C[t - 1] if t else zeros
        hp = H[t - 1] if t else zeros
        i, g, o, c = I[t], G[t], O[t], C[t]
        dh = dH[t] + dh_next
        tc = np.tanh(c)
        dzo = dh * tc * o * (1.0 - o)
        dc = dc_next + dh * o * (1.0 - tc * tc)
        if not literal:
            dc = dc + dzo @ Wo3
        dzi = dc * (g - cp) * i * (1.0 - i)
        dzg = dc * i * (1.0 - g * g)
        dc_next = dc * (1.0 - i) + dzi @ Wic
        dh_next = dzi @ Wih + dzg @ Wch + dzo @ Woh
        if literal:
            dh_next = dh_next + dzo @ Wo3
        dZi[t], dZg[t], dZo[t] = dzi, dzg, dzo
    Hp = np.concatenate([np.zeros((1, B, h)), H[:-1]])
    Cp = np.concatenate([np.zeros((1, B, h)), C[:-1]])
    third = Hp if literal else C
    Zi, Zg, Zo = (z.reshape(L * B, h) for z in (dZi, dZg, dZo))
    Xf, Hf = X.reshape(L * B, d), Hp.reshape(L * B, h)
    grads = dict(
        Wi=Zi.T @ np.hstack([Xf, Hf, Cp.reshape(L * B, h)]),
        Wc=Zg.T @ np.hstack([Xf, Hf]),
        Wo=Zo.T @ np.hstack([Xf, Hf, third.reshape(L * B, h)]),
        bi=Zi.sum(axis=0), bc=Zg.sum(axis=0), bo=Zo.sum(axis=0),
    )
    dX = dZi @ Wix + dZg @ Wcx + dZo @ Wox
    return dX, grads
