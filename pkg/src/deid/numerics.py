"""Dense math helpers shared by the learned components.

Everything here works on float64 numpy arrays.  Random state is always an
explicit :class:`numpy.random.Generator` so that runs are reproducible from a
single integer seed.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

EMBED_INIT_RANGE = 0.05


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sigmoid(v):
    # tanh form never overflows and matches the compiled kernels exactly
    v = np.asarray(v, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def tanh(v):
    return np.tanh(np.asarray(v, dtype=np.float64))


def logsumexp(v, axis=None):
    """Overflow-safe ``log(sum(exp(v)))``.

    With ``axis=None`` the input must be a nonempty vector and a float is
    returned; otherwise the reduction runs along ``axis``.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("logsumexp of an empty array")
    if axis is None:
        m = v.max()
        if not np.isfinite(m):
            return float(m)
        return float(m + np.log(np.exp(v - m).sum()))
    m = v.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty array")
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def embedding_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, size=(rows, cols))


def grad_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    theta: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central differences.

    ``f(theta)`` must return ``(value, gradient)``.  The result is the largest
    per-coordinate relative error
    ``|g - fd| / max(1e-8, |g| + |fd|)``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.array(theta, dtype=np.float64)
    value, analytic = f(theta.copy())
    if not np.isfinite(value):
        raise ValueError(f"f(theta) is not finite: {value}")
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if analytic.shape != theta.ravel().shape:
        raise ValueError("gradient shape does not match theta")
    flat = theta.ravel()
    worst = 0.0
    for j in range(flat.size):
        saved = flat[j]
        flat[j] = saved + h
        up = f(theta.copy())[0]
        flat[j] = saved - h
        down = f(theta.copy())[0]
        flat[j] = saved
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ValueError(f"non-finite value while perturbing coordinate {j}")
        fd = (up - down) / (2.0 * h)
        err = abs(analytic[j] - fd) / max(1e-8, abs(analytic[j]) + abs(fd))
        worst = max(worst, err)
    return worst
