import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deid.numerics import (embedding_uniform, grad_check, logsumexp, make_rng, sigmoid, softmax,
                           tanh, xavier_uniform)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


def test_sigmoid_and_tanh_at_zero():
    assert sigmoid(0.0) == 0.5
    assert tanh(0.0) == 0.0


@given(vectors)
def test_sigmoid_symmetry_and_range(v):
    s = sigmoid(v)
    np.testing.assert_allclose(sigmoid(-v), 1.0 - s, atol=1e-15)
    assert np.all((s >= 0) & (s <= 1))
    moderate = np.abs(v) < 30
    assert np.all((s[moderate] > 0) & (s[moderate] < 1))
    t = tanh(v)
    assert np.all(np.abs(t) <= 1)


def test_sigmoid_overflow_safe():
    with np.errstate(all="raise"):
        out = sigmoid(np.array([-1e3, 1e3]))
    assert out[0] == 0.0 and out[1] == 1.0


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    np.testing.assert_allclose(softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    with np.errstate(all="raise"):
        np.testing.assert_allclose(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        softmax(np.array([]))
    with pytest.raises(ValueError):
        logsumexp(np.array([]))


@given(vectors, st.floats(-100, 100))
def test_softmax_properties(v, c):
    p = softmax(v)
    assert np.all(p > 0) or np.any(v - v.max() < -700)
    assert abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(softmax(v + c), p, atol=1e-12)
    np.testing.assert_allclose(p, np.exp(v - logsumexp(v)), atol=1e-12)


def test_logsumexp_examples():
    assert logsumexp(np.array([3.25])) == 3.25
    assert abs(logsumexp(np.array([0.0, 0.0])) - math.log(2)) < 1e-15
    assert abs(logsumexp(np.array([1000.0, 999.0])) - (1000 + math.log1p(math.exp(-1)))) < 1e-12


@given(vectors)
def test_logsumexp_bounds(v):
    r = logsumexp(v)
    assert v.max() - 1e-12 <= r <= v.max() + math.log(v.size) + 1e-12


def test_logsumexp_axis():
    m = np.array([[0.0, 0.0], [1.0, 2.0]])
    np.testing.assert_allclose(logsumexp(m, axis=1), [math.log(2), 2 + math.log1p(math.exp(-1))])


def test_rng_determinism():
    assert np.array_equal(make_rng(5).random(10), make_rng(5).random(10))
    assert not np.array_equal(make_rng(5).random(10), make_rng(6).random(10))


def test_init_ranges():
    rng = make_rng(0)
    w = xavier_uniform(rng, 30, 70)
    assert np.abs(w).max() <= math.sqrt(6 / 100)
    e = embedding_uniform(rng, 50, 8)
    assert np.abs(e).max() <= 0.05


def test_grad_check_quadratic():
    theta = make_rng(1).normal(size=7)
    assert grad_check(lambda t: (float(t @ t), 2 * t), theta) < 1e-9


def test_grad_check_detects_wrong_gradient():
    theta = make_rng(2).normal(size=5)
    err = grad_check(lambda t: (float(t @ t), 4 * t), theta)
    assert abs(err - 1 / 3) < 1e-6


def test_grad_check_rejects_non_finite():
    with pytest.raises(ValueError):
        grad_check(lambda t: (float("nan"), t), np.ones(2))
