"""Weighted-norm helpers."""

import numpy as np
import pytest

from grainbath.weights import WeightSpec, operator_l1_norm, weighted_l1


def test_weight_spec_defaults():
    spec = WeightSpec()
    assert spec.a == 0.5
    r = np.array([0.0, 1.0, 3.0])
    assert np.allclose(spec.m_inv(r), np.exp(0.5 * r))
    assert np.allclose(spec.bracket(r), np.sqrt(1.0 + r * r))


def test_weight_spec_rejects_negative_rate():
    with pytest.raises(ValueError):
        WeightSpec(a=-0.1)


def test_x_and_y_weights_compose():
    spec = WeightSpec(a=0.7)
    r = np.linspace(0.0, 4.0, 9)
    w = np.full(9, 0.5)
    x = spec.x_weights(r, w)
    y = spec.y_weights(r, w)
    assert np.allclose(x, w * np.exp(0.7 * r))
    assert np.allclose(y, x * np.sqrt(1.0 + r * r))


def test_weighted_l1_basics():
    w = np.array([1.0, 2.0, 0.5])
    vals = np.array([1.0, -3.0, 4.0])
    assert weighted_l1(vals, w) == pytest.approx(1.0 + 6.0 + 2.0)
    assert weighted_l1(np.zeros(3), w) == 0.0


def test_operator_l1_norm_against_bruteforce(rng):
    n = 12
    weights = np.exp(rng.uniform(0.0, 1.0, n))
    mat = rng.normal(size=(n, n))
    got = operator_l1_norm(mat, weights)
    brute = max(
        sum(weights[i] * abs(mat[i, j]) for i in range(n)) / weights[j]
        for j in range(n))
    assert got == pytest.approx(brute, rel=1e-12)
    # consistency: ||A g||_w <= ||A||_w ||g||_w on random vectors
    for _ in range(20):
        g = rng.normal(size=n)
        assert weighted_l1(mat @ g, weights) <= got * weighted_l1(g, weights) * (1 + 1e-12)


def test_operator_norm_of_identity():
    w = np.exp(np.linspace(0.0, 2.0, 8))
    assert operator_l1_norm(np.eye(8), w) == pytest.approx(1.0)
