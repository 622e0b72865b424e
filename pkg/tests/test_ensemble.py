"""Particle ensembles: initialization, moments, exponential moments."""

import numpy as np
import pytest
from scipy import integrate

from grainbath.ensemble import Ensemble, init_ensemble, random_directions


def test_maxwellian_init_moments(rng):
    ens = init_ensemble("maxwellian", 200000, rng, theta=1.0)
    assert ens.n == 200000
    assert np.max(np.abs(ens.velocities.mean(axis=0))) < 0.01
    assert abs(ens.kinetic_energy() - 3.0) < 0.03


def test_maxwellian_init_respects_theta(rng):
    ens = init_ensemble("maxwellian", 100000, rng, theta=2.0)
    assert abs(ens.kinetic_energy() - 6.0) < 0.1


def test_shell_init(rng):
    ens = init_ensemble("shell", 5000, rng, r0=2.0)
    assert np.max(np.abs(ens.speeds() - 2.0)) < 1e-12
    assert ens.kinetic_energy() == pytest.approx(4.0)


def test_mixture_init(rng):
    ens = init_ensemble("mixture", 200000, rng, thetas=(1.0, 4.0))
    assert abs(ens.kinetic_energy() - 7.5) < 0.1


def test_unknown_kind_raises(rng):
    with pytest.raises(ValueError):
        init_ensemble("beam", 10, rng)


def test_init_deterministic():
    a = init_ensemble("maxwellian", 1000, np.random.default_rng(7), theta=1.0)
    b = init_ensemble("maxwellian", 1000, np.random.default_rng(7), theta=1.0)
    assert np.array_equal(a.velocities, b.velocities)


def test_exp_moment_against_quadrature(rng):
    theta = 1.0
    ens = init_ensemble("maxwellian", 400000, rng, theta=theta)
    a = 0.5
    val, reliable = ens.exp_moment(a)
    assert reliable
    chi = lambda r: (np.sqrt(2.0 / np.pi) * r * r * theta ** -1.5
                     * np.exp(-r * r / (2.0 * theta)))
    oracle, _ = integrate.quad(lambda r: np.exp(a * r) * chi(r), 0, 50, limit=300)
    assert abs(val - oracle) / oracle < 0.01


def test_exp_moment_flags_tail_domination(rng):
    # at a large rate the sum is dominated by the extreme order statistic
    # and the estimate must be flagged unreliable
    ens = init_ensemble("maxwellian", 2000, rng, theta=1.0)
    _, reliable = ens.exp_moment(12.0)
    assert not reliable


def test_speeds_match_velocities(rng):
    ens = init_ensemble("maxwellian", 100, rng, theta=1.0)
    assert np.allclose(ens.speeds(), np.linalg.norm(ens.velocities, axis=1))


def test_moments_energy_consistency(rng):
    ens = init_ensemble("maxwellian", 5000, rng, theta=1.0)
    m = ens.moments()
    assert m["energy"] == pytest.approx(ens.kinetic_energy())


def test_random_directions_statistics(rng):
    d = random_directions(rng, 100000)
    assert np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(d.mean(axis=0))) < 0.01
    cov = d.T @ d / len(d)
    assert np.max(np.abs(cov - np.eye(3) / 3.0)) < 0.01
