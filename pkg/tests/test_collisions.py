"""Pointwise collision rules and their conservation identities."""

import numpy as np

from grainbath.collisions import (RestitutionParams, angular_average_A,
                                  angular_average_bath, elastic_bath_transform,
                                  energy_loss, inelastic_transform,
                                  sphere_quadrature)


def _random_tuples(rng, n):
    v = rng.normal(scale=1.3, size=(n, 3))
    w = rng.normal(scale=0.8, size=(n, 3)) + np.array([0.2, -0.1, 0.4])
    sigma = rng.normal(size=(n, 3))
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    return v, w, sigma


def test_momentum_conserved_exactly(rng):
    v, w, sigma = _random_tuples(rng, 10000)
    alpha = rng.uniform(0.0, 1.0, size=10000)
    vp, wp = inelastic_transform(v, w, sigma, alpha[:, None])
    assert np.max(np.abs((vp + wp) - (v + w))) < 1e-12


def test_energy_change_formula(rng):
    v, w, sigma = _random_tuples(rng, 10000)
    alpha = rng.uniform(0.0, 1.0, size=10000)
    vp, wp = inelastic_transform(v, w, sigma, alpha[:, None])
    de = ((vp ** 2).sum(1) + (wp ** 2).sum(1)
          - (v ** 2).sum(1) - (w ** 2).sum(1))
    q = v - w
    qn = np.linalg.norm(q, axis=1)
    expect = -((1.0 - alpha ** 2) / 4.0) * qn * (qn - (q * sigma).sum(1))
    assert np.max(np.abs(de - expect)) < 1e-12
    assert np.max(np.abs(energy_loss(v, w, sigma, alpha) - expect)) < 1e-12


def test_energy_loss_sign_and_elastic_zero(rng):
    v, w, sigma = _random_tuples(rng, 500)
    # inelastic collisions never gain energy, elastic ones never change it
    assert np.all(energy_loss(v, w, sigma, 0.5) <= 1e-14)
    assert np.max(np.abs(energy_loss(v, w, sigma, 1.0))) < 1e-13


def test_elastic_limit_matches_elastic_rule(rng):
    v, w, sigma = _random_tuples(rng, 200)
    vp, wp = inelastic_transform(v, w, sigma, 1.0)
    vs = elastic_bath_transform(v, w, sigma)
    assert np.max(np.abs(vp - vs)) < 1e-13
    de = (vp ** 2).sum(1) + (wp ** 2).sum(1) - (v ** 2).sum(1) - (w ** 2).sum(1)
    assert np.max(np.abs(de)) < 1e-12


def test_restitution_params_kappa():
    p = RestitutionParams(alpha=0.6)
    assert abs(p.kappa - 0.4) < 1e-15


def test_sphere_quadrature_moments():
    sigma, wq = sphere_quadrature(16, 32)
    # normalized measure: mean of 1 is 1, odd moments vanish,
    # second moments give the isotropic third
    assert abs(wq.sum() - 1.0) < 1e-13
    assert np.max(np.abs((wq[:, None] * sigma).sum(0))) < 1e-14
    second = np.einsum("s,si,sj->ij", wq, sigma, sigma)
    assert np.max(np.abs(second - np.eye(3) / 3.0)) < 1e-13


def test_angular_average_pair_energy(rng):
    v, w, _ = _random_tuples(rng, 50)
    psi = lambda x: (x ** 2).sum(axis=-1)
    for alpha in (0.3, 0.8, 1.0):
        for i in range(len(v)):
            got = angular_average_A(psi, v[i], w[i], alpha)
            qn2 = ((v[i] - w[i]) ** 2).sum()
            expect = -((1.0 - alpha ** 2) / 4.0) * qn2
            assert abs(got - expect) < 1e-8


def test_angular_average_mass_and_momentum(rng):
    v, w, _ = _random_tuples(rng, 10)
    ones = lambda x: np.ones(x.shape[:-1])
    for i in range(len(v)):
        assert abs(angular_average_A(ones, v[i], w[i], 0.7)) < 1e-12
        for j in range(3):
            comp = lambda x, j=j: x[..., j]
            assert abs(angular_average_A(comp, v[i], w[i], 0.7)) < 1e-10


def test_angular_average_bath_closed_forms(rng):
    v, w, _ = _random_tuples(rng, 10)
    q = v - w
    psi = lambda x: (x ** 2).sum(axis=-1)
    for i in range(len(v)):
        # drift of each velocity component is -q_j / 2
        for j in range(3):
            comp = lambda x, j=j: x[..., j]
            got = angular_average_bath(comp, v[i], w[i])
            assert abs(got + 0.5 * q[i, j]) < 1e-10
        # energy transfer: <|v*|^2 - |v|^2> = -v.q + |q|^2 / 2
        got = angular_average_bath(psi, v[i], w[i])
        expect = -(v[i] * q[i]).sum() + 0.5 * (q[i] ** 2).sum()
        assert abs(got - expect) < 1e-8


def test_quadrature_refinement_tightens(rng):
    v, w, _ = _random_tuples(rng, 10)
    psi = lambda x: np.exp(-0.3 * (x ** 2).sum(axis=-1))
    err_coarse, err_fine = [], []
    for i in range(len(v)):
        coarse = angular_average_A(psi, v[i], w[i], 0.5, n_polar=6, n_azimuth=12)
        fine = angular_average_A(psi, v[i], w[i], 0.5, n_polar=48, n_azimuth=96)
        finer = angular_average_A(psi, v[i], w[i], 0.5, n_polar=64, n_azimuth=128)
        err_coarse.append(abs(coarse - finer))
        err_fine.append(abs(fine - finer))
    assert max(err_fine) < max(err_coarse) + 1e-14
    assert max(err_fine) < 1e-9
