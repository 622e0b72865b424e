"""Bath density, collision frequencies, and kernel calibration."""

import numpy as np
from scipy import integrate

from grainbath.bath import (BathMaxwellian, collision_frequency_bath,
                            collision_frequency_closed_form,
                            collision_frequency_state, maxwellian_density,
                            pair_speed_shell_average)
from grainbath.density import DensityEstimate
from grainbath.kernels import (calibrate_C0, calibrate_carleman, carleman_mass,
                               gain_kernel_K1, gain_kernel_upper,
                               scattering_kernel_k, scattering_kernel_mass)


class _BathTail:
    """Closed-form plane-integral oracle for a centered Maxwellian."""

    def __init__(self, bath):
        self.bath = bath

    def radial_tail(self, x):
        t = self.bath.theta
        return float(2.0 * np.pi * t
                     * self.bath.radial_density(np.atleast_1d(float(x)))[0])


def test_maxwellian_density_normalized(bath):
    rad = lambda r: maxwellian_density(
        np.column_stack([r, np.zeros_like(r), np.zeros_like(r)]), bath)
    mass, _ = integrate.quad(lambda r: 4 * np.pi * r * r * rad(np.array([r]))[0],
                             0, 40, limit=200)
    assert abs(mass - 1.0) < 1e-10
    second, _ = integrate.quad(
        lambda r: 4 * np.pi * r ** 4 * rad(np.array([r]))[0], 0, 40, limit=200)
    assert abs(second - 3.0 * bath.theta) < 1e-8


def test_collision_frequency_zero_speed(bath):
    v0 = np.zeros((1, 3))
    got = collision_frequency_closed_form(v0, bath)[0]
    assert abs(got - np.sqrt(8.0 * bath.theta / np.pi)) < 1e-12


def test_collision_frequency_quadrature_matches_closed_form(bath, rng):
    v = rng.normal(scale=1.5, size=(40, 3))
    quad = collision_frequency_bath(v, bath, n_radial=400)
    closed = collision_frequency_closed_form(v, bath)
    assert np.max(np.abs(quad - closed)) < 1e-8


def test_collision_frequency_large_speed_asymptote(bath):
    v = np.array([[30.0, 0.0, 0.0]])
    got = collision_frequency_closed_form(v, bath)[0]
    # sigma(v) = |v| + theta/|v| up to exponentially small terms
    assert abs(got - (30.0 + bath.theta / 30.0)) < 1e-6


def test_collision_frequency_shifted_bath():
    shifted = BathMaxwellian(theta=0.7, u0=np.array([1.0, -2.0, 0.5]))
    v = shifted.u0[None, :]
    got = collision_frequency_closed_form(v, shifted)[0]
    assert abs(got - np.sqrt(8.0 * 0.7 / np.pi)) < 1e-12


def test_collision_frequency_state_matches_bath(bath, rng):
    # state route evaluated on an analytically binned Maxwellian
    edges = np.linspace(0.0, 10.0, 401)
    est = DensityEstimate.from_counts(edges, bath.bin_masses(edges), n_source=0)
    v = rng.normal(size=(25, 3))
    got = collision_frequency_state(v, est)
    closed = collision_frequency_closed_form(v, bath)
    assert np.max(np.abs(got - closed)) < 5e-4


def test_pair_speed_shell_average_formula(rng):
    # independent oracle: Monte Carlo over the two shell directions
    d1 = rng.normal(size=(200000, 3))
    d1 /= np.linalg.norm(d1, axis=1, keepdims=True)
    d2 = rng.normal(size=(200000, 3))
    d2 /= np.linalg.norm(d2, axis=1, keepdims=True)
    for r, rho in [(1.0, 1.0), (0.3, 2.0), (4.0, 0.1)]:
        mc = np.linalg.norm(r * d1 - rho * d2, axis=1).mean()
        got = pair_speed_shell_average(np.array([r]), np.array([rho]))[0]
        assert abs(got - mc) < 5e-3
    assert abs(pair_speed_shell_average(np.array([2.0]), np.array([0.0]))[0]
               - 2.0) < 1e-12
    assert abs(pair_speed_shell_average(np.array([2.0]), np.array([1e-6]))[0]
               - 2.0) < 1e-6
    a = pair_speed_shell_average(np.array([1.3]), np.array([0.4]))[0]
    b = pair_speed_shell_average(np.array([0.4]), np.array([1.3]))[0]
    assert abs(a - b) < 1e-12


def test_detailed_balance(bath, constants, rng):
    v = rng.normal(scale=1.4, size=(1000, 3))
    w = rng.normal(scale=0.9, size=(1000, 3))
    lhs = scattering_kernel_k(v, w, bath, constants) * maxwellian_density(w, bath)
    rhs = scattering_kernel_k(w, v, bath, constants) * maxwellian_density(v, bath)
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    ok = scale > 0
    assert np.max(np.abs(lhs - rhs)[ok] / scale[ok]) < 1e-10


def test_calibrate_C0(bath):
    consts, report = calibrate_C0(bath)
    assert len(report.probes) >= 3
    assert report.spread <= 1e-6
    assert abs(consts.C0 - 1.0 / (np.pi * np.sqrt(2.0 * np.pi * bath.theta))) < 1e-9


def test_calibrate_C0_scales_with_theta():
    cold = BathMaxwellian(theta=0.25)
    consts, _ = calibrate_C0(cold)
    assert abs(consts.C0 - 1.0 / (np.pi * np.sqrt(2.0 * np.pi * 0.25))) < 1e-9


def test_scattering_mass_is_collision_frequency(bath, constants, rng):
    for v in rng.normal(size=(10, 3)) * 1.2:
        mass = scattering_kernel_mass(v, bath, C0=constants.C0)
        closed = float(collision_frequency_closed_form(v[None], bath)[0])
        assert abs(mass - closed) / closed < 1e-6


def test_calibrate_carleman(bath, constants):
    for alpha in (0.6, 0.9, 0.99):
        report = calibrate_carleman(constants, alpha, bath=bath)
        assert report.spread <= report.tol
        expect = 4.0 / (np.pi * (1.0 + alpha) ** 2)
        assert abs(constants.carleman_value(alpha) - expect) < 1e-6


def test_carleman_mass_matches_pair_frequency(bath, constants, rng):
    # with the calibrated constant the arrival-integrated gain kernel
    # reproduces the partner collision frequency
    alpha = 0.8
    calibrate_carleman(constants, alpha, bath=bath)
    C = constants.carleman_value(alpha)
    for z in (0.0, 0.7, 2.1):
        w = np.array([z, 0.0, 0.0])
        mass = carleman_mass(w, alpha, bath, C=C)
        closed = float(collision_frequency_closed_form(w[None], bath)[0])
        assert abs(mass - closed) / closed < 1e-5


def test_gain_kernel_matches_envelope_form(bath, constants, rng):
    # for a Maxwellian background the Carleman plane integral collapses to
    # the Gaussian envelope kernel with C_bar = C_alpha / sqrt(2 pi theta)
    alpha = 0.7
    calibrate_carleman(constants, alpha, bath=bath)
    C = constants.carleman_value(alpha)
    tail = _BathTail(bath)
    v = rng.normal(size=(40, 3))
    w = rng.normal(size=(40, 3)) * 0.8
    c_bar = C / np.sqrt(2.0 * np.pi * bath.theta)
    upper = gain_kernel_upper(v, w, alpha, c_bar, bath.u0, bath.theta)
    for i in range(len(v)):
        k1 = gain_kernel_K1(v[i], w[i], alpha, tail, constants)
        assert abs(k1 - upper[i]) <= 1e-10 * max(upper[i], 1e-12)


def test_gain_kernel_upper_reduces_to_k_at_alpha_one(bath, constants, rng):
    v = rng.normal(size=(50, 3))
    w = rng.normal(size=(50, 3))
    up = gain_kernel_upper(v, w, 1.0, constants.C0, bath.u0, bath.theta)
    k = scattering_kernel_k(v, w, bath, constants)
    assert np.max(np.abs(up - k) / np.maximum(k, 1e-300)) < 1e-12


def test_gain_kernel_quadrature_route_agrees(bath, constants, rng):
    # callable backgrounds go through the polar plane quadrature; it must
    # agree with the exact radial-tail route on the same density
    alpha = 0.9
    calibrate_carleman(constants, alpha, bath=bath)
    tail = _BathTail(bath)
    dens = lambda pts: maxwellian_density(pts, bath)
    for _ in range(5):
        v = rng.normal(size=3)
        w = rng.normal(size=3)
        exact = gain_kernel_K1(v, w, alpha, tail, constants)
        quad = gain_kernel_K1(v, w, alpha, dens, constants, n_s=96, n_phi=48)
        assert abs(quad - exact) <= 1e-6 + 1e-6 * exact


def test_frozen_C0_value(bath):
    consts, _ = calibrate_C0(bath)
    assert abs(consts.C0 - 0.12698727186847933) < 1e-12
