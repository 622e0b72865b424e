"""Spectral reports and the elastic-limit drift table."""

import numpy as np
import pytest

from grainbath.kernels import calibrate_carleman
from grainbath.grid import build_grid
from grainbath.operators import assemble_L, assemble_L_alpha
from grainbath.spectral import alpha_drift, spectral_report
from grainbath.steady import steady_deterministic


@pytest.fixture(scope="module")
def bath_report(bath, constants, grid48):
    op = assemble_L(grid48, constants)
    return spectral_report(op, rng=np.random.default_rng(5))


def test_bath_gap_reference(bath_report):
    # spectral gap of the bath scattering generator, stable in n
    assert bath_report.gap == pytest.approx(1.3070, abs=3e-3)


def test_bath_gap_grid_stability(bath, constants):
    grid = build_grid(96, bath)
    rep = spectral_report(assemble_L(grid, constants),
                          rng=np.random.default_rng(5), n_vectors=5)
    assert abs(rep.gap - 1.3070) < 3e-3


def test_zero_mode_is_clean(bath_report):
    assert bath_report.lambda0 < 1e-10
    assert bath_report.zero_mode_residual < 1e-8
    assert bath_report.projection_agreement < 1e-6
    # zero mode is a positive density with unit mass
    assert np.all(bath_report.zero_mode > -1e-12)


def test_spectrum_strictly_stable(bath_report):
    assert "unstable_spectrum" not in bath_report.flags
    assert "defective_warning" not in bath_report.flags
    assert bath_report.flags.get("expm_check", 0.0) < 1e-8


def test_semigroup_decay_matches_gap(bath_report):
    mu = bath_report.decay_fit["mu_hat"]
    assert 0.8 * bath_report.gap <= mu <= 1.1 * bath_report.gap
    assert bath_report.decay_fit["mass_drift_max"] < 1e-8


def test_elastic_linearization_gap(bath, constants, grid48):
    calibrate_carleman(constants, 1.0, bath=bath)
    op = assemble_L_alpha(grid48, bath, 1.0, constants)
    rep = spectral_report(op, rng=np.random.default_rng(7))
    assert rep.gap == pytest.approx(1.44, abs=0.03)
    mu = rep.decay_fit["mu_hat"]
    assert 0.8 * rep.gap <= mu <= 1.1 * rep.gap


def test_alpha_drift_monotone(bath, constants, grid48):
    for a in (0.9, 0.95, 1.0):
        calibrate_carleman(constants, a, bath=bath)
    states = {1.0: bath}
    for a in (0.9, 0.95):
        states[a] = steady_deterministic(grid48, a, constants,
                                         sandwich=False).estimate
    table = alpha_drift(grid48, [0.9, 0.95, 1.0], states, constants)
    rows = {row["alpha"]: row for row in table.rows}
    assert rows[1.0]["op_drift"] == 0.0
    assert rows[1.0]["resolvent_drift"] == 0.0
    assert rows[0.9]["op_drift"] > rows[0.95]["op_drift"] > 0
    assert rows[0.9]["resolvent_drift"] > rows[0.95]["resolvent_drift"] > 0
    assert table.spearman["op_drift"] < -0.9
    assert table.spearman["resolvent_drift"] < -0.9
    # the conservative assembly pins the zero eigenvalue at the floor
    assert table.flags.get("lambda0_at_floor")
    assert not any(k.endswith("_non_monotone") for k in table.flags)
    # gaps stay comparable to the elastic one near alpha = 1
    assert rows[0.95]["gap"] >= 0.8 * rows[1.0]["gap"]


def test_alpha_drift_needs_reference(bath, constants, grid48):
    with pytest.raises(ValueError):
        alpha_drift(grid48, [0.9, 0.95], {0.9: bath, 0.95: bath}, constants)
    with pytest.raises(ValueError):
        alpha_drift(grid48, [0.9, 1.0], {1.0: bath}, constants)
