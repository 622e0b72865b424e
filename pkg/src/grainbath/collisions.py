"""Hard-sphere pair collisions with constant restitution.

Velocities are 3-vectors (numpy arrays); every routine broadcasts over a
leading batch axis, so ``v`` may be shaped ``(3,)`` or ``(m, 3)``.

A collision between particles at ``v`` and ``w`` with impact direction
``sigma`` on the unit sphere produces

    v' = v + kappa * (|q| sigma - q),    w' = w - kappa * (|q| sigma - q),

with ``q = v - w`` and ``kappa = (1 + alpha) / 4``.  ``alpha = 1`` is the
elastic case; ``alpha < 1`` dissipates kinetic energy while conserving
momentum.  Collisions against a thermal-bath particle are elastic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RestitutionParams:
    """Restitution coefficient alpha in (0, 1] and derived collision constants."""

    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    @property
    def kappa(self) -> float:
        """Impulse prefactor (1 + alpha) / 4 of the pair transform."""
        return 0.25 * (1.0 + self.alpha)

    @property
    def mu(self) -> float:
        """Inelasticity parameter 2 (1 - alpha) / (1 + alpha); 0 when elastic."""
        return 2.0 * (1.0 - self.alpha) / (1.0 + self.alpha)

    @property
    def energy_factor(self) -> float:
        """(1 - alpha^2) / 4: prefactor of the per-collision energy loss."""
        return 0.25 * (1.0 - self.alpha * self.alpha)


def _norm(x):
    return np.linalg.norm(x, axis=-1)


def inelastic_transform(v: np.ndarray, w: np.ndarray, sigma: np.ndarray,
                        alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Post-collision velocities (v', w') of an inelastic hard-sphere pair."""
    kappa = 0.25 * (1.0 + alpha)
    q = np.asarray(v, float) - np.asarray(w, float)
    imp = kappa * (_norm(q)[..., None] * np.asarray(sigma, float) - q)
    return v + imp, w - imp


def elastic_bath_transform(v: np.ndarray, w: np.ndarray,
                           sigma: np.ndarray) -> np.ndarray:
    """Post-collision velocity of a particle hitting a bath particle at w.

    Bath collisions are elastic: v* = v + (|q| sigma - q) / 2.
    """
    q = np.asarray(v, float) - np.asarray(w, float)
    return v + 0.5 * (_norm(q)[..., None] * np.asarray(sigma, float) - q)


def energy_loss(v: np.ndarray, w: np.ndarray, sigma: np.ndarray,
                alpha: float) -> np.ndarray:
    """Change of |v'|^2 + |w'|^2 - |v|^2 - |w|^2 in one collision.

    Closed form: -((1 - alpha^2) / 4) |q| (|q| - q . sigma), which is <= 0,
    and identically 0 when alpha = 1.
    """
    q = np.asarray(v, float) - np.asarray(w, float)
    nq = _norm(q)
    qs = np.einsum("...i,...i->...", q, np.asarray(sigma, float))
    return -0.25 * (1.0 - alpha * alpha) * nq * (nq - qs)


def sphere_quadrature(n_polar: int = 16, n_azimuth: int = 32):
    """Quadrature nodes and weights for the average (1/4pi) int_{S^2} dsigma.

    Product rule: Gauss-Legendre in the polar cosine, trapezoid in azimuth
    (the trapezoid rule is exact for trigonometric polynomials up to degree
    n_azimuth - 1, so the rule is exact for polynomial integrands of degree
    min(2 n_polar - 1, n_azimuth - 1)).  Weights sum to 1.
    """
    t, tw = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    st = np.sqrt(1.0 - t * t)
    nodes = np.stack([
        np.outer(st, np.cos(phi)).ravel(),
        np.outer(st, np.sin(phi)).ravel(),
        np.outer(t, np.ones(n_azimuth)).ravel(),
    ], axis=-1)
    weights = np.outer(tw, np.full(n_azimuth, 1.0 / n_azimuth)).ravel() / 2.0
    return nodes, weights


def angular_average_A(psi, v: np.ndarray, w: np.ndarray, alpha: float,
                      n_polar: int = 16, n_azimuth: int = 32) -> float:
    """Spherical average of the collisional increment of a test function.

    Returns (1/4pi) int_{S^2} [psi(v') + psi(w') - psi(v) - psi(w)] dsigma
    for one pair (v, w).  ``psi`` maps (..., 3) arrays to (...,) values.

    For psi = |.|^2 the closed form is -((1 - alpha^2)/4) |v - w|^2.
    """
    sig, sw = sphere_quadrature(n_polar, n_azimuth)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    vp, wp = inelastic_transform(v[None, :], w[None, :], sig, alpha)
    inc = psi(vp) + psi(wp) - psi(v[None, :]) - psi(w[None, :])
    return float(np.sum(sw * inc))


def angular_average_bath(psi, v: np.ndarray, w: np.ndarray,
                         n_polar: int = 16, n_azimuth: int = 32) -> float:
    """Spherical average (1/4pi) int [psi(v*) - psi(v)] dsigma for one bath pair."""
    sig, sw = sphere_quadrature(n_polar, n_azimuth)
    v = np.asarray(v, float)
    vs = elastic_bath_transform(v[None, :], np.asarray(w, float)[None, :], sig)
    inc = psi(vs) - psi(v[None, :])
    return float(np.sum(sw * inc))
