"""The thermal bath: a fixed Maxwellian background and its collision frequency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf


@dataclass(frozen=True)
class BathMaxwellian:
    """Background Maxwellian M(v) = (2 pi theta)^(-3/2) exp(-|v - u0|^2 / (2 theta))."""

    theta: float = 1.0
    u0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError(f"bath temperature must be positive, got {self.theta}")
        object.__setattr__(self, "u0", np.asarray(self.u0, float).reshape(3))

    @property
    def centered(self) -> bool:
        return bool(np.all(self.u0 == 0.0))

    def density(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, float)
        d2 = np.sum((v - self.u0) ** 2, axis=-1)
        return (2.0 * np.pi * self.theta) ** -1.5 * np.exp(-d2 / (2.0 * self.theta))

    def radial_density(self, r: np.ndarray) -> np.ndarray:
        # value of the centered Maxwellian at speed r; requires u0 = 0
        r = np.asarray(r, float)
        return (2.0 * np.pi * self.theta) ** -1.5 * np.exp(-r * r / (2.0 * self.theta))

    def radial_tail(self, x: np.ndarray) -> np.ndarray:
        """2 pi int_x^inf M(t) t dt = 2 pi theta M(x); requires u0 = 0.

        This is the plane integral of M over any plane at distance x from
        the origin, which is what the Carleman gain kernel consumes.
        """
        return 2.0 * np.pi * self.theta * self.radial_density(x)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.u0 + np.sqrt(self.theta) * rng.normal(size=(n, 3))

    def bin_masses(self, edges: np.ndarray) -> np.ndarray:
        """Exact probability mass of speed shells [e_k, e_{k+1}) around u0.

        The speed |v - u0| has the 3-dof chi law scaled by sqrt(theta):
        P(|v - u0| <= R) = erf(x / sqrt(2)) - sqrt(2/pi) x exp(-x^2/2),
        x = R / sqrt(theta).
        """
        x = np.asarray(edges, float) / np.sqrt(self.theta)
        cdf = erf(x / np.sqrt(2.0)) - np.sqrt(2.0 / np.pi) * x * np.exp(-0.5 * x * x)
        return np.diff(cdf)


def maxwellian_density(v: np.ndarray, bath: BathMaxwellian) -> np.ndarray:
    return bath.density(v)


def collision_frequency_closed_form(v: np.ndarray, bath: BathMaxwellian) -> np.ndarray:
    """Sigma(v) = E|v - W|, W ~ bath, in closed form.

    With r = |v - u0| and theta the bath temperature:
    Sigma = sqrt(2 theta / pi) exp(-r^2 / 2 theta)
            + (r + theta / r) erf(r / sqrt(2 theta)),
    and Sigma(u0) = sqrt(8 theta / pi).
    """
    v = np.asarray(v, float)
    r = np.linalg.norm(np.atleast_2d(v) - bath.u0, axis=-1)
    th = bath.theta
    safe = np.where(r < 1e-300, 1.0, r)
    out = (np.sqrt(2.0 * th / np.pi) * np.exp(-r * r / (2.0 * th))
           + (r + th / safe) * erf(r / np.sqrt(2.0 * th)))
    out = np.where(r < 1e-12, np.sqrt(8.0 * th / np.pi), out)
    return out if v.ndim > 1 else float(out[0])


def pair_speed_shell_average(r, rho):
    """Average of |v - w| over independent uniform directions at speeds r, rho.

    (1/2) int_{-1}^{1} sqrt(r^2 + rho^2 - 2 r rho t) dt
      = ((r + rho)^3 - |r - rho|^3) / (6 r rho),
    extended continuously to r = 0 or rho = 0.
    """
    r = np.asarray(r, float)
    rho = np.asarray(rho, float)
    denom = 6.0 * r * rho
    num = (r + rho) ** 3 - np.abs(r - rho) ** 3
    small = denom < 1e-280
    out = np.where(small, np.maximum(r, rho) + 0.0, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(small, np.maximum(r, rho), num / np.where(small, 1.0, denom))
    return out


def collision_frequency_bath(v: np.ndarray, bath: BathMaxwellian,
                             n_radial: int = 128, r_max: float | None = None):
    """Sigma(v) = int M(w) |v - w| dw by radial quadrature.

    The spherical average of |v - w| over the direction of w has a closed
    form (pair_speed_shell_average), leaving a 1d radial integral that
    Gauss-Legendre handles; cross-checked against the erf closed form.
    """
    v = np.atleast_2d(np.asarray(v, float))
    z = np.linalg.norm(v - bath.u0, axis=-1)
    if r_max is None:
        r_max = 8.0 * np.sqrt(bath.theta)
    x, gw = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * r_max * (x + 1.0)
    w = 0.5 * r_max * gw * 4.0 * np.pi * rho ** 2 * bath.radial_density(rho)
    avg = pair_speed_shell_average(z[:, None], rho[None, :])
    out = avg @ w
    return out if out.size > 1 else float(out[0])


def collision_frequency_state(v: np.ndarray, estimate) -> np.ndarray:
    """sigma_F(v) = int F(w) |v - w| dw for an isotropic density estimate.

    ``estimate`` must expose radial nodes/weights/values (see
    grainbath.density.DensityEstimate.radial_rule); isotropy reduces the
    integral to the shell average of |v - w|.
    """
    v = np.atleast_2d(np.asarray(v, float))
    z = np.linalg.norm(v, axis=-1)
    r, w, f = estimate.radial_rule()
    avg = pair_speed_shell_average(z[:, None], r[None, :])
    out = avg @ (w * f)
    return out if out.size > 1 else float(out[0])
