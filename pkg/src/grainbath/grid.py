"""Radial speed grids for isotropic velocity distributions.

A grid carries Gauss-Legendre nodes r_i on [0, r_max] together with
weights w_i that already include the 4*pi*r^2 shell measure, so that
sum_i w_i * g(r_i) approximates the full three-dimensional integral of
a radial function g(|v|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import BathMaxwellian


@dataclass(frozen=True)
class RadialGrid:
    r: np.ndarray
    w: np.ndarray
    r_max: float

    @property
    def n(self) -> int:
        return int(self.r.size)

    def mass(self, f) -> float:
        return float(self.w @ np.asarray(f, dtype=float))

    def second_moment(self, f) -> float:
        return float(self.w @ (self.r**2 * np.asarray(f, dtype=float)))

    def params(self) -> dict:
        return {"n": self.n, "r_max": float(self.r_max)}


def build_grid(n: int, bath: BathMaxwellian, r_max: float | None = None,
               placement: str = "legendre", mass_tol: float = 1e-8) -> RadialGrid:
    """Build an n-node radial grid and reject it if the bath Maxwellian
    is not integrated to unit mass within mass_tol.

    r_max defaults to 8 thermal speeds, wide enough that the truncated
    Gaussian mass is far below the tolerance.
    """
    if n < 16:
        raise ValueError("need at least 16 radial nodes, got %d" % n)
    if placement != "legendre":
        raise ValueError("unknown node placement %r" % placement)
    theta = bath.theta
    if r_max is None:
        r_max = 8.0 * np.sqrt(theta)
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    x, gw = np.polynomial.legendre.leggauss(int(n))
    r = 0.5 * r_max * (x + 1.0)
    w = 0.5 * r_max * gw * 4.0 * np.pi * r**2
    grid = RadialGrid(r=r, w=w, r_max=float(r_max))
    mass = grid.mass(bath.radial_density(r))
    if abs(mass - 1.0) > mass_tol:
        raise ValueError(
            "grid rejected: bath mass %.3e deviates from 1 beyond %.1e "
            "(n=%d, r_max=%g)" % (mass, mass_tol, n, r_max))
    return grid
