"""Particle ensembles: initialization and empirical moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


def random_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    """n independent uniform unit vectors in R^3."""
    u = rng.normal(size=(n, 3))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


@dataclass
class Ensemble:
    """A weightless particle ensemble representing a unit-mass density."""

    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, float).reshape(-1, 3)

    @property
    def n(self) -> int:
        return self.velocities.shape[0]

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=1)

    def kinetic_energy(self) -> float:
        """Mean squared speed <|v|^2> (3 theta for a Maxwellian at theta)."""
        return float(np.mean(np.sum(self.velocities ** 2, axis=1)))

    def moments(self) -> dict:
        r2 = np.sum(self.velocities ** 2, axis=1)
        return {
            "n": self.n,
            "time": self.time,
            "mean_velocity": self.velocities.mean(axis=0).tolist(),
            "energy": float(np.mean(r2)),
            "mean_speed": float(np.mean(np.sqrt(r2))),
            "fourth_moment": float(np.mean(r2 * r2)),
        }

    def exp_moment(self, a: float) -> tuple[float, bool]:
        """Monte Carlo estimate of int f exp(a |v|) dv with a tail sentinel.

        Returns (estimate, reliable).  The estimate is flagged unreliable
        when the ten largest particles carry more than half of the sum,
        which is the telltale of an exponential moment the empirical tail
        cannot resolve.
        """
        ar = a * self.speeds()
        log_est = logsumexp(ar) - np.log(self.n)
        top = np.partition(ar, -10)[-10:] if self.n > 10 else ar
        top_share = float(np.exp(logsumexp(top) - logsumexp(ar)))
        return float(np.exp(log_est)), top_share <= 0.5


def init_ensemble(kind: str, n: int, rng: np.random.Generator,
                  **params) -> Ensemble:
    """Build an initial ensemble.

    kind = "maxwellian": isotropic Gaussian, params theta (default 1.0).
    kind = "shell": all speeds equal to r0 (default 1.0), uniform directions.
    kind = "mixture": equal-weight Maxwellian mixture, params thetas
    (default (1.0, 4.0), so <|v|^2> = 7.5).
    """
    if kind == "maxwellian":
        theta = float(params.pop("theta", 1.0))
        if params:
            raise ValueError(f"unknown parameters for maxwellian: {sorted(params)}")
        v = np.sqrt(theta) * rng.normal(size=(n, 3))
    elif kind == "shell":
        r0 = float(params.pop("r0", 1.0))
        if params:
            raise ValueError(f"unknown parameters for shell: {sorted(params)}")
        v = r0 * random_directions(rng, n)
    elif kind == "mixture":
        thetas = params.pop("thetas", (1.0, 4.0))
        if params:
            raise ValueError(f"unknown parameters for mixture: {sorted(params)}")
        comp = rng.integers(0, len(thetas), size=n)
        scale = np.sqrt(np.asarray(thetas, float))[comp]
        v = scale[:, None] * rng.normal(size=(n, 3))
    else:
        raise ValueError(f"unknown ensemble kind: {kind!r}")
    return Ensemble(velocities=v, time=0.0)
