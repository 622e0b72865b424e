"""Exponential weight functions for the weighted-L1 norms.

The natural spaces for the linearized problem are L1 with an exponentially
growing weight m(r)^(-1) = exp(a r) and its velocity-bracket strengthening:

    ||g||_X = int |g(v)| exp(a |v|) dv,
    ||g||_Y = int |g(v)| <v> exp(a |v|) dv,     <v> = sqrt(1 + |v|^2).

On a radial grid the norms become weighted column sums; this module just
centralizes the weight vectors so every consumer agrees on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightSpec:
    """Exponential rate of the norm weight exp(a r)."""

    a: float = 0.5

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"weight rate must be nonnegative, got {self.a}")

    def m_inv(self, r: np.ndarray) -> np.ndarray:
        return np.exp(self.a * np.asarray(r, float))

    def bracket(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, float)
        return np.sqrt(1.0 + r * r)

    def x_weights(self, r: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Quadrature weights of the X norm: ||g||_X = sum x_i |g_i|."""
        return self.m_inv(r) * np.asarray(w, float)

    def y_weights(self, r: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Quadrature weights of the Y norm (adds the bracket factor)."""
        return self.bracket(r) * self.m_inv(r) * np.asarray(w, float)


def weighted_l1(values: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(weights * np.abs(np.asarray(values, float))))


def operator_l1_norm(matrix: np.ndarray, weights: np.ndarray) -> float:
    """Weighted-l1 operator norm: max over columns j of
    sum_i weights_i |A_ij| / weights_j."""
    a = np.abs(np.asarray(matrix, float))
    return float(np.max((weights @ a) / weights))
