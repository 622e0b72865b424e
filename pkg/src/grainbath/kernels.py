"""Scattering kernels of the bath operator and of the inelastic gain term.

The linear bath operator has the integral form (L f)(v) = int k(v, w) f(w) dw
- Sigma(v) f(v), with

    k(v, w) = C0 |q|^(-1) exp(-beta0 (|q| + (|v-u0|^2 - |w-u0|^2)/|q|)^2),

q = v - w and beta0 = 1/(8 theta).  The exponent collapses to
-((v - u0) . qhat)^2 / (2 theta), which is the numerically stable form used
here, and k satisfies detailed balance k(v, w) M(w) = k(w, v) M(v).

The inelastic gain operator with a fixed background F in the second slot is
an integral operator whose kernel is a plane integral (Carleman form):

    K1(v, w) = (C_alpha / |q|) int_{V2 perp q} F(b + V2) dV2,
    b = w + (2 / (1 + alpha)) (v - w).

Both normalization constants are calibrated numerically from mass identities
(int k(w, v) dw = Sigma(v) and int K1(v, w) dv = sigma_F(w)); closed forms
exist and the calibration is verified against them in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .bath import BathMaxwellian, collision_frequency_closed_form


@dataclass
class CalibrationReport:
    probes: list
    values: list
    constant: float
    spread: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.spread <= self.tol


@dataclass
class KernelConstants:
    """Calibrated kernel normalizations for one bath."""

    theta: float
    u0: np.ndarray
    C0: float
    carleman: dict = field(default_factory=dict)   # alpha (rounded repr) -> C_alpha

    @property
    def beta0(self) -> float:
        return 1.0 / (8.0 * self.theta)

    @staticmethod
    def _key(alpha: float) -> str:
        return f"{float(alpha):.12g}"

    def carleman_value(self, alpha: float) -> float:
        key = self._key(alpha)
        if key not in self.carleman:
            raise KeyError(f"no calibrated gain constant for alpha={alpha}; "
                           f"run calibrate_carleman first")
        return self.carleman[key]

    def to_json(self) -> str:
        return json.dumps({
            "theta": self.theta,
            "u0": list(np.asarray(self.u0, float)),
            "C0": self.C0,
            "carleman": self.carleman,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KernelConstants":
        d = json.loads(text)
        return cls(theta=d["theta"], u0=np.asarray(d["u0"], float),
                   C0=d["C0"], carleman=dict(d["carleman"]))


def scattering_kernel_k(v: np.ndarray, w: np.ndarray, bath: BathMaxwellian,
                        constants: KernelConstants) -> np.ndarray:
    """Bath scattering kernel k(v, w); broadcasts over a leading batch axis."""
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    q = v - w
    nq = np.linalg.norm(q, axis=-1)
    x = v - bath.u0
    proj = np.einsum("...i,...i->...", x, q) / nq
    return constants.C0 / nq * np.exp(-proj * proj / (2.0 * bath.theta))


def _erf_primitive(s, beta0):
    # G(s) = int_0^s exp(-4 beta0 u^2) du, odd in s
    return np.sqrt(np.pi) / (4.0 * np.sqrt(beta0)) * erf(2.0 * np.sqrt(beta0) * s)


def scattering_kernel_mass(v: np.ndarray, bath: BathMaxwellian,
                           C0: float = 1.0, n_radial: int = 400,
                           r_max: float | None = None) -> float:
    """int k(w, v) dw by quadrature (the kernel-side collision frequency).

    Reduction: with z = |v - u0|, the angular integral is exact in terms of
    G(s) = int_0^s exp(-4 beta0 u^2) du, leaving
    (2 pi C0 / z) int_0^inf rho [G(rho + z) - G(rho - z)] drho.
    """
    beta0 = 1.0 / (8.0 * bath.theta)
    z = float(np.linalg.norm(np.asarray(v, float) - bath.u0))
    if r_max is None:
        r_max = float(z + 12.0 * np.sqrt(bath.theta))
    x, gw = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * r_max * (x + 1.0)
    wq = 0.5 * r_max * gw
    if z < 1e-9:
        inner = 2.0 * np.exp(-4.0 * beta0 * rho ** 2)
        return float(C0 * 2.0 * np.pi * np.sum(wq * rho * inner))
    inner = (_erf_primitive(rho + z, beta0) - _erf_primitive(rho - z, beta0)) / z
    return float(C0 * 2.0 * np.pi * np.sum(wq * rho * inner))


def calibrate_C0(bath: BathMaxwellian, probes=None, tol: float = 1e-6,
                 n_radial: int = 400) -> tuple[KernelConstants, CalibrationReport]:
    """Pin C0 from the mass identity int k(w, v) dw = Sigma(v).

    Evaluates the unit-normalized kernel mass at several probe speeds and
    divides into the closed-form collision frequency; the spread across
    probes certifies the kernel shape (it must be <= tol).
    """
    if probes is None:
        probes = np.sqrt(bath.theta) * np.array([0.0, 0.6, 1.3, 2.1, 3.4])
    vals = []
    for z in probes:
        v = bath.u0 + np.array([float(z), 0.0, 0.0])
        mass = scattering_kernel_mass(v, bath, C0=1.0, n_radial=n_radial)
        vals.append(collision_frequency_closed_form(v, bath) / mass)
    vals = np.asarray(vals)
    c0 = float(np.mean(vals))
    spread = float((vals.max() - vals.min()) / c0)
    report = CalibrationReport(list(map(float, probes)), list(map(float, vals)),
                               c0, spread, tol)
    if not report.ok:
        raise RuntimeError(f"C0 calibration spread {spread:.3e} exceeds {tol:.1e}")
    return KernelConstants(theta=bath.theta, u0=bath.u0.copy(), C0=c0), report


def _plane_basis(qhat):
    a = np.array([1.0, 0.0, 0.0])
    if abs(qhat @ a) > 0.9:
        a = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(qhat, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(qhat, e1)
    return e1, e2


def gain_kernel_K1(v: np.ndarray, w: np.ndarray, alpha: float, F,
                   constants: KernelConstants, n_s: int = 64, n_phi: int = 32,
                   s_max: float | None = None) -> float:
    """Carleman kernel of the gain term with background F in the second slot.

    K1(v, w) = (C_alpha / |q|) * (plane integral of F over the plane through
    b = w + (2/(1+alpha)) (v - w) orthogonal to q = v - w).

    If F is isotropic and exposes ``radial_tail(x) = 2 pi int_x^inf F(t) t dt``
    the plane integral is exact (shift invariance along the plane reduces it
    to a radial tail moment at the foot |b . qhat|); otherwise a polar
    quadrature over the plane is used and F must be callable on (m, 3) points.
    """
    C = constants.carleman_value(alpha)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    q = v - w
    nq = float(np.linalg.norm(q))
    qhat = q / nq
    b = w + (2.0 / (1.0 + alpha)) * q
    if hasattr(F, "radial_tail"):
        return C / nq * float(F.radial_tail(abs(float(b @ qhat))))
    if s_max is None:
        s_max = 12.0 * np.sqrt(constants.theta) + float(np.linalg.norm(b))
    e1, e2 = _plane_basis(qhat)
    x, gw = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * s_max * (x + 1.0)
    sw = 0.5 * s_max * gw
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    pts = (b[None, None, :]
           + s[:, None, None] * (np.cos(phi)[None, :, None] * e1
                                 + np.sin(phi)[None, :, None] * e2))
    vals = np.asarray(F(pts.reshape(-1, 3))).reshape(n_s, n_phi)
    plane = float(np.sum(sw * s * vals.mean(axis=1)) * 2.0 * np.pi)
    return C / nq * plane


def carleman_mass(w: np.ndarray, alpha: float, bath: BathMaxwellian,
                  C: float = 1.0, n_radial: int = 300, n_t: int = 120,
                  r_max: float | None = None) -> float:
    """int K1(v, w) dv for F = bath Maxwellian, with constant C.

    Spherical reduction around w: with y = v - w, the foot of the Carleman
    plane is |w . yhat + (2/(1+alpha)) |y||, so the integral is a 2d
    (radial x polar) quadrature of the analytic Maxwellian tail moment.
    """
    z = float(np.linalg.norm(np.asarray(w, float) - bath.u0))
    if r_max is None:
        r_max = 10.0 * np.sqrt(bath.theta) + z
    x, gw = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * r_max * (x + 1.0)
    rw = 0.5 * r_max * gw
    t, tw = np.polynomial.legendre.leggauss(n_t)
    foot = np.abs(z * t[None, :] + (2.0 / (1.0 + alpha)) * rho[:, None])
    tails = 2.0 * np.pi * bath.theta * bath.radial_density(foot)
    inner = 0.5 * np.sum(tails * tw[None, :], axis=1)
    return float(C * 4.0 * np.pi * np.sum(rw * rho * inner))


def calibrate_carleman(constants: KernelConstants, alpha: float,
                       bath: BathMaxwellian | None = None, probes=None,
                       tol: float = 1e-6) -> CalibrationReport:
    """Pin C_alpha from the mass identity int K1(v, w) dv = sigma_F(w).

    The constant is geometric (independent of the background F), so the
    calibration uses the bath Maxwellian where sigma_M = Sigma is closed
    form.  Stores the value on ``constants`` and returns the report.
    """
    if bath is None:
        bath = BathMaxwellian(theta=constants.theta, u0=constants.u0)
    if probes is None:
        probes = np.sqrt(bath.theta) * np.array([0.0, 0.8, 1.7, 2.6])
    vals = []
    for z in probes:
        w = bath.u0 + np.array([float(z), 0.0, 0.0])
        mass = carleman_mass(w, alpha, bath, C=1.0)
        vals.append(collision_frequency_closed_form(w, bath) / mass)
    vals = np.asarray(vals)
    c = float(np.mean(vals))
    spread = float((vals.max() - vals.min()) / c)
    report = CalibrationReport(list(map(float, probes)), list(map(float, vals)),
                               c, spread, tol)
    if not report.ok:
        raise RuntimeError(f"C_alpha calibration spread {spread:.3e} exceeds {tol:.1e}")
    constants.carleman[constants._key(alpha)] = c
    return report


def gain_kernel_upper(v: np.ndarray, w: np.ndarray, alpha: float,
                      C_bar: float, u1: np.ndarray, theta1: float) -> np.ndarray:
    """Dominating kernel of the gain term:

    (C_bar / |q|) exp(-beta1 ((1 + mu_alpha)|q| + (|v-u1|^2 - |w-u1|^2)/|q|)^2)

    with mu_alpha = 2 (1 - alpha)/(1 + alpha) and beta1 = 1/(8 theta1).  At
    alpha = 1 with (u1, theta1, C_bar) = (u0, theta0, C0) it reduces to the
    bath scattering kernel k.
    """
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    u1 = np.asarray(u1, float)
    mu = 2.0 * (1.0 - alpha) / (1.0 + alpha)
    beta1 = 1.0 / (8.0 * theta1)
    q = v - w
    nq = np.linalg.norm(q, axis=-1)
    d = (np.sum((v - u1) ** 2, axis=-1) - np.sum((w - u1) ** 2, axis=-1))
    arg = (1.0 + mu) * nq + d / nq
    return C_bar / nq * np.exp(-beta1 * arg * arg)
