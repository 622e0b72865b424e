"""Eigenstructure, semigroup decay, and restitution-drift diagnostics."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grid import RadialGrid
from .kernels import KernelConstants
from .operators import OperatorMatrix, assemble_L_alpha
from .weights import WeightSpec


@dataclass
class SpectralReport:
    alpha: float
    eigenvalues: np.ndarray
    zero_mode: np.ndarray
    lambda0: float
    zero_mode_residual: float
    gap: float
    eigenvector_condition: float
    decay_fit: dict
    projection_agreement: float
    flags: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "alpha": self.alpha,
            "lambda0": self.lambda0,
            "zero_mode_residual": self.zero_mode_residual,
            "gap": self.gap,
            "eigenvector_condition": self.eigenvector_condition,
            "decay_fit": self.decay_fit,
            "projection_agreement": self.projection_agreement,
            "flags": self.flags,
            "eigenvalues_re": np.real(self.eigenvalues).tolist(),
            "eigenvalues_im": np.imag(self.eigenvalues).tolist(),
        }
        return json.dumps(payload, indent=1, sort_keys=True)


def _unit_mass_mode(vec: np.ndarray, w: np.ndarray) -> np.ndarray:
    g = np.real(vec)
    mass = float(w @ g)
    if abs(mass) < 1e-300:
        raise ValueError("zero mode carries no mass; cannot normalize")
    return g / mass


def spectral_report(op: OperatorMatrix, n_vectors: int = 20,
                    horizon_factor: float = 8.0, n_steps: int = 40,
                    rng=None, validate_step: bool = True) -> SpectralReport:
    """Dense eigen-analysis of an assembled generator.

    Reports the zero mode (unit mass), the gap to the rest of the
    spectrum, a semigroup decay exponent fitted from evolving random
    mass-zero vectors over [0, horizon_factor / gap], and the agreement
    between the eigen-projection onto the zero mode and the mass-times-
    zero-mode form.
    """
    if rng is None:
        rng = np.random.default_rng(2024)
    mat = op.matrix
    grid, weights = op.grid, op.weights
    n = grid.n
    if n > 512:
        warnings.warn("dense eigen-solve on n=%d nodes; expect it to be slow" % n)
    xw = weights.x_weights(grid.r, grid.w)
    lam, V = np.linalg.eig(mat)
    i0 = int(np.argmin(np.abs(lam)))
    lam0 = abs(complex(lam[i0]))
    G = _unit_mass_mode(V[:, i0], grid.w)
    flags = {}
    scale = float(np.max((xw @ np.abs(mat)) / xw))
    resid = float(np.sum(np.abs(mat @ G) * xw)) / (scale * float(np.sum(np.abs(G) * xw)))
    others = np.delete(lam, i0)
    gap = float(-np.max(others.real))
    cond = float(np.linalg.cond(V))
    if cond > 1e8:
        flags["defective_warning"] = True
        warnings.warn("eigenvector basis condition %.2e; matrix close to defective" % cond)
    if gap <= 0:
        flags["unstable_spectrum"] = True
        warnings.warn("non-negative real part in the non-zero spectrum")

    # semigroup decay on the mass-zero subspace
    horizon = horizon_factor / max(gap, 1e-12)
    dt = horizon / n_steps
    step = scipy.linalg.expm(mat * dt)
    if validate_step and cond < 1e8:
        recon = (V * np.exp(lam * dt)) @ np.linalg.inv(V)
        err = np.max(np.abs(step - recon)) / max(np.max(np.abs(step)), 1e-300)
        flags["expm_check"] = float(err)
        if err > 1e-8:
            warnings.warn("matrix exponential disagrees with eigen-reconstruction "
                          "(rel %.2e)" % err)
    ts = np.arange(n_steps + 1) * dt
    slopes, prefactors = [], []
    max_mass_drift = 0.0
    for _ in range(n_vectors):
        g = rng.normal(size=n)
        g -= (grid.w @ g) * G
        norms = np.empty(n_steps + 1)
        norms[0] = np.sum(np.abs(g) * xw)
        cur = g
        for k in range(1, n_steps + 1):
            cur = step @ cur
            norms[k] = np.sum(np.abs(cur) * xw)
            max_mass_drift = max(max_mass_drift, abs(float(grid.w @ cur)))
        late = ts >= 0.5 * horizon
        coeff = np.polyfit(ts[late], np.log(norms[late]), 1)
        slopes.append(-coeff[0])
        prefactors.append(float(np.max(norms * np.exp(coeff[0] * -ts) / norms[0])))
    mu_hat = float(np.median(slopes))
    decay_fit = {
        "mu_hat": mu_hat,
        "mu_min": float(np.min(slopes)),
        "mu_max": float(np.max(slopes)),
        "prefactor": float(np.median(prefactors)),
        "horizon": horizon,
        "mass_drift_max": max_mass_drift,
    }

    # projection agreement: eigen-projection vs (total mass) * zero mode
    left = np.linalg.eig(mat.T)
    j0 = int(np.argmin(np.abs(left[0])))
    u = np.real(left[1][:, j0])
    agree = 0.0
    for _ in range(5):
        f = rng.normal(size=n)
        p_eig = G * float(u @ f) / float(u @ G)
        p_mass = float(grid.w @ f) * G
        agree = max(agree, float(np.sum(np.abs(p_eig - p_mass) * xw)
                                 / max(np.sum(np.abs(f) * xw), 1e-300)))
    return SpectralReport(alpha=op.alpha, eigenvalues=lam, zero_mode=G,
                          lambda0=lam0, zero_mode_residual=resid, gap=gap,
                          eigenvector_condition=cond, decay_fit=decay_fit,
                          projection_agreement=agree, flags=flags)


# --- restitution drift --------------------------------------------------------

LAMBDA0_FLOOR = 1e-10


@dataclass
class DriftTable:
    rows: list
    lam_resolvent: float
    spearman: dict
    flags: dict = field(default_factory=dict)

    def column(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.rows])

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "lam_resolvent": self.lam_resolvent,
                           "spearman": self.spearman, "flags": self.flags},
                          indent=1, sort_keys=True)


def _spearman(x: np.ndarray, y: np.ndarray) -> float:
    from scipy.stats import spearmanr
    rho = spearmanr(x, y).statistic
    return float(rho)


def alpha_drift(grid: RadialGrid, alphas, states: dict,
                constants: KernelConstants, weights: WeightSpec | None = None,
                route: str = "deposit", lam_resolvent: float | None = None,
                n_s: int = 64, n_s_tensor: int = 24,
                cache_dir: str | None = None) -> DriftTable:
    """Distance of the linearized generator to its elastic limit.

    states maps each alpha (including 1.0) to the steady state the
    operator is linearized around.  All alphas are assembled through the
    same route so that route bias cancels in the differences; the table
    lists the Y-to-X operator drift, the gap, the zero-eigenvalue
    magnitude, and the resolvent drift on the mass-zero subspace.
    """
    weights = weights or WeightSpec()
    alphas = sorted(float(a) for a in alphas)
    if 1.0 not in alphas:
        raise ValueError("drift table needs the alpha=1 reference entry")
    ops = {}
    for a in alphas:
        if a not in states:
            raise ValueError("no steady state provided for alpha=%g" % a)
        ops[a] = assemble_L_alpha(grid, states[a], a, constants, route=route,
                                  n_s=n_s, n_s_tensor=n_s_tensor,
                                  cache_dir=cache_dir, weights=weights,
                                  check_zero_mode=False)
    ref = ops[1.0].matrix
    xw = weights.x_weights(grid.r, grid.w)
    yw = weights.y_weights(grid.r, grid.w)
    lam_ref, V_ref = np.linalg.eig(ref)
    i0 = int(np.argmin(np.abs(lam_ref)))
    gap_ref = float(-np.max(np.delete(lam_ref, i0).real))
    if lam_resolvent is None:
        lam_resolvent = 0.5 * gap_ref
    G1 = _unit_mass_mode(V_ref[:, i0], grid.w)
    proj = np.eye(grid.n) - np.outer(G1, grid.w)
    resolvents = {a: np.linalg.solve(lam_resolvent * np.eye(grid.n)
                                     - ops[a].matrix, proj)
                  for a in alphas}
    rows = []
    for a in alphas:
        mat = ops[a].matrix
        lam = np.linalg.eigvals(mat)
        j0 = int(np.argmin(np.abs(lam)))
        rows.append({
            "alpha": a,
            "op_drift": float(np.max((xw @ np.abs(mat - ref)) / yw)),
            "gap": float(-np.max(np.delete(lam, j0).real)),
            "lambda0": float(abs(complex(lam[j0]))),
            "resolvent_drift": float(np.max(
                (xw @ np.abs(resolvents[a] - resolvents[1.0])) / yw)),
        })
    table = DriftTable(rows=rows, lam_resolvent=float(lam_resolvent), spearman={})
    avals = table.column("alpha")
    for key in ("op_drift", "lambda0", "resolvent_drift"):
        vals = table.column(key)
        if np.max(vals) <= LAMBDA0_FLOOR:
            table.spearman[key] = None
            table.flags[key + "_at_floor"] = True
            continue
        rho = _spearman(avals, vals)
        table.spearman[key] = rho
        if not (rho < -0.9):
            table.flags[key + "_non_monotone"] = True
            warnings.warn("%s drift not monotone toward the elastic limit "
                          "(spearman %.3f); check the steady-state solver and "
                          "assembly consistency" % (key, rho))
    return table
