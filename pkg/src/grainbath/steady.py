"""Steady states of the driven granular gas by two independent routes."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .bath import BathMaxwellian
from .collisions import elastic_bath_transform, inelastic_transform
from .density import DensityEstimate
from .engine import MajorantConfig, run
from .ensemble import Ensemble, init_ensemble, random_directions
from .grid import RadialGrid
from .kernels import KernelConstants
from .operators import (gain_tensor, scattering_gain_matrix, shell_speed_matrix,
                        state_values)
from .weights import WeightSpec


@dataclass
class SteadyStateResult:
    alpha: float
    route: str
    estimate: DensityEstimate
    residual_x: float
    energy: float
    distance_x: float
    distance_y: float
    diagnostics: dict = field(default_factory=dict)
    sandwich: dict | None = None

    def to_json(self) -> str:
        payload = {
            "alpha": self.alpha, "route": self.route,
            "residual_x": self.residual_x, "energy": self.energy,
            "distance_x": self.distance_x, "distance_y": self.distance_y,
            "diagnostics": _json_safe(self.diagnostics),
            "sandwich": _json_safe(self.sandwich),
            "estimate": json.loads(self.estimate.to_json()),
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    def radial_csv(self) -> str:
        lines = ["r,F,envelope_lower,envelope_upper"]
        lo_m = lo_b = hi_m = hi_b = None
        if self.sandwich and self.sandwich.get("passed"):
            lo_b = 0.5 / self.sandwich["theta_lower"]
            hi_b = 0.5 / self.sandwich["theta_upper"]
            lo_m = self.sandwich["value_lower"]
            hi_m = self.sandwich["value_upper"]
        for r, f in zip(self.estimate.r, self.estimate.f):
            if lo_m is None:
                lines.append("%.17g,%.17g,," % (r, f))
            else:
                lines.append("%.17g,%.17g,%.17g,%.17g" % (
                    r, f, lo_m * np.exp(-lo_b * r * r), hi_m * np.exp(-hi_b * r * r)))
        return "\n".join(lines) + "\n"


def _json_safe(obj):
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


# --- deterministic route -------------------------------------------------------

def steady_deterministic(grid: RadialGrid, alpha: float,
                         constants: KernelConstants, dt: float = 0.01,
                         tol: float = 1e-12, max_steps: int = 200000,
                         n_s: int = 64, n_s_tensor: int = 24,
                         cache_dir: str | None = None, f0=None,
                         weights: WeightSpec | None = None,
                         sandwich: bool = True) -> SteadyStateResult:
    """March f' = Q(f, f) + L f on the radial grid to its fixed point.

    The self-collision gain applies the precomputed deposit tensor, the
    loss channels use the shell-averaged pair speed and the scattering
    gain matrix with its conservative diagonal.  Mass is renormalized
    every step and the renormalization size is recorded; it stays at
    rounding level unless the assembly leaks.
    """
    weights = weights or WeightSpec()
    bath = BathMaxwellian(theta=constants.theta, u0=np.asarray(constants.u0))
    if not bath.centered:
        raise ValueError("deterministic route needs a centered bath")
    T4 = gain_tensor(grid, alpha, n_s=n_s_tensor, cache_dir=cache_dir)
    D = shell_speed_matrix(grid)
    K = scattering_gain_matrix(grid, constants, n_s=n_s)
    sig_hat = (grid.w @ K) / grid.w
    xw = weights.x_weights(grid.r, grid.w)
    w = grid.w
    f = bath.radial_density(grid.r) if f0 is None else state_values(f0, grid).copy()
    f = f / (w @ f)
    dt0 = dt
    renorm_max = 0.0
    res = np.inf
    steps = 0
    while steps < max_steps:
        wf = w * f
        gain = np.einsum("ilj,l,j->i", T4, wf, wf) / w
        loss = f * (D @ wf)
        df = gain - loss + K @ f - sig_hat * f
        f_new = f + dt * df
        if np.min(f_new) < -1e-12:
            dt *= 0.5
            if dt < 1e-8 * dt0:
                raise RuntimeError("time step underflow while keeping the "
                                   "state nonnegative")
            continue
        mass = float(w @ f_new)
        renorm_max = max(renorm_max, abs(mass - 1.0))
        f = f_new / mass
        steps += 1
        res = float(np.sum(np.abs(df) * xw))
        if res < tol:
            break
    converged = res < tol
    if not converged:
        warnings.warn("steady march stopped at residual %.2e > tol %.1e "
                      "after %d steps" % (res, tol, steps))
    est = DensityEstimate.from_nodal(grid.r, grid.w, f)
    energy = grid.second_moment(f)
    result = SteadyStateResult(
        alpha=float(alpha), route="deterministic", estimate=est,
        residual_x=res, energy=energy,
        distance_x=est.distance_to_bath(bath, weights),
        distance_y=est.distance_to_bath(bath, weights, bracket=True),
        diagnostics={"steps": steps, "dt_final": dt, "converged": converged,
                     "renorm_max_per_step": renorm_max / max(dt, 1e-300)})
    if renorm_max / max(dt, 1e-300) > 1e-10:
        result.diagnostics["renorm_flagged"] = True
        warnings.warn("per-step mass renormalization %.2e above 1e-10; "
                      "quadrature leakage suspect" % (renorm_max / dt))
    if sandwich:
        result.sandwich = sandwich_check(est, bath)
    return result


# --- stochastic route ----------------------------------------------------------

def _stationarity(times: np.ndarray, energies: np.ndarray):
    """Late-window linear drift t-statistic and an AR(1) relaxation time."""
    k = energies.size // 2
    t, e = times[k:], energies[k:]
    if t.size < 8:
        return np.inf, np.inf
    A = np.vstack([t - t.mean(), np.ones_like(t)]).T
    coef, res_, _, _ = np.linalg.lstsq(A, e, rcond=None)
    resid = e - A @ coef
    dof = max(t.size - 2, 1)
    se = np.sqrt(float(resid @ resid) / dof / float(((t - t.mean()) ** 2).sum()))
    tstat = abs(coef[0]) / max(se, 1e-300)
    r1 = resid[:-1] @ resid[1:] / max(float(resid @ resid), 1e-300)
    dt_s = float(np.mean(np.diff(t)))
    tau = np.inf if r1 >= 1.0 else (dt_s / max(-np.log(max(r1, 1e-6)), 1e-6)
                                    if r1 > 0 else dt_s)
    return float(tstat), float(tau)


def steady_dsmc(bath: BathMaxwellian, alpha: float, n_particles: int,
                seed: int, t_burn: float = 6.0, t_avg: float = 10.0,
                dt: float = 0.01, n_bins: int = 64, r_max: float | None = None,
                sample_stride: int = 5, n_workers: int = 1,
                max_extends: int = 4, weights: WeightSpec | None = None,
                residual_pairs: int = 200000,
                sandwich: bool = True) -> SteadyStateResult:
    """Time-averaged particle histogram after an adaptive burn-in.

    Burn-in is extended until the energy series is stationary (late-window
    drift below 3 sigma) and at least five fitted relaxation times have
    elapsed; then the radial histogram is accumulated on fixed edges over
    the averaging window.
    """
    if not bath.centered:
        raise ValueError("stochastic steady route needs a centered bath")
    weights = weights or WeightSpec()
    rng = np.random.default_rng(seed)
    ens = init_ensemble("maxwellian", n_particles, rng, theta=bath.theta)
    majorants = MajorantConfig()

    elapsed = 0.0
    chunk = t_burn
    times, energies = [], []
    for attempt in range(max_extends + 1):
        out = run(ens, bath, alpha, t_end=chunk, dt=dt, rng=rng,
                  sample_stride=sample_stride, n_workers=n_workers,
                  majorants=majorants)
        ens = out.ensemble
        times.extend((np.asarray(out.times) + elapsed).tolist())
        energies.extend(out.energies)
        elapsed += chunk
        tstat, tau = _stationarity(np.asarray(times), np.asarray(energies))
        if tstat <= 3.0 and elapsed >= 5.0 * tau:
            break
        chunk = max(t_burn / 2.0, 5.0 * tau - elapsed if np.isfinite(tau) else t_burn)
        chunk = min(chunk, 4.0 * t_burn)
    else:
        raise RuntimeError("burn-in did not stabilize: energy drift t=%.1f, "
                           "relaxation time %.2f after t=%.1f" % (tstat, tau, elapsed))

    if r_max is None:
        r_max = 8.0 * np.sqrt(bath.theta)
    edges = np.linspace(0.0, r_max, n_bins + 1)
    counts = np.zeros(n_bins)
    n_snap = 0
    escaped = 0
    exp_moments = []

    def grab(snapshot: Ensemble, _report):
        nonlocal n_snap, escaped
        sp = snapshot.speeds()
        c, _ = np.histogram(sp, bins=edges)
        counts[:] += c
        escaped += int(np.sum(sp >= r_max))
        n_snap += 1
        est, reliable = snapshot.exp_moment(weights.a)
        exp_moments.append((snapshot.time, est, bool(reliable)))

    out = run(ens, bath, alpha, t_end=t_avg, dt=dt, rng=rng,
              sample_stride=sample_stride, n_workers=n_workers,
              majorants=majorants, callback=grab)
    ens = out.ensemble
    n_source = n_snap * n_particles
    est = DensityEstimate.from_counts(edges, counts, n_source=n_source)
    est.escaped_mass = escaped / max(n_source, 1)
    res, res_se = _weak_residual_mc(est, bath, alpha, rng, n_pairs=residual_pairs)
    energy = est.energy() / max(est.mass(), 1e-300)
    result = SteadyStateResult(
        alpha=float(alpha), route="dsmc", estimate=est,
        residual_x=res, energy=energy,
        distance_x=est.distance_to_bath(bath, weights),
        distance_y=est.distance_to_bath(bath, weights, bracket=True),
        diagnostics={"burn_in": elapsed, "t_avg": t_avg, "snapshots": n_snap,
                     "residual_se": res_se, "escaped": escaped,
                     "exp_moment_series": exp_moments,
                     "aborts": out.total_aborts})
    if sandwich:
        result.sandwich = sandwich_check(est, bath)
    return result


def _hat_values(u: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Piecewise-linear hats on the center set, flat beyond both ends."""
    u = np.asarray(u, float)[:, None]
    c = centers
    left = np.concatenate(([c[0] - 1.0], c[:-1]))
    right = np.concatenate((c[1:], [c[-1] + 1.0]))
    up = np.clip((u - left) / (c - left), 0.0, 1.0)
    down = np.clip((right - u) / (right - c), 0.0, 1.0)
    vals = np.minimum(up, down)
    vals[:, 0] = np.maximum(vals[:, 0], (u[:, 0] <= c[0]).astype(float))
    vals[:, -1] = np.maximum(vals[:, -1], (u[:, 0] >= c[-1]).astype(float))
    return vals


def _weak_residual_mc(est: DensityEstimate, bath: BathMaxwellian, alpha: float,
                      rng: np.random.Generator, n_pairs: int = 200000,
                      n_hats: int = 12, weights: WeightSpec | None = None):
    """Monte Carlo weak-form residual of Q_alpha(f,f) + Lf against a coarse
    hat basis, recombined with the X weight at the hat centers.

    This is a projected (hence lower-bound flavored) estimate of the
    X-norm residual, with matching standard error.
    """
    weights = weights or WeightSpec()
    masses = np.clip(est.bin_masses(), 0.0, None)
    csum = np.cumsum(masses) / masses.sum()
    qs = np.interp(np.linspace(0.05, 0.95, n_hats), csum, est.r)
    centers = np.unique(qs)
    v = est.sample(rng, n_pairs)
    w_self = est.sample(rng, n_pairs)
    w_bath = bath.sample(rng, n_pairs)
    sig1 = random_directions(rng, n_pairs)
    sig2 = random_directions(rng, n_pairs)

    vp, wp = inelastic_transform(v, w_self, sig1, alpha)
    q_self = np.linalg.norm(v - w_self, axis=1)
    phi = lambda x: _hat_values(np.linalg.norm(x, axis=1), centers)
    terms_self = 0.5 * q_self[:, None] * (phi(vp) + phi(wp) - phi(v) - phi(w_self))

    v_star = elastic_bath_transform(v, w_bath, sig2)
    q_bath = np.linalg.norm(v - w_bath, axis=1)
    terms_bath = q_bath[:, None] * (phi(v_star) - phi(v))

    terms = terms_self + terms_bath
    mean = terms.mean(axis=0)
    se = terms.std(axis=0, ddof=1) / np.sqrt(n_pairs)
    scale = weights.m_inv(centers)
    return float(np.sum(np.abs(mean) * scale)), float(np.sum(se * scale))


# --- Maxwellian sandwich --------------------------------------------------------

def sandwich_check(est: DensityEstimate, bath: BathMaxwellian,
                   noise_factor: float = 10.0, theta_cap: float = 8.0,
                   slope_guard: float = 1.02,
                   gap_tol: float | None = None) -> dict:
    """Fit Gaussian envelopes around the radial profile.

    On the resolved range (values above noise_factor times the one-count
    or rounding floor) the log profile is bounded from above and below by
    affine functions of x = r^2, fitted by linear programs that minimize
    the mass-weighted average gap.  The upper slope is confined to
    [1/(2 theta_cap theta_0), 1/(2 theta_eff)] (an envelope colder than
    the measured effective temperature cannot dominate globally) and the
    lower slope to at least 1/(2 theta_eff), so theta_lower <= theta_eff
    <= theta_upper by construction.  A profile whose tail is heavier than
    every admissible Gaussian pins the upper slope at its floor and fails.
    """
    f = np.asarray(est.f, float)
    r = np.asarray(est.r, float)
    if est.kind == "histogram" and est.n_source:
        vol = est.w
        floor = 1.0 / (est.n_source * np.maximum(vol, 1e-300))
    else:
        floor = np.full_like(f, max(float(f.max()), 1e-300) * 1e-10)
    mask = f > noise_factor * floor
    if int(mask.sum()) < 6:
        return {"passed": False, "message": "fewer than 6 resolved points"}
    x = r[mask] ** 2
    z = np.log(f[mask])
    mw = (est.w * f)[mask]
    mw = mw / mw.sum()
    xbar = float(mw @ x)
    theta_eff = est.energy() / (3.0 * est.mass())
    b_eff = 1.0 / (2.0 * theta_eff)
    b_lo = 1.0 / (2.0 * theta_cap * bath.theta)
    b_hi = 200.0 / bath.theta
    if b_eff <= b_lo:
        return {"passed": False, "theta_eff": theta_eff,
                "message": "effective temperature beyond the admissible "
                           "Gaussian cap"}
    big = float(np.max(np.abs(z))) + b_hi * float(x.max()) + 10.0

    # upper envelope: min_(u,b) u - b <x>  s.t. u - b x_i >= z_i
    up = linprog(c=[1.0, -xbar],
                 A_ub=np.column_stack([-np.ones_like(x), x]), b_ub=-z,
                 bounds=[(-big, big), (b_lo, b_eff)], method="highs")
    # lower envelope: max_(l,b) l - b <x>  s.t. l - b x_i <= z_i
    dn = linprog(c=[-1.0, xbar],
                 A_ub=np.column_stack([np.ones_like(x), -x]), b_ub=z,
                 bounds=[(-big, big), (b_eff, b_hi)], method="highs")
    if not (up.success and dn.success):
        return {"passed": False, "theta_eff": theta_eff,
                "message": "envelope fit infeasible"}
    u_amp, b_up = up.x
    l_amp, b_dn = dn.x
    gaps_up = u_amp - b_up * x - z
    gaps_dn = z - (l_amp - b_dn * x)
    report = {
        "theta_upper": 0.5 / b_up, "theta_lower": 0.5 / b_dn,
        "theta_eff": theta_eff,
        "value_upper": float(np.exp(u_amp)), "value_lower": float(np.exp(l_amp)),
        "m_upper": float(np.exp(u_amp) * (2 * np.pi * 0.5 / b_up) ** 1.5),
        "m_lower": float(np.exp(l_amp) * (2 * np.pi * 0.5 / b_dn) ** 1.5),
        "avg_gap_upper": float(mw @ gaps_up), "avg_gap_lower": float(mw @ gaps_dn),
        "max_gap_upper": float(gaps_up.max()), "max_gap_lower": float(gaps_dn.max()),
        "n_points": int(mask.sum()),
    }
    ok = True
    msgs = []
    if b_up <= b_lo * slope_guard:
        ok = False
        msgs.append("upper envelope slope pinned at the Gaussian floor "
                    "(tail heavier than any admissible Maxwellian)")
    if gap_tol is not None and (report["avg_gap_upper"] > gap_tol
                                or report["avg_gap_lower"] > gap_tol):
        ok = False
        msgs.append("envelope gap above tolerance")
    report["passed"] = ok
    report["message"] = "; ".join(msgs)
    return report


# --- elastic limit ---------------------------------------------------------------

def elastic_limit_curve(alphas, bath: BathMaxwellian, constants: KernelConstants,
                        route: str = "deterministic", grid: RadialGrid | None = None,
                        weights: WeightSpec | None = None,
                        dsmc_params: dict | None = None,
                        cache_dir: str | None = None,
                        det_params: dict | None = None) -> dict:
    """Distance of F_alpha to the bath Maxwellian as alpha approaches 1."""
    from scipy.stats import spearmanr
    weights = weights or WeightSpec()
    alphas = sorted(float(a) for a in alphas)
    if len(alphas) < 4:
        raise ValueError("need at least 4 restitution values for the trend test")
    rows = []
    for a in alphas:
        if route == "deterministic":
            if grid is None:
                raise ValueError("deterministic route needs a grid")
            res = steady_deterministic(grid, a, constants, cache_dir=cache_dir,
                                       weights=weights, sandwich=False,
                                       **(det_params or {}))
        elif route == "dsmc":
            params = dict(dsmc_params or {})
            params.setdefault("n_particles", 100000)
            params.setdefault("seed", 1000 + int(round(1000 * a)))
            res = steady_dsmc(bath, a, weights=weights, sandwich=False, **params)
        else:
            raise ValueError("unknown route %r" % route)
        rows.append({"alpha": a, "dist_x": res.distance_x, "dist_y": res.distance_y,
                     "energy": res.energy, "residual_x": res.residual_x})
    dx = np.array([row["dist_x"] for row in rows])
    dy = np.array([row["dist_y"] for row in rows])
    av = np.array(alphas)
    rho_x = float(spearmanr(av, dx).statistic)
    rho_y = float(spearmanr(av, dy).statistic)
    # extrapolate the distance to the elastic endpoint in (1 - alpha)
    eps = 1.0 - av
    coef, residues, _, _ = np.linalg.lstsq(
        np.vstack([eps, np.ones_like(eps)]).T, dx, rcond=None)
    dof = max(len(alphas) - 2, 1)
    resid = dx - coef[0] * eps - coef[1]
    se_int = float(np.sqrt(resid @ resid / dof * (1.0 / len(alphas)
                   + eps.mean() ** 2 / max(((eps - eps.mean()) ** 2).sum(), 1e-300))))
    return {"rows": rows, "spearman_x": rho_x, "spearman_y": rho_y,
            "intercept": float(coef[1]), "intercept_se": se_int,
            "passed": bool(rho_x < -0.9 and rho_y < -0.9
                           and abs(coef[1]) <= 3.0 * se_int + 1e-3)}
