"""Relative entropy, entropy-production estimators, and decay fitting.

The relative entropy H(f|M) = int f log(f/M) evolves along the flow as

    dH/dt = -D(f) - D_H(f)
            + (1 - alpha^2)/(2 alpha^2) * E[|v - w|]
            - (1 - alpha^2)/(16 theta)  * E[|v - w|^3],

with expectations over independent pairs from f, where D is the entropy
production of the bath channel (-int Lf log(f/M)) and D_H is the
nonnegative self-collision production

    D_H(f) = (1/2) E[ |v - w| (X - log X - 1) ],
    X = f(v') f(w') / (f(v) f(w)),

over pairs from f and uniform scattering directions, primed velocities
being the post-collisional ones.  Every estimator here is a pure function
of (density estimate, seed): Monte Carlo triples are drawn from the
estimate, evaluated on the estimate, and undefined evaluations (empty
bins) are redrawn and counted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bath import BathMaxwellian
from .collisions import elastic_bath_transform, inelastic_transform
from .density import DensityEstimate
from .ensemble import Ensemble, random_directions
from .weights import WeightSpec


@dataclass
class EstimatorResult:
    value: float
    se: float
    resampled: int = 0

    def __iter__(self):
        yield self.value
        yield self.se


def _as_estimate(source, n_bins: int | None = None) -> DensityEstimate:
    if isinstance(source, DensityEstimate):
        return source
    if isinstance(source, Ensemble):
        if n_bins is None:
            n_bins = max(int(round(source.n ** 0.25)), 8)
        return DensityEstimate.from_ensemble(source, n_bins=n_bins)
    raise TypeError(f"expected Ensemble or DensityEstimate, got {type(source)}")


def _smooth_eval(est: DensityEstimate):
    """Pointwise density lookup for log-ratio integrands.

    Staircase lookups put an O(h^2) positive floor under (X - log X - 1)
    and the psi differences (the within-bin log-gradient error never
    cancels there), so histogram estimates are read through linear
    interpolation of the bin-center values instead."""
    if est.kind != "histogram":
        return lambda v: est.radial_values(np.linalg.norm(v, axis=-1))
    nodes = np.append(0.5 * (est.edges[:-1] + est.edges[1:]), est.edges[-1])
    vals = np.append(est.f, est.f[-1])

    def ev(v):
        r = np.linalg.norm(v, axis=-1)
        out = np.interp(r, nodes, vals, left=vals[0], right=0.0)
        return np.where(r > est.edges[-1], 0.0, out)

    return ev


# --- relative entropy -------------------------------------------------------


def relative_entropy(est: DensityEstimate, bath: BathMaxwellian) -> float:
    """H(f|M) = sum_bins p log(p/q), q the analytic bath bin mass.

    Empty bins contribute zero; bins whose bath mass underflows are
    excluded (see relative_entropy_report for the count).
    """
    return relative_entropy_report(est, bath)[0]


def relative_entropy_report(est: DensityEstimate, bath: BathMaxwellian):
    """(H, delta-method standard error, excluded bin count).

    Sampled histograms (n_source > 0) get the Miller-Madow debias
    (K - 1)/(2 n): the plug-in sum otherwise floors at that value instead
    of 0 at equilibrium, which would leak into every plateau estimate.
    The corrected value can fluctuate slightly below zero near
    equilibrium; consumers needing the true functional's sign should
    test within the reported error band."""
    if est.kind == "histogram":
        p = est.bin_masses()
        q = bath.bin_masses(est.edges)
        live = p > 0
        bad = live & (q <= 0)
        ok = live & ~bad
        ratio = np.log(p[ok] / q[ok])
        h = float(np.sum(p[ok] * ratio))
        if est.n_source > 0:
            var = float(np.sum(p[ok] * ratio ** 2) - h * h)
            se = np.sqrt(max(var, 0.0) / est.n_source)
            h -= (np.count_nonzero(ok) - 1) / (2.0 * est.n_source)
        else:
            se = 0.0
        return h, float(se), int(np.count_nonzero(bad))
    mvals = bath.radial_density(est.r)
    live = est.f > 0
    h = float(np.sum(est.w[live] * est.f[live] * np.log(est.f[live] / mvals[live])))
    return h, 0.0, 0


def csiszar_kullback_gap(est: DensityEstimate, bath: BathMaxwellian) -> float:
    """2 H(f|M) - ||f - M||_{L1}^2, nonnegative up to binning error."""
    h = relative_entropy(est, bath)
    if est.kind == "histogram":
        l1 = float(np.sum(np.abs(est.bin_masses() - bath.bin_masses(est.edges))))
    else:
        l1 = float(np.sum(est.w * np.abs(est.f - bath.radial_density(est.r))))
    return 2.0 * h - l1 * l1


# --- production estimators --------------------------------------------------


def _resampling_mc(rng: np.random.Generator, n: int, draw, value,
                   max_rounds: int = 60) -> EstimatorResult:
    """Monte Carlo mean with redraw-on-invalid semantics.

    draw(k) -> sample batch of size k; value(batch) -> (values, valid mask).
    Invalid entries are redrawn until none remain; the redraw count is
    reported.
    """
    vals = np.empty(n)
    pending = n
    resampled = 0
    filled = 0
    for _ in range(max_rounds):
        batch = draw(pending)
        v, okmask = value(batch)
        good = int(np.count_nonzero(okmask))
        vals[filled:filled + good] = v[okmask]
        filled += good
        resampled += pending - good
        pending -= good
        if pending == 0:
            break
    else:
        raise RuntimeError("estimator could not fill its sample budget; "
                           "density support too small")
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(n))
    return EstimatorResult(mean, se, resampled)


def entropy_production_D(source, bath: BathMaxwellian, n_pairs: int,
                         rng: np.random.Generator,
                         n_bins: int | None = None) -> EstimatorResult:
    """Bath-channel entropy production -int Lf log(f/M) by weak-form MC.

    Triples (v from f, w from the bath, sigma uniform) score
    -|v - w| (psi(v*) - psi(v)) with psi = log(f/M) read off the estimate
    and v* the elastic post-collision velocity.
    """
    est = _as_estimate(source, n_bins)
    particles = source.velocities if isinstance(source, Ensemble) else None
    ev = _smooth_eval(est)

    def psi(v):
        fv = ev(v)
        ok = fv > 0
        out = np.where(ok, np.log(np.where(ok, fv, 1.0)) -
                       np.log(np.maximum(bath.density(v), 1e-300)), 0.0)
        return out, ok

    def draw(k):
        if particles is not None:
            v = particles[rng.integers(0, particles.shape[0], size=k)]
        else:
            v = est.sample(rng, k)
        w = bath.sample(rng, k)
        sig = random_directions(rng, k)
        return v, w, sig

    def value(batch):
        v, w, sig = batch
        vstar = elastic_bath_transform(v, w, sig)
        pv, ok_v = psi(v)
        ps, ok_s = psi(vstar)
        nq = np.linalg.norm(v - w, axis=1)
        return -nq * (ps - pv), ok_v & ok_s

    return _resampling_mc(rng, n_pairs, draw, value)


def entropy_production_DH(source, alpha: float, n_triples: int,
                          rng: np.random.Generator,
                          n_bins: int | None = None) -> EstimatorResult:
    """Self-collision entropy production D_H (nonnegative integrand).

    Scores (1/2) |v - w| (X - log X - 1) over (v, w) drawn from the
    estimate and uniform sigma, with X the post/pre density ratio.
    """
    est = _as_estimate(source, n_bins)
    ev = _smooth_eval(est)

    def draw(k):
        return est.sample(rng, k), est.sample(rng, k), random_directions(rng, k)

    def value(batch):
        v, w, sig = batch
        vp, wp = inelastic_transform(v, w, sig, alpha)
        num = ev(vp) * ev(wp)
        den = ev(v) * ev(w)
        ok = (num > 0) & (den > 0)
        x = np.where(ok, num / np.where(den > 0, den, 1.0), 1.0)
        nq = np.linalg.norm(v - w, axis=1)
        return 0.5 * nq * (x - np.log(x) - 1.0), ok

    return _resampling_mc(rng, n_triples, draw, value)


def pair_speed_moment(source, power: int, n_pairs: int,
                      rng: np.random.Generator,
                      n_bins: int | None = None) -> EstimatorResult:
    """MC estimate of E |v - w|^power over independent pairs from f."""
    est = _as_estimate(source, n_bins)

    def draw(k):
        return est.sample(rng, k), est.sample(rng, k)

    def value(batch):
        v, w = batch
        nq = np.linalg.norm(v - w, axis=1)
        return nq ** power, np.ones(v.shape[0], bool)

    return _resampling_mc(rng, n_pairs, draw, value)


def pair_moment_quadrature(est: DensityEstimate, power: int) -> float:
    """Deterministic E |v - w|^power from the radial rule (isotropy).

    The angular average of |v - w|^p at speeds (r, rho) is
    ((r + rho)^(p+2) - |r - rho|^(p+2)) / (2 (p+2) r rho).
    """
    r, w, f = est.radial_rule()
    mw = w * f
    p2 = power + 2
    rr = r[:, None]
    pp = r[None, :]
    denom = 2.0 * p2 * rr * pp
    num = (rr + pp) ** p2 - np.abs(rr - pp) ** p2
    avg = np.where(denom > 1e-280, num / np.where(denom > 0, denom, 1.0),
                   np.maximum(rr, pp) ** power)
    return float(mw @ avg @ mw)


def qlogM_term(source, alpha: float, bath: BathMaxwellian, n_pairs: int,
               rng: np.random.Generator,
               n_bins: int | None = None) -> EstimatorResult:
    """(1 - alpha^2)/(16 theta) * E |v - w|^3, the Maxwellian-log moment
    of the self-collision operator (exactly zero at alpha = 1)."""
    pref = (1.0 - alpha * alpha) / (16.0 * bath.theta)
    if pref == 0.0:
        return EstimatorResult(0.0, 0.0, 0)
    m3 = pair_speed_moment(source, 3, n_pairs, rng, n_bins)
    return EstimatorResult(pref * m3.value, pref * m3.se, m3.resampled)


def entropy_identity_check(source, alpha: float, n_triples: int,
                           rng: np.random.Generator,
                           n_bins: int | None = None) -> dict:
    """Studentized residual between two MC estimates of
    int Q_alpha(g,g) log g.

    Left side: weak form with psi = log g, scoring
    (1/2) |v - w| (log g(v') + log g(w') - log g(v) - log g(w)).
    Right side: -D_H(g) + (1 - alpha^2)/(2 alpha^2) E|v - w|.
    Draws are independent, so the residual is ~N(0,1) when both are right.
    """
    est = _as_estimate(source, n_bins)
    ev = _smooth_eval(est)

    def draw(k):
        return est.sample(rng, k), est.sample(rng, k), random_directions(rng, k)

    def value(batch):
        v, w, sig = batch
        vp, wp = inelastic_transform(v, w, sig, alpha)
        gv, gw, gvp, gwp = ev(v), ev(w), ev(vp), ev(wp)
        ok = (gv > 0) & (gw > 0) & (gvp > 0) & (gwp > 0)
        safe = lambda a: np.log(np.where(ok, a, 1.0))
        nq = np.linalg.norm(v - w, axis=1)
        return 0.5 * nq * (safe(gvp) + safe(gwp) - safe(gv) - safe(gw)), ok

    lhs = _resampling_mc(rng, n_triples, draw, value)
    dh = entropy_production_DH(est, alpha, n_triples, rng)
    pref = (1.0 - alpha * alpha) / (2.0 * alpha * alpha)
    if pref != 0.0:
        m1 = pair_speed_moment(est, 1, n_triples, rng)
        rhs_val = -dh.value + pref * m1.value
        rhs_se2 = dh.se ** 2 + (pref * m1.se) ** 2
    else:
        rhs_val = -dh.value
        rhs_se2 = dh.se ** 2
    sigma = float(np.sqrt(lhs.se ** 2 + rhs_se2))
    residual = (lhs.value - rhs_val) / sigma if sigma > 0 else 0.0
    return {"residual": float(residual), "lhs": lhs.value, "rhs": rhs_val,
            "sigma": sigma, "resampled": lhs.resampled + dh.resampled}


# --- balance and decay fit --------------------------------------------------


def entropy_balance(rows: list, alpha: float, theta: float,
                    max_dt: float | None = None) -> dict:
    """Per-interval residuals of the entropy balance identity.

    rows: dicts with keys t, H, H_se, D, D_se, DH, DH_se, qmean, qmean_se,
    qlogM, qlogM_se (the snapshot estimators).  Each interval compares the
    finite difference dH/dt against the trapezoid average of
    -D - D_H + (1-alpha^2)/(2 alpha^2) qmean - qlogM, studentized by the
    propagated standard errors.  Intervals longer than max_dt are skipped:
    the trapezoid midpoint is only accurate while lambda dt stays small,
    so estimator snapshots should come in consecutive-sample pairs.
    """
    if len(rows) < 6:
        raise ValueError("trajectory too short for a balance check: need at "
                         "least 6 snapshots; sample the run more densely")
    pref = (1.0 - alpha * alpha) / (2.0 * alpha * alpha)
    t = np.array([r["t"] for r in rows])
    H = np.array([r["H"] for r in rows])
    Hse = np.array([r.get("H_se", 0.0) for r in rows])
    rhs = np.array([-r["D"] - r["DH"] + pref * r["qmean"] - r["qlogM"]
                    for r in rows])
    rhs_var = np.array([r["D_se"] ** 2 + r["DH_se"] ** 2
                        + (pref * r.get("qmean_se", 0.0)) ** 2
                        + r.get("qlogM_se", 0.0) ** 2 for r in rows])
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("sample times must increase")
    keep = np.ones(dt.size, bool) if max_dt is None else dt <= max_dt
    if int(keep.sum()) < 5:
        raise ValueError("fewer than 5 balance intervals shorter than "
                         f"max_dt={max_dt}; pair the estimator snapshots")
    lhs = (np.diff(H) / dt)[keep]
    rhs_mid = (0.5 * (rhs[:-1] + rhs[1:]))[keep]
    var = ((Hse[:-1] ** 2 + Hse[1:] ** 2) / dt ** 2
           + 0.25 * (rhs_var[:-1] + rhs_var[1:]))[keep]
    sigma = np.sqrt(var)
    if np.any(sigma <= 0):
        raise ValueError("snapshot standard errors are required for the "
                         "balance check; rerun estimators with error bars")
    residuals = (lhs - rhs_mid) / sigma
    within = np.abs(residuals) <= 3.0
    return {
        "residuals": residuals.tolist(),
        "fraction_within_3sigma": float(np.mean(within)),
        "ok": bool(np.mean(within) >= 0.95),
        "n_intervals": int(keep.sum()),
        "lhs": lhs.tolist(),
        "rhs": rhs_mid.tolist(),
        "sigma": sigma.tolist(),
    }


@dataclass
class LambdaFit:
    lam: float
    lam_se: float
    plateau: float
    plateau_se: float
    K_hat: float
    window: tuple
    efoldings: float
    ok: bool
    message: str = ""


def lambda_fit(times, H, alpha: float, min_points: int = 20) -> LambdaFit:
    """Two-stage envelope fit of H(t) ~ exp(-lambda t) H0 + K (1 - alpha).

    The plateau is the tail mean (last quarter) corrected once for the
    fitted decay leaking into the tail; lambda is a log-linear regression
    of H - plateau on the early transient down to 10% of the initial gap
    (about 2.3 e-foldings).
    """
    t = np.asarray(times, float)
    H = np.asarray(H, float)
    if t.size < min_points:
        raise ValueError(f"need at least {min_points} samples, got {t.size}")
    n_tail = max(t.size // 4, 3)
    plateau = float(np.mean(H[-n_tail:]))
    plateau_se = float(np.std(H[-n_tail:], ddof=1) / np.sqrt(n_tail))
    lam = lam_se = 0.0
    window = (0, 0)
    efold = 0.0
    ok = True
    message = ""
    for _ in range(2):   # second pass re-fits after leak-correcting the plateau
        gap = H - plateau
        g0 = gap[0]
        if g0 <= max(3.0 * plateau_se, 0.0):
            return LambdaFit(0.0, 0.0, plateau, plateau_se,
                             plateau / (1.0 - alpha) if alpha < 1 else float("nan"),
                             (0, 0), 0.0, False,
                             "no initial entropy excess above the plateau")
        live = gap > 0.1 * g0
        if not live[0]:
            live[0] = True
        cut = int(np.argmin(live)) if not live.all() else t.size
        cut = max(cut, 3)
        window = (0, cut)
        y = np.log(np.clip(gap[:cut], 1e-300, None))
        A = np.vstack([t[:cut], np.ones(cut)]).T
        coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
        lam = -float(coef[0])
        dof = max(cut - 2, 1)
        resid_var = float(res[0]) / dof if res.size else 0.0
        tc = t[:cut]
        lam_se = float(np.sqrt(resid_var / np.sum((tc - tc.mean()) ** 2))) \
            if cut > 2 else 0.0
        efold = float(y[0] - y[-1])
        if lam <= 0:
            ok = False
            message = "entropy gap does not decay over the fit window"
            break
        leak = float(np.mean(g0 * np.exp(-lam * t[-n_tail:])))
        plateau = float(np.mean(H[-n_tail:])) - leak
    K_hat = plateau / (1.0 - alpha) if alpha < 1 else float("nan")
    if ok and efold < 2.0:
        message = f"fit window spans only {efold:.2f} e-foldings"
    return LambdaFit(lam, lam_se, plateau, plateau_se, K_hat,
                     window, efold, ok, message)


def interpolation_check(est: DensityEstimate, eps: float,
                        weight: WeightSpec | None = None) -> dict:
    """Verify ||f||_Y <= C ||f||_X^(1-eps) with the Holder constant
    C = (int |f| <v>^(1/eps) m^(-1) dv)^eps."""
    if weight is None:
        weight = WeightSpec()
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    r, w, f = est.radial_rule()
    af = np.abs(f)
    minv = weight.m_inv(r)
    br = weight.bracket(r)
    x_norm = float(np.sum(w * af * minv))
    y_norm = float(np.sum(w * af * br * minv))
    qmom_terms = w * af * br ** (1.0 / eps) * minv
    qmom = float(np.sum(qmom_terms))
    c = qmom ** eps
    bound = c * x_norm ** (1.0 - eps)
    n_top = max(r.size // 10, 1)
    tail_share = float(np.sum(qmom_terms[-n_top:]) / qmom) if qmom > 0 else 0.0
    return {
        "holds": bool(y_norm <= bound * (1 + 1e-12)),
        "margin": float(bound - y_norm),
        "x_norm": x_norm,
        "y_norm": y_norm,
        "constant": c,
        "tail_share": tail_share,
        "inconclusive": tail_share > 0.5,
    }


# --- report ------------------------------------------------------------------

CSV_COLUMNS = ["t", "H", "D", "D_se", "DH", "DH_se", "qlogM", "E",
               "normX_to_M", "normX_to_Falpha"]


@dataclass
class EntropyReport:
    alpha: float
    rows: list = field(default_factory=list)
    fit: LambdaFit | None = None

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(f"{row.get(c, float('nan')):.10g}"
                                  for c in CSV_COLUMNS) + "\n")

    def summary(self) -> dict:
        out = {"alpha": self.alpha, "n_samples": len(self.rows)}
        if self.fit is not None:
            out["lambda"] = self.fit.lam
            out["lambda_se"] = self.fit.lam_se
            out["lambda_ci"] = [self.fit.lam - 3 * self.fit.lam_se,
                                self.fit.lam + 3 * self.fit.lam_se]
            out["plateau"] = self.fit.plateau
            out["plateau_se"] = self.fit.plateau_se
            out["K_hat"] = self.fit.K_hat
            out["fit_ok"] = self.fit.ok
            out["fit_message"] = self.fit.message
        return out

    def to_json(self) -> str:
        return json.dumps({"summary": self.summary(), "rows": self.rows})
