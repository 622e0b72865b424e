"""Dense discretizations of the linearized collision operators.

Everything here acts on the isotropic sector: a state is a vector of
radial density values on a RadialGrid, and operators are n x n matrices
whose columns respond to nodal hat perturbations.  Gain terms are
assembled from closed-form shell reductions of the collision kernels;
loss diagonals are forced to the weighted column sums of the gains so
that every generator conserves mass to machine precision and keeps its
stationary state as an exact discrete zero mode.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bath import BathMaxwellian, collision_frequency_closed_form, pair_speed_shell_average
from .density import DensityEstimate
from .grid import RadialGrid
from .kernels import KernelConstants, calibrate_carleman
from .weights import WeightSpec

OPERATOR_TAGS = ("L", "T_alpha", "L_alpha", "A_alpha", "B_alpha")

TENSOR_CACHE_VERSION = 1


# --- container ---------------------------------------------------------------

@dataclass
class OperatorMatrix:
    matrix: np.ndarray
    grid: RadialGrid
    tag: str
    alpha: float
    weights: WeightSpec = field(default_factory=WeightSpec)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (self.grid.n, self.grid.n):
            raise ValueError("matrix shape does not match grid")
        if self.tag not in OPERATOR_TAGS:
            raise ValueError("unknown operator tag %r" % self.tag)

    @property
    def n(self) -> int:
        return self.grid.n

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=float)

    def column_mass(self) -> np.ndarray:
        return self.grid.w @ self.matrix

    def norm_x(self) -> float:
        """Operator norm on the weighted-l1 X space (max weighted column sum)."""
        xw = self.weights.x_weights(self.grid.r, self.grid.w)
        return float(np.max((xw @ np.abs(self.matrix)) / xw))

    def norm_y_to_x(self) -> float:
        xw = self.weights.x_weights(self.grid.r, self.grid.w)
        yw = self.weights.y_weights(self.grid.r, self.grid.w)
        return float(np.max((xw @ np.abs(self.matrix)) / yw))

    # --- binary export --------------------------------------------------------

    def save(self, base_path: str) -> dict:
        """Write <base>.bin (row-major float64, little endian) and a JSON sidecar."""
        data = np.ascontiguousarray(self.matrix, dtype="<f8")
        raw = data.tobytes()
        sidecar = {
            "shape": list(data.shape),
            "dtype": "<f8",
            "order": "C",
            "tag": self.tag,
            "alpha": float(self.alpha),
            "grid": self.grid.params(),
            "weight_a": float(self.weights.a),
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
        with open(base_path + ".bin", "wb") as fh:
            fh.write(raw)
        with open(base_path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return sidecar

    @classmethod
    def load(cls, base_path: str) -> "OperatorMatrix":
        with open(base_path + ".json") as fh:
            sidecar = json.load(fh)
        with open(base_path + ".bin", "rb") as fh:
            raw = fh.read()
        if hashlib.sha256(raw).hexdigest() != sidecar["sha256"]:
            raise ValueError("operator payload does not match sidecar checksum")
        n, m = sidecar["shape"]
        mat = np.frombuffer(raw, dtype="<f8").reshape(n, m).astype(float)
        gp = sidecar["grid"]
        x, gw = np.polynomial.legendre.leggauss(int(gp["n"]))
        r = 0.5 * gp["r_max"] * (x + 1.0)
        w = 0.5 * gp["r_max"] * gw * 4.0 * np.pi * r**2
        grid = RadialGrid(r=r, w=w, r_max=float(gp["r_max"]))
        return cls(matrix=mat, grid=grid, tag=sidecar["tag"],
                   alpha=float(sidecar["alpha"]),
                   weights=WeightSpec(a=float(sidecar.get("weight_a", 0.5))))


# --- state plumbing ----------------------------------------------------------

def state_values(F, grid: RadialGrid) -> np.ndarray:
    """Radial values of a state on the grid nodes.

    Accepts a BathMaxwellian, a DensityEstimate, or a plain nodal array.
    """
    if isinstance(F, BathMaxwellian):
        return F.radial_density(grid.r)
    if isinstance(F, DensityEstimate):
        return F.radial_values(grid.r)
    vals = np.asarray(F, dtype=float)
    if vals.shape != grid.r.shape:
        raise ValueError("nodal state has wrong length for this grid")
    return vals


def _require_tail(F):
    if not hasattr(F, "radial_tail"):
        raise TypeError("state must expose radial_tail (BathMaxwellian or "
                        "DensityEstimate); got %r" % type(F).__name__)
    return F.radial_tail


def shell_speed_matrix(grid: RadialGrid) -> np.ndarray:
    """D_ij = spherical average of |v - w| at speeds (r_i, r_j)."""
    R, P = np.meshgrid(grid.r, grid.r, indexing="ij")
    return pair_speed_shell_average(R, P)


def sigma_state(grid: RadialGrid, F) -> np.ndarray:
    """Collision frequency against the state F at the grid nodes."""
    vals = state_values(F, grid)
    return shell_speed_matrix(grid) @ (grid.w * vals)


def sigma_bath_nodes(grid: RadialGrid, bath: BathMaxwellian) -> np.ndarray:
    v = bath.u0 + grid.r[:, None] * np.array([1.0, 0.0, 0.0])
    return np.asarray(collision_frequency_closed_form(v, bath), dtype=float)


# --- gain matrices -----------------------------------------------------------

def scattering_gain_matrix(grid: RadialGrid, constants: KernelConstants,
                           n_s: int = 64) -> np.ndarray:
    """Gain part of the bath scattering operator on radial states.

    The angular average over the direction of w reduces, with the pair
    speed s = |v - w| as variable, to a nonsingular one-dimensional
    integral per (i, j): the 1/s kernel prefactor cancels against the
    Jacobian s ds = -r rho d(cos).
    """
    xs, xw = np.polynomial.legendre.leggauss(int(n_s))
    R, P = np.meshgrid(grid.r, grid.r, indexing="ij")
    lo, hi = np.abs(R - P), R + P
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    S = mid[..., None] + half[..., None] * xs
    delta = (R**2 - P**2)[..., None]
    inner = (np.exp(-constants.beta0 * (S + delta / S) ** 2) * xw).sum(-1) * half
    return (2.0 * np.pi * constants.C0 / (R * P) * inner) * grid.w[None, :] / (4.0 * np.pi)


def carleman_gain_matrix(grid: RadialGrid, alpha: float, F,
                         constants: KernelConstants, n_s: int = 64) -> np.ndarray:
    """First-slot gain: response at node r_i to a unit hat at r_j colliding
    into the background state F, via the plane-integral kernel reduction.
    """
    try:
        c_alpha = constants.carleman_value(alpha)
    except KeyError:
        calibrate_carleman(constants, alpha)
        c_alpha = constants.carleman_value(alpha)
    tail = _require_tail(F)
    xs, xw = np.polynomial.legendre.leggauss(int(n_s))
    R, P = np.meshgrid(grid.r, grid.r, indexing="ij")
    lo, hi = np.abs(R - P), R + P
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    S = mid[..., None] + half[..., None] * xs
    b = (R**2 - P**2)[..., None] / (2.0 * S) + (3.0 - alpha) / (2.0 * (1.0 + alpha)) * S
    inner = (tail(np.abs(b)) * xw).sum(-1) * half
    return (2.0 * np.pi * c_alpha / (R * P) * inner) * grid.w[None, :] / (4.0 * np.pi)


def hat_antiderivatives(u: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Phi_i(u) = int_0^u t phi_i(t) dt for the nodal hat basis phi_i.

    The first (last) hat extends flat to 0 (to infinity), so the basis is a
    partition of unity and sum_i Phi_i(u) = u^2 / 2 exactly.
    """
    nodes = np.asarray(nodes, float)
    n = nodes.size
    left = np.concatenate(([0.0], nodes[:-1]))
    right = np.concatenate((nodes[1:], [np.inf]))
    u = np.asarray(u, float)[..., None]
    c, lft, rgt = nodes, left, right
    idx = np.arange(n)
    ua = np.clip(u, lft, c)
    asc = np.where(idx == 0, 0.5 * ua**2,
                   (ua**3 / 3.0 - lft * ua**2 / 2.0 + lft**3 / 6.0)
                   / np.where(c - lft == 0, 1.0, c - lft))
    ud = np.clip(u, c, rgt)
    gf = np.where(np.isinf(rgt), 0.0, rgt)
    desc = np.where(idx == n - 1, 0.5 * (ud**2 - c**2),
                    (gf * ud**2 / 2.0 - ud**3 / 3.0 - (gf * c**2 / 2.0 - c**3 / 3.0))
                    / np.where(np.isinf(rgt), 1.0, rgt - c))
    return asc + desc


def gain_tensor(grid: RadialGrid, alpha: float, n_s: int = 24,
                cache_dir: str | None = None, entry_tol: float = 1e-6) -> np.ndarray:
    """Isotropic gain tensor T[i, l, j]: deposit into hat i per unit pair
    density at speeds (r_l, r_j), for the inelastic self-collision gain.

    Post-collision speeds at fixed pair geometry are uniform in the square
    of the speed, which turns the spherical quadrature into exact hat-basis
    antiderivative differences; only the pair-angle integral is numerical.
    Conservation: sum_i T[i, l, j] equals the shell-averaged pair speed.
    """
    if cache_dir is not None:
        cached = _tensor_cache_load(grid, alpha, n_s, cache_dir)
        if cached is not None:
            return cached
    r = grid.r
    n = r.size
    c = (1.0 + alpha) / 4.0
    xs, xw = np.polynomial.legendre.leggauss(int(n_s))
    T = np.zeros((n, n, n))
    for l in range(n):
        rl = r[l]
        lo, hi = np.abs(rl - r), rl + r
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        S = mid[:, None] + half[:, None] * xs
        A2 = (1.0 - c) * rl**2 + c * r[:, None] ** 2 - c * (1.0 - c) * S**2
        A = np.sqrt(np.maximum(A2, 0.0))
        up = A + c * S
        um = np.abs(A - c * S)
        dphi = hat_antiderivatives(up, r) - hat_antiderivatives(um, r)
        integ = S[..., None] * dphi / (2.0 * c * np.maximum(A, 1e-300)[..., None])
        Tl = (integ * xw[None, :, None]).sum(1) * half[:, None]
        T[:, l, :] = (Tl / (2.0 * rl * r[:, None])).T
    if cache_dir is not None:
        _tensor_cache_store(T, grid, alpha, n_s, cache_dir, entry_tol)
    return T


def _tensor_key(grid: RadialGrid, alpha: float, n_s: int) -> str:
    blob = json.dumps({"n": grid.n, "r_max": "%.17g" % grid.r_max,
                       "alpha": "%.17g" % alpha, "n_s": int(n_s),
                       "version": TENSOR_CACHE_VERSION}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _tensor_cache_load(grid, alpha, n_s, cache_dir):
    base = os.path.join(cache_dir, "gain_tensor_%s" % _tensor_key(grid, alpha, n_s))
    try:
        with open(base + ".json") as fh:
            meta = json.load(fh)
        with open(base + ".npy", "rb") as fh:
            raw = fh.read()
        if hashlib.sha256(raw).hexdigest() != meta["sha256"]:
            warnings.warn("gain tensor cache checksum mismatch; rebuilding")
            return None
        return np.load(base + ".npy")
    except (OSError, KeyError, ValueError):
        return None


def _tensor_cache_store(T, grid, alpha, n_s, cache_dir, entry_tol):
    os.makedirs(cache_dir, exist_ok=True)
    base = os.path.join(cache_dir, "gain_tensor_%s" % _tensor_key(grid, alpha, n_s))
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".npy")
    os.close(fd)
    np.save(tmp, T)
    with open(tmp, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    os.replace(tmp, base + ".npy")
    meta = {"version": TENSOR_CACHE_VERSION, "n": grid.n, "r_max": grid.r_max,
            "alpha": float(alpha), "n_s": int(n_s), "entry_tol": entry_tol,
            "sha256": digest,
            "method": "closed-form shell reduction, Gauss-Legendre pair angle"}
    with open(base + ".json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def deposit_gain_matrix(grid: RadialGrid, alpha: float, F,
                        tensor: np.ndarray | None = None, n_s: int = 24,
                        cache_dir: str | None = None) -> np.ndarray:
    """Second-slot gain: columns are the weak-form response of the
    self-collision gain to nodal hats, with F frozen in the first slot.
    """
    if tensor is None:
        tensor = gain_tensor(grid, alpha, n_s=n_s, cache_dir=cache_dir)
    vals = state_values(F, grid)
    K2 = np.einsum("ilj,l->ij", tensor, grid.w * vals)
    return K2 / grid.w[:, None] * grid.w[None, :]


def rank_loss_matrix(grid: RadialGrid, F) -> np.ndarray:
    """Loss channel where the state F is removed by collisions with the
    perturbation: F(r_i) times the shell-averaged pair speed row.
    """
    vals = state_values(F, grid)
    return vals[:, None] * (grid.w[None, :] * shell_speed_matrix(grid))


# --- assembled operators -----------------------------------------------------

def _resolve_route(route: str, alpha: float) -> str:
    if route == "auto":
        return "exact" if alpha == 1.0 else "deposit"
    if route == "exact" and alpha != 1.0:
        raise ValueError("exact route is only valid at alpha=1 where both "
                         "gain slots coincide")
    if route not in ("exact", "deposit"):
        raise ValueError("unknown route %r" % route)
    return route


def _gain_parts(grid, F, alpha, constants, route, n_s, n_s_tensor, cache_dir):
    K1 = carleman_gain_matrix(grid, alpha, F, constants, n_s=n_s)
    if route == "exact":
        K2 = K1.copy()
    else:
        K2 = deposit_gain_matrix(grid, alpha, F, n_s=n_s_tensor, cache_dir=cache_dir)
    K3 = rank_loss_matrix(grid, F)
    return K1, K2, K3


def _flag_columns(matrix, grid, flags, scale):
    colmass = grid.w @ matrix
    worst = float(np.max(np.abs(colmass)))
    flags["column_mass_max"] = worst
    bad = np.flatnonzero(np.abs(colmass) > 1e-8 * max(scale, 1.0))
    if bad.size:
        flags["flagged_columns"] = bad.tolist()
    return flags


def assemble_L(grid: RadialGrid, constants: KernelConstants, n_s: int = 64,
               weights: WeightSpec | None = None) -> OperatorMatrix:
    """Bath scattering generator: gain matrix minus the conservative loss
    diagonal (weighted column sums of the gain).

    Forcing the diagonal to the discrete gain mass keeps the columns at
    exactly zero mass and makes the discretized bath Maxwellian a zero
    mode to rounding accuracy; the diagonal agrees with the closed-form
    collision frequency away from the truncation edge.
    """
    weights = weights or WeightSpec()
    K = scattering_gain_matrix(grid, constants, n_s=n_s)
    sig_hat = (grid.w @ K) / grid.w
    L = K - np.diag(sig_hat)
    op = OperatorMatrix(matrix=L, grid=grid, tag="L", alpha=1.0, weights=weights)
    bath = BathMaxwellian(theta=constants.theta, u0=np.asarray(constants.u0))
    mvals = bath.radial_density(grid.r)
    scale = op.norm_x()
    resid = float(np.sum(np.abs(L @ mvals) * weights.x_weights(grid.r, grid.w)))
    xnorm_m = float(np.sum(mvals * weights.x_weights(grid.r, grid.w)))
    rel = resid / (scale * xnorm_m)
    op.flags["zero_mode_residual"] = rel
    _flag_columns(L, grid, op.flags, scale)
    if rel > 1e-6:
        op.flags["zero_mode_flagged"] = True
        warnings.warn("scattering generator zero-mode residual %.2e above 1e-6" % rel)
    return op


def assemble_T_alpha(grid: RadialGrid, F, alpha: float,
                     constants: KernelConstants, route: str = "auto",
                     n_s: int = 64, n_s_tensor: int = 24,
                     cache_dir: str | None = None,
                     weights: WeightSpec | None = None) -> OperatorMatrix:
    """Linearized self-collision operator around the state F.

    Gain = first-slot kernel matrix + second-slot hat deposits; loss =
    rank-structured removal of F plus a conservative diagonal, so that
    columns carry exactly zero mass.
    """
    weights = weights or WeightSpec()
    route = _resolve_route(route, alpha)
    K1, K2, K3 = _gain_parts(grid, F, alpha, constants, route, n_s, n_s_tensor, cache_dir)
    diag = (grid.w @ (K1 + K2 - K3)) / grid.w
    T = K1 + K2 - K3 - np.diag(diag)
    op = OperatorMatrix(matrix=T, grid=grid, tag="T_alpha", alpha=float(alpha),
                        weights=weights)
    op.flags["route"] = route
    _flag_columns(T, grid, op.flags, op.norm_x())
    return op


def assemble_L_alpha(grid: RadialGrid, F, alpha: float,
                     constants: KernelConstants, route: str = "auto",
                     n_s: int = 64, n_s_tensor: int = 24,
                     cache_dir: str | None = None,
                     weights: WeightSpec | None = None,
                     check_zero_mode: bool = True) -> OperatorMatrix:
    """Full linearized generator: self-collision part plus bath scattering."""
    weights = weights or WeightSpec()
    T = assemble_T_alpha(grid, F, alpha, constants, route=route, n_s=n_s,
                         n_s_tensor=n_s_tensor, cache_dir=cache_dir, weights=weights)
    L = assemble_L(grid, constants, n_s=n_s, weights=weights)
    op = OperatorMatrix(matrix=T.matrix + L.matrix, grid=grid, tag="L_alpha",
                        alpha=float(alpha), weights=weights)
    op.flags["route"] = T.flags["route"]
    scale = op.norm_x()
    _flag_columns(op.matrix, grid, op.flags, scale)
    if check_zero_mode:
        lam = np.linalg.eigvals(op.matrix)
        lam0 = lam[np.argmin(np.abs(lam))]
        op.flags["lambda0"] = abs(complex(lam0))
        if abs(lam0) > 1e-8 * max(scale, 1.0):
            op.flags["structural_failure"] = True
            warnings.warn("no eigenvalue near zero (|lambda0|=%.2e); generator "
                          "lost its stationary mode" % abs(lam0))
    return op


def assemble_splitting(grid: RadialGrid, F, alpha: float,
                       constants: KernelConstants, R: float,
                       route: str = "auto", n_s: int = 64, n_s_tensor: int = 24,
                       cache_dir: str | None = None,
                       weights: WeightSpec | None = None):
    """Split the generator into A + B where B keeps only gain columns with
    source speed beyond R plus the full loss diagonal.

    B is the candidate dissipative part; A carries the near-source gain
    columns and the rank-structured loss. R must lie inside the grid.
    """
    weights = weights or WeightSpec()
    if not (grid.r[0] < R < grid.r[-1]):
        raise ValueError("cutoff R=%g outside the grid speed range (%g, %g)"
                         % (R, grid.r[0], grid.r[-1]))
    route = _resolve_route(route, alpha)
    K1, K2, K3 = _gain_parts(grid, F, alpha, constants, route, n_s, n_s_tensor, cache_dir)
    Kb = scattering_gain_matrix(grid, constants, n_s=n_s)
    gains = Kb + K1 + K2
    diag = (grid.w @ (gains - K3)) / grid.w
    L_full = gains - K3 - np.diag(diag)
    far = grid.r > R
    B = np.zeros_like(L_full)
    B[:, far] = gains[:, far]
    # the diagonal of B is exactly the negated loss rate; far-column gain
    # diagonal entries stay with A
    B[np.arange(grid.n), np.arange(grid.n)] = -diag
    A = L_full - B
    wa = weights
    opA = OperatorMatrix(matrix=A, grid=grid, tag="A_alpha", alpha=float(alpha), weights=wa)
    opB = OperatorMatrix(matrix=B, grid=grid, tag="B_alpha", alpha=float(alpha), weights=wa)
    opA.flags["R"] = float(R)
    opB.flags["R"] = float(R)
    opB.flags["route"] = route
    return opA, opB


# --- dissipativity -----------------------------------------------------------

@dataclass
class DissipativityReport:
    beta_star: float
    R: float
    alpha: float
    coordinate_margins: np.ndarray
    family_margins: dict
    worst_margin: float
    passed: bool
    message: str = ""

    def to_json(self) -> str:
        payload = {
            "beta_star": self.beta_star, "R": self.R, "alpha": self.alpha,
            "family_margins": {k: float(v) for k, v in self.family_margins.items()},
            "worst_margin": self.worst_margin, "passed": self.passed,
            "message": self.message,
            "coordinate_margin_min": float(np.min(self.coordinate_margins)),
        }
        return json.dumps(payload, indent=1, sort_keys=True)


def beta_star_default(grid: RadialGrid, bath: BathMaxwellian, F,
                      weights: WeightSpec | None = None,
                      factor: float = 0.9) -> float:
    """0.9 times the sum of the discrete infima of the two loss slopes
    Sigma(r)/<r> and sigma_F(r)/<r> over the grid.
    """
    weights = weights or WeightSpec()
    br = weights.bracket(grid.r)
    slope_bath = sigma_bath_nodes(grid, bath) / br
    slope_state = sigma_state(grid, F) / br
    return float(factor * (slope_bath.min() + slope_state.min()))


def dissipativity_check(B: OperatorMatrix, weights: WeightSpec | None = None,
                        beta_star: float = 1.0, rng=None,
                        n_signs: int = 40, n_smooth: int = 60) -> DissipativityReport:
    """Measure the worst decay margin of B over a test battery.

    For each test vector f the discrete form sum_i sign(f_i) (Bf)_i x_i
    must stay below -beta_star * ||f||_Y; the margin is the gap divided
    by ||f||_Y.  The battery covers all coordinate vectors, random sign
    vectors, and random smooth bump mixtures.
    """
    weights = weights or B.weights
    if rng is None:
        rng = np.random.default_rng(1234)
    grid = B.grid
    xw = weights.x_weights(grid.r, grid.w)
    yw = weights.y_weights(grid.r, grid.w)
    mat = B.matrix

    def margin(f):
        s = np.sign(f)
        val = float(np.sum(s * (mat @ f) * xw))
        ynorm = float(np.sum(np.abs(f) * yw))
        return -val / ynorm - beta_star

    coord = -np.diag(mat) * xw / yw - beta_star
    sign_margins = [margin(rng.choice([-1.0, 1.0], grid.n)) for _ in range(n_signs)]
    smooth_margins = []
    for _ in range(n_smooth):
        f = np.zeros(grid.n)
        for _k in range(int(rng.integers(2, 5))):
            mu = rng.uniform(0.0, grid.r_max)
            sd = rng.uniform(grid.r_max / 64.0, grid.r_max / 10.0)
            f += rng.normal() * np.exp(-((grid.r - mu) ** 2) / (2.0 * sd * sd))
        smooth_margins.append(margin(f))
    family = {"coordinate": float(coord.min()),
              "signs": float(min(sign_margins)),
              "smooth": float(min(smooth_margins))}
    worst = min(family.values())
    passed = worst > 0.0
    msg = ""
    if not passed:
        msg = ("worst margin %.4f <= 0: increase the cutoff R (and widen the "
               "grid or strengthen the weight rate a if R is already near "
               "the edge)" % worst)
    return DissipativityReport(
        beta_star=float(beta_star), R=float(B.flags.get("R", np.nan)),
        alpha=B.alpha, coordinate_margins=coord, family_margins=family,
        worst_margin=float(worst), passed=passed, message=msg)


def calibrate_splitting(grid: RadialGrid, F, alpha: float,
                        constants: KernelConstants, bath: BathMaxwellian,
                        weights: WeightSpec | None = None, route: str = "auto",
                        beta_star: float | None = None,
                        n_s: int = 64, n_s_tensor: int = 24,
                        cache_dir: str | None = None, rng=None):
    """Scan the cutoff R upward until the dissipativity battery passes.

    Returns (R, beta_star, report, (A, B)).  Raises if no cutoff inside
    the grid passes, with guidance to enlarge the grid and weight rate.
    """
    weights = weights or WeightSpec()
    if beta_star is None:
        beta_star = beta_star_default(grid, bath, F, weights)
    candidates = grid.r[(grid.r > 0.4 * grid.r_max) & (grid.r < 0.92 * grid.r_max)]
    candidates = candidates[::4] if candidates.size > 8 else candidates
    last_report = None
    for R in candidates:
        Rmid = float(R) + 1e-9  # cut strictly between nodes
        A, B = assemble_splitting(grid, F, alpha, constants, Rmid, route=route,
                                  n_s=n_s, n_s_tensor=n_s_tensor,
                                  cache_dir=cache_dir, weights=weights)
        report = dissipativity_check(B, weights, beta_star, rng=rng)
        last_report = report
        if report.passed:
            return Rmid, beta_star, report, (A, B)
    detail = "" if last_report is None else " (last worst margin %.4f)" % last_report.worst_margin
    raise RuntimeError("no cutoff R inside the grid passes the dissipativity "
                       "battery%s; enlarge r_max and/or the weight rate a" % detail)
