"""Direct-simulation Monte Carlo for a granular gas in a Maxwellian bath.

Two independent Poisson collision channels per time step:

  self: candidate pairs at majorant rate lambda_self per ordered pair
        (n lambda_self dt / 2 candidates), thinned by |v_i - v_j| /
        lambda_self, then transformed inelastically with restitution alpha;
  bath: per-particle candidates at rate lambda_bath, each against a fresh
        Maxwellian partner, thinned by |v_i - w| / lambda_bath, then
        transformed elastically (the partner is discarded).

Both thinnings are exact as long as the majorant dominates the true rate;
if any candidate violates its majorant the whole step is aborted, the
pre-step state restored, the violated majorant inflated, and the step
redrawn from the (already advanced) generator, so a run is a pure function
of its seed.  Within a step, candidates are processed in conflict-free
rounds (no particle touched twice per round) with all random draws taken
up front, which makes the result independent of how the per-round updates
are chunked across workers.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .bath import BathMaxwellian
from .collisions import elastic_bath_transform, inelastic_transform
from .ensemble import Ensemble, random_directions

CHECKPOINT_VERSION = 1


@dataclass
class MajorantConfig:
    """Majorant rates for the two channels, with refresh and inflation rules."""

    safety: float = 1.05
    bath_pad: float = 4.2     # bath partner speeds beyond pad*sqrt(theta) trigger a redraw
    lambda_self: float = 0.0
    lambda_bath: float = 0.0

    def refresh(self, ens: Ensemble, bath: BathMaxwellian) -> None:
        vmax = float(np.max(np.linalg.norm(ens.velocities, axis=1)))
        self.lambda_self = max(self.lambda_self, 2.0 * vmax * self.safety)
        self.lambda_bath = max(self.lambda_bath,
                               vmax * self.safety + self.bath_pad * np.sqrt(bath.theta))

    def inflate(self, channel: str, factor: float = 1.5) -> None:
        if channel == "self":
            self.lambda_self *= factor
        else:
            self.lambda_bath *= factor


@dataclass
class StepReport:
    time: float
    proposed_self: int
    accepted_self: int
    proposed_bath: int
    accepted_bath: int
    aborts: int
    energy: float


class MajorantViolation(Exception):
    def __init__(self, channel: str):
        self.channel = channel


def _conflict_free_rounds_pairs(i: np.ndarray, j: np.ndarray):
    """Partition candidate pairs into rounds where no index repeats.

    Candidates keep their draw order: a pair enters the earliest round in
    which neither endpoint has already been used, which reproduces the
    sequential outcome whenever earlier conflicting candidates are accepted.
    """
    remaining = np.arange(i.size)
    n_top = int(max(i.max(), j.max())) + 1 if i.size else 0
    while remaining.size:
        ir = i[remaining]
        jr = j[remaining]
        pos = np.arange(remaining.size)
        first = np.full(n_top, remaining.size)
        np.minimum.at(first, ir, pos)
        np.minimum.at(first, jr, pos)
        mask = (first[ir] == pos) & (first[jr] == pos)
        yield remaining[mask]
        remaining = remaining[~mask]


def _rank_within_target(targets: np.ndarray) -> np.ndarray:
    """Draw-order rank of each candidate within its target particle's group."""
    k = targets.size
    idx = np.argsort(targets, kind="stable")
    st = targets[idx]
    new = np.ones(k, bool)
    new[1:] = st[1:] != st[:-1]
    gstart = np.maximum.accumulate(np.where(new, np.arange(k), 0))
    ranks = np.empty(k, int)
    ranks[idx] = np.arange(k) - gstart
    return ranks


def _chunks(idx: np.ndarray, n_workers: int):
    if n_workers <= 1 or idx.size <= 1:
        return [idx]
    return np.array_split(idx, min(n_workers, idx.size))


def step(ens: Ensemble, bath: BathMaxwellian, alpha: float, dt: float,
         rng: np.random.Generator, majorants: MajorantConfig,
         n_workers: int = 1, max_retries: int = 25) -> StepReport:
    """Advance the ensemble by dt.  Mutates ens in place."""
    n = ens.n
    snapshot = ens.velocities.copy()
    aborts = 0
    while True:
        majorants.refresh(ens, bath)
        lam_s, lam_b = majorants.lambda_self, majorants.lambda_bath
        m_self = int(rng.poisson(0.5 * n * lam_s * dt))
        if m_self:
            ip = rng.integers(0, n, size=m_self)
            jp = rng.integers(0, n - 1, size=m_self)
            jp = np.where(jp >= ip, jp + 1, jp)
            u_s = rng.random(m_self)
            sig_s = random_directions(rng, m_self)
        m_bath = int(rng.poisson(n * lam_b * dt))
        if m_bath:
            tgt = rng.integers(0, n, size=m_bath)
            w_b = bath.sample(rng, m_bath)
            u_b = rng.random(m_bath)
            sig_b = random_directions(rng, m_bath)
            ranks = _rank_within_target(tgt)
        acc_self = acc_bath = 0
        try:
            v = ens.velocities
            if m_self:
                for round_idx in _conflict_free_rounds_pairs(ip, jp):
                    ri, rj = ip[round_idx], jp[round_idx]
                    nq = np.linalg.norm(v[ri] - v[rj], axis=1)
                    if np.any(nq > lam_s):
                        raise MajorantViolation("self")
                    keep = round_idx[u_s[round_idx] * lam_s < nq]
                    acc_self += keep.size
                    for chunk in _chunks(keep, n_workers):
                        ci, cj = ip[chunk], jp[chunk]
                        vi, vj = inelastic_transform(v[ci], v[cj], sig_s[chunk], alpha)
                        v[ci] = vi
                        v[cj] = vj
            if m_bath:
                for r in range(int(ranks.max()) + 1 if m_bath else 0):
                    round_idx = np.nonzero(ranks == r)[0]
                    ti = tgt[round_idx]
                    nq = np.linalg.norm(v[ti] - w_b[round_idx], axis=1)
                    if np.any(nq > lam_b):
                        raise MajorantViolation("bath")
                    keep = round_idx[u_b[round_idx] * lam_b < nq]
                    acc_bath += keep.size
                    for chunk in _chunks(keep, n_workers):
                        ct = tgt[chunk]
                        v[ct] = elastic_bath_transform(v[ct], w_b[chunk], sig_b[chunk])
            break
        except MajorantViolation as exc:
            ens.velocities[:] = snapshot
            majorants.inflate(exc.channel)
            aborts += 1
            if aborts > max_retries:
                raise RuntimeError("majorant inflation did not stabilize the step")
    ens.time += dt
    return StepReport(time=ens.time, proposed_self=m_self, accepted_self=acc_self,
                      proposed_bath=m_bath, accepted_bath=acc_bath,
                      aborts=aborts, energy=ens.kinetic_energy())


@dataclass
class SimulationResult:
    times: np.ndarray
    energies: np.ndarray
    moments: list
    ensemble: Ensemble
    total_aborts: int = 0

    def trajectory_rows(self) -> list:
        return self.moments


def run(ens: Ensemble, bath: BathMaxwellian, alpha: float, t_end: float,
        dt: float, rng: np.random.Generator, sample_stride: int = 10,
        n_workers: int = 1, majorants: MajorantConfig | None = None,
        callback=None) -> SimulationResult:
    """March the ensemble to t_end, sampling moments every sample_stride steps."""
    if majorants is None:
        majorants = MajorantConfig()
    n_steps = int(round(t_end / dt))
    times = [ens.time]
    energies = [ens.kinetic_energy()]
    moments = [ens.moments()]
    total_aborts = 0
    for k in range(n_steps):
        rep = step(ens, bath, alpha, dt, rng, majorants, n_workers=n_workers)
        total_aborts += rep.aborts
        if (k + 1) % sample_stride == 0 or k == n_steps - 1:
            times.append(ens.time)
            energies.append(rep.energy)
            moments.append(ens.moments())
            if callback is not None:
                callback(ens, rep)
    return SimulationResult(times=np.asarray(times), energies=np.asarray(energies),
                            moments=moments, ensemble=ens, total_aborts=total_aborts)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path: str, ens: Ensemble, rng: np.random.Generator,
                    meta: dict | None = None) -> None:
    """Write a resumable snapshot: velocities (base64, little-endian float64),
    generator state, and caller metadata.  Resuming is bit-identical."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "time": ens.time,
        "n": ens.n,
        "velocities": base64.b64encode(
            np.ascontiguousarray(ens.velocities, dtype="<f8").tobytes()).decode(),
        "rng_state": rng.bit_generator.state,
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str):
    """Read a snapshot; returns (ensemble, generator, meta)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload['version']}")
    raw = base64.b64decode(payload["velocities"])
    v = np.frombuffer(raw, dtype="<f8").reshape(payload["n"], 3).copy()
    ens = Ensemble(velocities=v, time=payload["time"])
    state = payload["rng_state"]
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return ens, np.random.Generator(bitgen), payload["meta"]
