"""Certainty-equivalent (plug-in) baseline with experience replay.

Every episode deploys a deterministic gain drawn around the plug-in optimum
-(B_n + C_n D_n) / D_n^2. Under a fixed gain g the state is a geometric
Brownian motion with drift P = A + B g and volatility R = C + D g, so the
per-episode log-trajectory statistics (P_hat, R_hat^2) regressed on g
recover the model: P is linear in g, R^2 = C^2 + 2CD g + D^2 g^2 quadratic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from rllq import oracle
from rllq.oracle import ModelParams, PolicyParams
from rllq.sde import SeedSpec, Trajectory, derive_stream, simulate_episode_geometric

log = logging.getLogger(__name__)

EPS_D = 1e-6


class RankDeficientError(ValueError):
    """Too few distinct gains in the replay buffer for the requested fit."""


@dataclass(frozen=True)
class EstimatedModel:
    A: float
    B: float
    C: float
    D: float
    n: int = 0

    def plug_in_gain(self) -> float:
        if not self.D > 0:
            raise ValueError(f"D estimate must be positive, got {self.D}")
        return -(self.B + self.C * self.D) / self.D**2


@dataclass
class ReplayBuffer:
    """Append-only store of (gain, P_hat, R_hat^2) triples.

    Besides the raw records it accumulates the power sums needed by the
    least-squares fits, so refitting costs O(1) per episode.
    """

    gains: list = field(default_factory=list)
    p_hat: list = field(default_factory=list)
    r2_hat: list = field(default_factory=list)
    _s: np.ndarray = field(default_factory=lambda: np.zeros(5), repr=False)   # sum g^k, k=0..4
    _sp: np.ndarray = field(default_factory=lambda: np.zeros(2), repr=False)  # sum g^k P, k=0..1
    _sr: np.ndarray = field(default_factory=lambda: np.zeros(3), repr=False)  # sum g^k R2, k=0..2
    _distinct: set = field(default_factory=set, repr=False)

    def __len__(self):
        return len(self.gains)

    def append(self, gain: float, p_hat: float, r2_hat: float) -> None:
        self.gains.append(gain)
        self.p_hat.append(p_hat)
        self.r2_hat.append(r2_hat)
        powers = gain ** np.arange(5)
        self._s += powers
        self._sp += p_hat * powers[:2]
        self._sr += r2_hat * powers[:3]
        if len(self._distinct) < 3:
            self._distinct.add(gain)

    @property
    def n_distinct(self) -> int:
        """Number of distinct gains, saturating at 3."""
        return len(self._distinct)


def sample_gain(est: EstimatedModel, n: int, rng: np.random.Generator) -> float:
    """Draw the episode gain from N(plug-in gain, 1 / (n + 1))."""
    return est.plug_in_gain() + math.sqrt(1.0 / (n + 1)) * rng.standard_normal()


def estimate_P_R(traj: Trajectory) -> tuple[float, float]:
    """Log-drift and squared log-volatility estimates from one trajectory."""
    if traj.log_states is not None:
        logs = traj.log_states
    else:
        if np.any(traj.states <= 0):
            raise ValueError("P/R estimation needs strictly positive states")
        logs = np.log(traj.states)
    T = traj.times[-1] - traj.times[0]
    inc = np.diff(logs)
    return float((logs[-1] - logs[0]) / T), float(inc @ inc / T)


def drift_record(p_hat: float, r2_hat: float, ito_correction: bool = True) -> float:
    """Value stored as the drift observation in the replay buffer.

    ``p_hat`` is the mean log-growth, whose expectation is P - R^2 / 2. With
    ``ito_correction`` the R_hat^2 / 2 term is added back so the linear
    regression on the gain targets A + B g itself.
    """
    return p_hat + 0.5 * r2_hat if ito_correction else p_hat


def _solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError(str(exc)) from None


def fit_drift(buffer: ReplayBuffer) -> tuple[float, float]:
    """OLS of P_hat on (1, g): returns (A, B)."""
    if buffer.n_distinct < 2:
        raise RankDeficientError("drift fit needs at least 2 distinct gains")
    s = buffer._s
    coef = _solve(np.array([[s[0], s[1]], [s[1], s[2]]]), buffer._sp)
    return float(coef[0]), float(coef[1])


def diffusion_coefficients(buffer: ReplayBuffer) -> tuple[float, float, float]:
    """OLS of R_hat^2 on (1, g, g^2): returns (c0, c1, c2)."""
    if buffer.n_distinct < 3:
        raise RankDeficientError("diffusion fit needs at least 3 distinct gains")
    s = buffer._s
    gram = np.array([[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]])
    c0, c1, c2 = _solve(gram, buffer._sr)
    return float(c0), float(c1), float(c2)


def recover_diffusion(c1: float, c2: float, eps_d: float = EPS_D) -> tuple[float, float]:
    """Map quadratic coefficients (2CD, D^2) back to (C, D > 0)."""
    D = math.sqrt(max(c2, eps_d))
    return c1 / (2 * D), D


def fit_diffusion(buffer: ReplayBuffer, eps_d: float = EPS_D) -> tuple[float, float]:
    """Quadratic regression of R_hat^2 on g, then (C, D) recovery."""
    _, c1, c2 = diffusion_coefficients(buffer)
    return recover_diffusion(c1, c2, eps_d)


@dataclass
class BaselineRecords:
    """Per-episode output of one baseline replication (episodes 1..N).

    ``phi1`` is the plug-in point estimate the episode's gain was drawn
    around; ``sampled_gain`` is what was actually deployed.
    """

    episode: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    sampled_gain: np.ndarray
    regret_increment: np.ndarray
    sq_error: np.ndarray
    sq_error_sampled: np.ndarray
    bootstrap_gains: tuple = ()
    bootstrap_stats: tuple = ()
    estimates: list = field(default_factory=list)
    flagged: int = 0
    buffer_size: int = 0

    def __len__(self):
        return len(self.episode)


def _episode_regret(model: ModelParams, best: float, gain: float) -> float:
    try:
        return best - oracle.jbar(model, PolicyParams(gain, 0.0))
    except OverflowError:
        return math.inf


def run_replication_baseline(config, seed: SeedSpec, keep_estimates: bool = False) -> BaselineRecords:
    """Run the plug-in baseline for ``config.run.episodes`` episodes.

    Two bootstrap episodes at fixed distinct gains seed the replay buffer;
    the diffusion fit starts once three distinct gains have been seen.
    """
    model: ModelParams = config.model
    bc = config.baseline
    N, dt = config.run.episodes, config.run.dt
    rng = derive_stream(seed)
    phi_star = oracle.optimal_gain(model)
    best = oracle.jbar(model, PolicyParams(phi_star, 0.0))

    buffer = ReplayBuffer()
    A, B, C, D = bc.A0, bc.B0, bc.C0, bc.D0
    boot_gains = (bc.bootstrap_gain_1, bc.bootstrap_gain_2)
    boot_stats = []
    for g in boot_gains:
        stats = estimate_P_R(simulate_episode_geometric(model, g, dt, rng))
        buffer.append(g, drift_record(*stats, bc.ito_correction), stats[1])
        boot_stats.append(stats)
    A, B = fit_drift(buffer)

    out = BaselineRecords(
        episode=np.arange(1, N + 1),
        phi1=np.empty(N),
        phi2=np.zeros(N),
        sampled_gain=np.empty(N),
        regret_increment=np.empty(N),
        sq_error=np.empty(N),
        sq_error_sampled=np.empty(N),
        bootstrap_gains=boot_gains,
        bootstrap_stats=tuple(boot_stats),
    )
    for i in range(N):
        n = i + 1
        est = EstimatedModel(A, B, C, D, n)
        point = est.plug_in_gain()
        gain = sample_gain(est, n, rng)
        out.phi1[i] = point
        out.sampled_gain[i] = gain
        out.sq_error[i] = (point - phi_star) ** 2
        out.sq_error_sampled[i] = (gain - phi_star) ** 2
        out.regret_increment[i] = _episode_regret(model, best, gain)

        p_hat, r2_hat = estimate_P_R(simulate_episode_geometric(model, gain, dt, rng))
        if not (math.isfinite(p_hat) and math.isfinite(r2_hat)):
            out.flagged += 1
            log.warning("episode %d: non-finite estimates for gain %g, skipped", n, gain)
            continue
        buffer.append(gain, drift_record(p_hat, r2_hat, bc.ito_correction), r2_hat)
        A, B = fit_drift(buffer)
        # A curvature at or below eps_d would put D at its clamp and the
        # plug-in gain near -B / eps_d; keep the previous (C, D) instead.
        try:
            _, c1, c2 = diffusion_coefficients(buffer)
        except RankDeficientError:
            continue
        if c2 > bc.eps_d:
            C, D = recover_diffusion(c1, c2, bc.eps_d)
        if keep_estimates:
            out.estimates.append(EstimatedModel(A, B, C, D, n))
    out.buffer_size = len(buffer)
    return out
