"""Model-free actor-critic learner for the LQ problem (RL-LQ).

Each episode samples actions from N(phi1 x, phi2_n), then moves phi1 along
a discretized policy-gradient sum (score times temporal-difference
residual) and projects back onto the admissible gain interval. The
exploration variance phi2_n = 1 / b_n is a deterministic schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numba
import numpy as np

from rllq import oracle
from rllq.oracle import CriticParams, ModelParams, PolicyParams
from rllq.sde import SeedSpec, Trajectory, derive_stream, n_steps_for, simulate_episode_rllq


@dataclass(frozen=True)
class Schedule:
    """Learning-rate, exploration and projection schedules.

    ``theoretical`` uses a_n = 1 ^ (alpha/(n+beta))^(3/4),
    b_n = 1 v ((n+beta)/alpha)^(1/4) and the growing interval
    [-c_{1,n}, c_{1,n}]. ``experimental`` uses a_coeff/(n+1)^a_exp,
    b_coeff (n+1)^b_exp and the fixed interval [projection_lo, projection_hi].
    """

    mode: Literal["theoretical", "experimental"] = "experimental"
    alpha: float = 1.0
    beta: float = 1.0
    a_coeff: float = 0.05
    a_exp: float = 0.75
    b_coeff: float = 0.2
    b_exp: float = 0.25
    projection_lo: float = -2.2
    projection_hi: float = -0.5

    def __post_init__(self):
        if self.mode not in ("theoretical", "experimental"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        for name in ("alpha", "beta", "a_coeff", "a_exp", "b_coeff", "b_exp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.projection_lo > self.projection_hi:
            raise ValueError("projection_lo must not exceed projection_hi")

    def learning_rate(self, n):
        n = np.asarray(n, dtype=float)
        if self.mode == "theoretical":
            return np.minimum(1.0, self.alpha**0.75 / (n + self.beta) ** 0.75)
        return self.a_coeff / (n + 1.0) ** self.a_exp

    def exploration_b(self, n):
        n = np.asarray(n, dtype=float)
        if self.mode == "theoretical":
            return np.maximum(1.0, (n + self.beta) ** 0.25 / self.alpha**0.25)
        return self.b_coeff * (n + 1.0) ** self.b_exp

    def interval(self, n: int) -> tuple[float, float]:
        """Projection interval for phi1 at episode ``n``."""
        if self.mode == "theoretical":
            c = projection_bound(n)
            return -c, c
        return self.projection_lo, self.projection_hi


def projection_bound(n: int) -> float:
    """c_{1,n} = 1 v (log log n)^(1/6); equals 1 wherever log log n <= 1."""
    if n <= math.e:
        return 1.0
    return max(1.0, math.log(math.log(n)) ** (1.0 / 6.0))


def schedule_values(sched: Schedule, n: int) -> tuple[float, float, float, float]:
    """(a_n, b_n, phi2_n, c_{1,n}) with phi2_n = 1 / b_n."""
    a_n = float(sched.learning_rate(n))
    b_n = float(sched.exploration_b(n))
    return a_n, b_n, 1.0 / b_n, projection_bound(n)


def project_interval(y: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    return min(hi, max(lo, y))


def score_phi1(u: float, x: float, policy: PolicyParams) -> float:
    """d/dphi1 of log N(u | phi1 x, phi2)."""
    if not policy.phi2 > 0:
        raise ValueError("score requires phi2 > 0")
    return (u - policy.phi1 * x) * x / policy.phi2


def critic_value(critic: CriticParams, t, x):
    return -0.5 * critic.k1(t) * x**2 + critic.k3(t)


def td_residual(traj: Trajectory, k: int, critic: CriticParams, Q: float, gamma: float, phi2: float) -> float:
    """Temporal-difference residual on step k of ``traj``."""
    if not 0 <= k < traj.n_steps:
        raise IndexError(f"step {k} outside trajectory of {traj.n_steps} steps")
    t0, t1 = traj.times[k], traj.times[k + 1]
    x0, x1 = traj.states[k], traj.states[k + 1]
    p = oracle.entropy(phi2) if gamma != 0 else 0.0
    dJ = float(critic_value(critic, t1, x1) - critic_value(critic, t0, x0))
    return dJ - 0.5 * Q * x0**2 * traj.dt + gamma * p * traj.dt


@numba.njit(cache=True)
def _td_sums(states, actions, k1, k3, tau, Q, entropy_dt, phi1, phi2, dt):
    # Returns (sum score*delta, sum -x^2/2*delta, sum (T-t)*delta).
    m = actions.shape[0]
    actor = 0.0
    c1 = 0.0
    c2 = 0.0
    for k in range(m):
        x = states[k]
        xn = states[k + 1]
        delta = (-0.5 * k1[k + 1] * xn * xn + k3[k + 1]) - (-0.5 * k1[k] * x * x + k3[k])
        delta += -0.5 * Q * x * x * dt + entropy_dt
        actor += (actions[k] - phi1 * x) * x / phi2 * delta
        c1 += -0.5 * x * x * delta
        c2 += tau[k] * delta
    return actor, c1, c2


def _sums(traj, k1_grid, k3_grid, T, Q, gamma, policy):
    n = len(traj.states)
    p = oracle.entropy(policy.phi2) if gamma != 0 else 0.0
    return _td_sums(
        traj.states, traj.actions, k1_grid[:n], k3_grid[:n], T - traj.times,
        float(Q), gamma * p * traj.dt, float(policy.phi1), float(policy.phi2), float(traj.dt),
    )


def _critic_grid(critic: CriticParams, times: np.ndarray):
    k1 = np.broadcast_to(np.asarray(critic.k1(times), dtype=float), times.shape)
    k3 = np.broadcast_to(np.asarray(critic.k3(times), dtype=float), times.shape)
    return np.ascontiguousarray(k1), np.ascontiguousarray(k3)


def actor_gradient(traj: Trajectory, critic: CriticParams, policy: PolicyParams, gamma: float, Q: float, T: float | None = None) -> float:
    """Discretized policy-gradient increment Z_1 for one episode.

    The entropy of N(phi1 x, phi2) does not depend on phi1, so only the
    score-weighted residual sum remains.
    """
    if not policy.phi2 > 0:
        raise ValueError("actor gradient requires phi2 > 0")
    k1, k3 = _critic_grid(critic, traj.times)
    T = traj.times[-1] if T is None else T
    return _sums(traj, k1, k3, T, Q, gamma, policy)[0]


@dataclass(frozen=True)
class CriticBounds:
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 1.0


def project_theta(theta: tuple[float, float], bounds: CriticBounds) -> tuple[float, float]:
    """Box projection keeping 1/c2 <= k1 <= c2 and |k3'| <= c3.

    k1 is constant under this parameterization, so |k1'| <= c1 always holds.
    """
    t1 = project_interval(theta[0], 1.0 / bounds.c2, bounds.c2)
    t2 = project_interval(theta[1], -bounds.c3, bounds.c3)
    return t1, t2


def critic_update(
    theta: tuple[float, float],
    traj: Trajectory,
    a_n: float,
    gamma: float,
    phi2: float,
    model: ModelParams,
    bounds: CriticBounds = CriticBounds(),
) -> tuple[float, float]:
    """Projected TD step for theta = (k1 level, k3 slope)."""
    critic = CriticParams.linear(theta[0], theta[1], model.T, bounds.c1, bounds.c2, bounds.c3)
    k1, k3 = _critic_grid(critic, traj.times)
    # phi1 only enters the (unused) actor sum; pass a placeholder.
    _, s1, s2 = _sums(traj, k1, k3, model.T, model.Q, gamma, PolicyParams(0.0, phi2))
    return project_theta((theta[0] + a_n * s1, theta[1] + a_n * s2), bounds)


@dataclass(frozen=True)
class LearnerState:
    n: int
    phi1: float
    theta: tuple[float, float] = (1.0, 0.0)
    critic_mode: Literal["fixed", "learn"] = "fixed"
    gamma: float = 1.0
    bounds: CriticBounds = CriticBounds()

    def critic(self, T: float) -> CriticParams:
        b = self.bounds
        return CriticParams.linear(self.theta[0], self.theta[1], T, b.c1, b.c2, b.c3)


def actor_update(state: LearnerState, traj: Trajectory, sched: Schedule, model: ModelParams) -> LearnerState:
    """One projected policy-gradient step; advances the episode counter."""
    a_n, _, phi2, _ = schedule_values(sched, state.n)
    grad = actor_gradient(traj, state.critic(model.T), PolicyParams(state.phi1, phi2), state.gamma, model.Q, model.T)
    lo, hi = sched.interval(state.n + 1)
    return replace(state, n=state.n + 1, phi1=project_interval(state.phi1 + a_n * grad, lo, hi))


@dataclass
class EpisodeRecords:
    """Per-episode output of one replication, stored column-wise."""

    episode: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    regret_increment: np.ndarray
    sq_error: np.ndarray
    flagged: int = 0

    def __len__(self):
        return len(self.episode)

    @classmethod
    def empty(cls, n: int) -> "EpisodeRecords":
        return cls(
            episode=np.arange(1, n + 1),
            phi1=np.empty(n),
            phi2=np.empty(n),
            regret_increment=np.empty(n),
            sq_error=np.empty(n),
        )


def run_replication(config, seed: SeedSpec) -> EpisodeRecords:
    """Run RL-LQ for ``config.run.episodes`` episodes on one seeded stream.

    ``config`` needs ``model``, ``run`` (episodes, dt, phi1_init),
    ``schedule`` and ``critic`` (mode, gamma, c1, c2, c3, theta1, theta2).
    """
    model: ModelParams = config.model
    sched: Schedule = config.schedule
    cc = config.critic
    N, dt = config.run.episodes, config.run.dt
    rng = derive_stream(seed)
    m = n_steps_for(model.T, dt)
    times = dt * np.arange(m + 1)
    tau = model.T - times

    phi_star = oracle.optimal_gain(model)
    best = oracle.jbar(model, PolicyParams(phi_star, 0.0))
    bounds = CriticBounds(cc.c1, cc.c2, cc.c3)
    theta = project_theta((cc.theta1, cc.theta2), bounds)
    learn = cc.mode == "learn"
    gamma = cc.gamma
    phi1 = float(config.run.phi1_init)

    out = EpisodeRecords.empty(N)
    k1 = np.full(m + 1, theta[0])
    k3 = theta[1] * tau
    for i in range(N):
        n = i + 1
        a_n, _, phi2, _ = schedule_values(sched, n)
        policy = PolicyParams(phi1, phi2)
        out.phi1[i] = phi1
        out.phi2[i] = phi2
        out.regret_increment[i] = best - oracle.jbar(model, policy)
        out.sq_error[i] = (phi1 - phi_star) ** 2

        traj = simulate_episode_rllq(model, policy, dt, rng)
        out.flagged += traj.truncated
        grad, s1, s2 = _sums(traj, k1, k3, model.T, model.Q, gamma, policy)
        if learn:
            theta = project_theta((theta[0] + a_n * s1, theta[1] + a_n * s2), bounds)
            k1 = np.full(m + 1, theta[0])
            k3 = theta[1] * tau
        lo, hi = sched.interval(n + 1)
        phi1 = project_interval(phi1 + a_n * grad, lo, hi)
        assert lo <= phi1 <= hi
    return out
