"""Episode simulators for the controlled diffusion and seeded random streams."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from rllq.oracle import ModelParams, PolicyParams

log = logging.getLogger(__name__)

# |x| beyond this aborts the episode (truncated trajectory, flagged).
OVERFLOW_BOUND = 1e12


@dataclass(frozen=True)
class SeedSpec:
    base_seed: int
    replication_index: int = 0


@dataclass
class Trajectory:
    """One simulated episode on a uniform grid.

    ``normals`` has shape (m, 2) for the model-free simulator (action draw,
    Brownian draw) and (m, 1) for the geometric one. A truncated episode
    keeps only the steps completed before the state blew up.
    """

    dt: float
    times: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    normals: np.ndarray
    truncated: bool = False
    log_states: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return len(self.actions)


def n_steps_for(T: float, dt: float) -> int:
    """Number of grid steps; dt must divide T up to 1e-9 relative error."""
    if not (dt > 0 and dt <= T):
        raise ValueError(f"dt must satisfy 0 < dt <= T, got dt={dt}, T={T}")
    m = int(round(T / dt))
    if abs(m * dt - T) > 1e-9 * T:
        raise ValueError(f"dt={dt} does not divide T={T}")
    return m


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Independent, reproducible stream for one replication.

    Uses numpy's SeedSequence hashing with the replication index as spawn
    key, so streams for different indices do not overlap.
    """
    if seed.replication_index < 0:
        raise ValueError("replication_index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed.base_seed) & (2**64 - 1), spawn_key=(int(seed.replication_index),))
    return np.random.Generator(np.random.PCG64(ss))


@numba.njit(cache=True)
def _euler_kernel(x0, A, B, C, D, phi1, sd, dt, normals, bound):
    m = normals.shape[0]
    xs = np.empty(m + 1)
    us = np.empty(m)
    xs[0] = x0
    sq = math.sqrt(dt)
    for k in range(m):
        x = xs[k]
        u = phi1 * x + sd * normals[k, 0]
        us[k] = u
        xn = x + (A * x + B * u) * dt + (C * x + D * u) * sq * normals[k, 1]
        if not (abs(xn) <= bound):
            return xs, us, k
        xs[k + 1] = xn
    return xs, us, m


def simulate_episode_rllq(model: ModelParams, policy: PolicyParams, dt: float, rng: np.random.Generator) -> Trajectory:
    """Euler-Maruyama episode under u ~ N(phi1 x, phi2), zero-order hold.

    Each step consumes two standard normals from ``rng``: first the action
    draw, then the Brownian increment.
    """
    m = n_steps_for(model.T, dt)
    normals = rng.standard_normal((m, 2))
    xs, us, done = _euler_kernel(
        float(model.x0), float(model.A), float(model.B), float(model.C), float(model.D),
        float(policy.phi1), math.sqrt(policy.phi2), float(dt), normals, OVERFLOW_BOUND,
    )
    truncated = done < m
    if truncated:
        log.warning("episode truncated at step %d/%d: state exceeded %.0e", done, m, OVERFLOW_BOUND)
        xs, us, normals = xs[: done + 1], us[:done], normals[:done]
    times = dt * np.arange(done + 1)
    return Trajectory(dt=dt, times=times, states=xs, actions=us, normals=normals, truncated=truncated)


def simulate_episode_geometric(model: ModelParams, gain: float, dt: float, rng: np.random.Generator) -> Trajectory:
    """Exact log-space episode of dx = P x dt + R x dW with P = A + B g, R = C + D g."""
    if model.x0 <= 0:
        raise ValueError("geometric simulator requires x0 > 0")
    m = n_steps_for(model.T, dt)
    P = model.A + model.B * gain
    R = model.C + model.D * gain
    normals = rng.standard_normal((m, 1))
    incr = (P - 0.5 * R * R) * dt + R * math.sqrt(dt) * normals[:, 0]
    log_states = np.empty(m + 1)
    log_states[0] = math.log(model.x0)
    np.cumsum(incr, out=log_states[1:])
    log_states[1:] += log_states[0]
    states = np.exp(log_states)
    return Trajectory(
        dt=dt,
        times=dt * np.arange(m + 1),
        states=states,
        actions=gain * states[:-1],
        normals=normals,
        log_states=log_states,
    )
