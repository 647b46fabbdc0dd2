"""Closed-form quantities for the scalar stochastic LQ problem.

The controlled state follows

    dx = (A x + B u) dt + (C x + D u) dW,   x(0) = x0,

and the (unregularized) objective is E[-1/2 int_0^T Q x^2 dt - 1/2 H x(T)^2].
Under the Gaussian feedback policy u ~ N(phi1 x, phi2) the second moment of
the state solves a linear ODE with rate ``a(phi1)``; every value below is an
explicit function of that rate, which makes this module the ground truth
for regret and for checking gradient estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

# Below this |a| the removable-singularity branch is used.
A_SWITCH = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the LQ environment."""

    A: float = 1.0
    B: float = 1.0
    C: float = 1.0
    D: float = 1.0
    Q: float = 1.0
    H: float = 1.0
    x0: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "Q", "H", "x0", "T"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.Q < 0:
            raise ValueError("Q must be nonnegative")
        if self.H < 0:
            raise ValueError("H must be nonnegative")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.x0 == 0:
            raise ValueError("x0 must be nonzero")
        if self.D == 0:
            raise ValueError("D must be nonzero (degenerate control channel)")


@dataclass(frozen=True)
class PolicyParams:
    """Gaussian feedback policy N(phi1 * x, phi2); phi2 = 0 is deterministic."""

    phi1: float
    phi2: float = 0.0

    def __post_init__(self):
        if not self.phi2 >= 0:
            raise ValueError(f"phi2 must be >= 0, got {self.phi2}")


@dataclass(frozen=True)
class CriticParams:
    """Value-function approximation J(t, x) = -1/2 k1(t) x^2 + k3(t).

    ``k1`` and ``k3`` accept scalars or numpy arrays of times. When ``k1`` is
    a constant, ``k1_level`` carries its value so integrals can be done in
    closed form.
    """

    k1: Callable
    k3: Callable
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 1.0
    k1_level: Optional[float] = None

    @classmethod
    def linear(cls, theta1: float, theta2: float, T: float, c1=1.0, c2=2.0, c3=1.0):
        """k1 = theta1 (constant), k3 = theta2 * (T - t)."""
        theta1 = float(theta1)
        theta2 = float(theta2)
        return cls(
            k1=lambda t: theta1 + 0.0 * np.asarray(t, dtype=float),
            k3=lambda t: theta2 * (T - np.asarray(t, dtype=float)),
            c1=c1,
            c2=c2,
            c3=c3,
            k1_level=theta1,
        )

    def check_bounds(self, T: float, n_grid: int = 1001) -> bool:
        """Check the curvature/slope bounds on a uniform grid of [0, T]."""
        t = np.linspace(0.0, T, n_grid)
        k1 = np.broadcast_to(np.asarray(self.k1(t), dtype=float), t.shape)
        k3 = np.broadcast_to(np.asarray(self.k3(t), dtype=float), t.shape)
        dk1 = np.gradient(k1, t)
        dk3 = np.gradient(k3, t)
        tol = 1e-9
        return bool(
            np.all(k1 >= 1.0 / self.c2 - tol)
            and np.all(k1 <= self.c2 + tol)
            and np.all(np.abs(dk1) <= self.c1 + tol)
            and np.all(np.abs(dk3) <= self.c3 + tol)
        )


def optimal_gain(model: ModelParams) -> float:
    """Optimal feedback gain -(B + C D) / D^2."""
    if model.D == 0:
        raise ValueError("optimal gain undefined for D = 0")
    return -(model.B + model.C * model.D) / model.D**2


def a_of_phi1(model: ModelParams, phi1: float) -> float:
    """Growth rate of E[x(t)^2] under gain phi1."""
    A, B, C, D = model.A, model.B, model.C, model.D
    return 2 * A + 2 * B * phi1 + C**2 + 2 * C * D * phi1 + D**2 * phi1**2


def mean_state(model: ModelParams, phi1: float, t: float) -> float:
    return model.x0 * math.exp((model.A + model.B * phi1) * t)


def second_moment_state(model: ModelParams, policy: PolicyParams, t: float) -> float:
    a = a_of_phi1(model, policy.phi1)
    noise = model.D**2 * policy.phi2
    if abs(a) < A_SWITCH:
        return noise * t + model.x0**2
    return noise * math.expm1(a * t) / a + model.x0**2 * math.exp(a * t)


def f_value(model: ModelParams, a: float) -> float:
    """Deterministic part of the policy value as a function of the rate a."""
    Q, H, T, x0 = model.Q, model.H, model.T, model.x0
    if abs(a) < A_SWITCH:
        return x0**2 * (-H - Q * T) / 2
    # (Q - e^{aT} Q - H a e^{aT}) / (2a), written with expm1 to keep precision
    return x0**2 * (-Q * math.expm1(a * T) / (2 * a) - H * math.exp(a * T) / 2)


def g_value(model: ModelParams, a: float) -> float:
    """Per-unit-variance part of the policy value (coefficient of phi2)."""
    Q, H, T, D = model.Q, model.H, model.T, model.D
    if abs(a) < A_SWITCH:
        return D**2 * T * (-2 * H - Q * T) / 4
    em1 = math.expm1(a * T)
    return D**2 / (2 * a**2) * (Q * (a * T - em1) - H * a * em1)


def jbar(model: ModelParams, policy: PolicyParams) -> float:
    """Value of the Gaussian policy under the unregularized objective."""
    a = a_of_phi1(model, policy.phi1)
    return f_value(model, a) + policy.phi2 * g_value(model, a)


def value_function(model: ModelParams, policy: PolicyParams, t: float, x: float) -> float:
    """J(t, x) for the Gaussian policy, solving the Feynman-Kac PDE exactly."""
    Q, H, T, D = model.Q, model.H, model.T, model.D
    phi2 = policy.phi2
    a = a_of_phi1(model, policy.phi1)
    tau = T - t
    if abs(a) < A_SWITCH:
        quad = -0.5 * (Q * tau + H) * x**2
        offset = -0.25 * D**2 * phi2 * (2 * H * tau + Q * tau**2)
        return quad + offset
    e = math.exp(a * tau)
    quad = 0.5 * (Q / a - e * (Q / a + H)) * x**2
    # Offset regrouped around e - 1 so that it vanishes exactly at t = T.
    offset = -0.5 * D**2 * phi2 * (-Q * tau / a + math.expm1(a * tau) / a * (Q / a + H))
    return quad + offset


def classical_value(model: ModelParams, t: float, x: float) -> float:
    """Optimal value V(t, x) of the classical (non-exploratory) problem."""
    A, B, C, D, Q, H, T = model.A, model.B, model.C, model.D, model.Q, model.H, model.T
    lam = (B**2 + 2 * B * C * D - 2 * A * D**2) / D**2
    if abs(lam) < A_SWITCH:
        return -0.5 * (Q * (T - t) + H) * x**2
    s = lam * (t - T)
    # Q/lam + (H - Q/lam) e^s, rearranged with expm1 to avoid cancellation
    return -0.5 * (H * math.exp(s) - Q * math.expm1(s) / lam) * x**2


def _second_moment_integral(model: ModelParams, policy: PolicyParams, critic: CriticParams) -> float:
    """int_0^T k1(t) E[x(t)^2] dt."""
    T = model.T
    if critic.k1_level is not None:
        a = a_of_phi1(model, policy.phi1)
        noise = model.D**2 * policy.phi2
        if abs(a) < A_SWITCH:
            base = noise * T**2 / 2 + model.x0**2 * T
        else:
            em1 = math.expm1(a * T)
            base = noise * (em1 / a**2 - T / a) + model.x0**2 * em1 / a
        return critic.k1_level * base

    def integrand(t):
        return float(critic.k1(t)) * second_moment_state(model, policy, t)

    value, _ = integrate.quad(integrand, 0.0, T, epsabs=1e-10, epsrel=1e-12, limit=200)
    return value


def l_closed_form(model: ModelParams, critic: CriticParams, policy: PolicyParams) -> float:
    """D^2 int_0^T k1(t) E[x(t)^2] dt, the (positive) restoring strength."""
    return model.D**2 * _second_moment_integral(model, policy, critic)


def h1_closed_form(model: ModelParams, critic: CriticParams, policy: PolicyParams) -> float:
    """Exact mean of the policy-gradient increment for phi1."""
    slope = model.B + model.C * model.D + model.D**2 * policy.phi1
    return -slope * _second_moment_integral(model, policy, critic)


def regret_increment(model: ModelParams, policy: PolicyParams) -> float:
    """Gap between the oracle value and the value of ``policy``."""
    return jbar(model, PolicyParams(optimal_gain(model), 0.0)) - jbar(model, policy)


def entropy(phi2: float) -> float:
    """Differential entropy of a Gaussian with variance phi2."""
    if not phi2 > 0:
        raise ValueError(f"entropy requires phi2 > 0, got {phi2}")
    return 0.5 * math.log(2 * math.pi * math.e * phi2)
