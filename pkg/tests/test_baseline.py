import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rllq import oracle
from rllq.baseline import (
    EPS_D,
    EstimatedModel,
    RankDeficientError,
    ReplayBuffer,
    diffusion_coefficients,
    drift_record,
    estimate_P_R,
    fit_diffusion,
    fit_drift,
    recover_diffusion,
    run_replication_baseline,
    sample_gain,
)
from rllq.config import RunConfig
from rllq.oracle import ModelParams, PolicyParams
from rllq.sde import SeedSpec, Trajectory, derive_stream, simulate_episode_geometric


def log_traj(logs, T=1.0):
    logs = np.asarray(logs, dtype=float)
    m = len(logs) - 1
    dt = T / m
    states = np.exp(logs)
    return Trajectory(dt=dt, times=dt * np.arange(m + 1), states=states, actions=np.zeros(m), normals=np.zeros((m, 1)))


def buffer_of(gains, p, r2):
    buf = ReplayBuffer()
    for g, a, b in zip(gains, p, r2):
        buf.append(g, a, b)
    return buf


# -- gain sampling ------------------------------------------------------------

class FixedNormal:
    def __init__(self, z):
        self.z = z

    def standard_normal(self):
        return self.z


def test_sample_gain_examples():
    assert sample_gain(EstimatedModel(1, 1, 1, 1), 1, FixedNormal(0.0)) == -2
    assert sample_gain(EstimatedModel(1, 2, 1, 2), 5, FixedNormal(0.0)) == -1
    # v_1 = 1/2
    assert sample_gain(EstimatedModel(1, 1, 1, 1), 1, FixedNormal(1.0)) == pytest.approx(-2 + math.sqrt(0.5))
    with pytest.raises(ValueError):
        sample_gain(EstimatedModel(1, 1, 1, 0.0), 1, FixedNormal(0.0))


def test_sample_gain_variance():
    gen = np.random.default_rng(1)
    g = np.array([sample_gain(EstimatedModel(1, 1, 1, 1), 3, gen) for _ in range(40_000)])
    assert g.var() == pytest.approx(0.25, rel=0.03)


# -- log-trajectory statistics -------------------------------------------------

def test_estimate_examples():
    t = np.linspace(0, 1, 37)
    p, r2 = estimate_P_R(log_traj(np.log(1.3) + t * math.log(2)))
    assert p == pytest.approx(math.log(2), rel=1e-14)
    p, r2 = estimate_P_R(log_traj(0.01 * np.arange(101)))
    assert r2 == pytest.approx(0.01, rel=1e-12)
    assert estimate_P_R(log_traj(np.zeros(11))) == (0.0, 0.0)


def test_estimate_rejects_nonpositive_states():
    tr = log_traj(np.zeros(5))
    tr.states[2] = -1.0
    with pytest.raises(ValueError):
        estimate_P_R(tr)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=50))
def test_r2_nonnegative(logs):
    assert estimate_P_R(log_traj(logs))[1] >= 0


# -- regressions --------------------------------------------------------------

def test_fit_drift_examples():
    assert fit_drift(buffer_of([-1, -2], [0, -1], [0, 0])) == pytest.approx((1, 1), abs=1e-14)
    g = [-3.0, -1.0, 0.5, 2.0]
    assert fit_drift(buffer_of(g, [0.5 - 0.3 * x for x in g], [0] * 4)) == pytest.approx((0.5, -0.3), abs=1e-12)


def test_fit_rank_deficiency():
    with pytest.raises(RankDeficientError):
        fit_drift(buffer_of([-1, -1, -1], [0, 1, 2], [0, 0, 0]))
    with pytest.raises(RankDeficientError):
        fit_diffusion(buffer_of([-1, -2, -1], [0, 0, 0], [1, 2, 3]))


def test_recover_diffusion_examples():
    assert recover_diffusion(4.0, 4.0) == pytest.approx((1.0, 2.0))
    assert recover_diffusion(2.0, 1.0) == pytest.approx((1.0, 1.0))
    C, D = recover_diffusion(0.7, -0.5)
    assert D == pytest.approx(math.sqrt(EPS_D)) and D == pytest.approx(1e-3)
    assert C == pytest.approx(0.7 / (2e-3))


@given(A=st.floats(-2, 2), B=st.floats(-2, 2), C=st.floats(-2, 2), D=st.floats(0.1, 3))
def test_regression_exactness(A, B, C, D):
    g = np.linspace(-3.0, 1.0, 10)
    buf = buffer_of(g, A + B * g, (C + D * g) ** 2)
    a, b = fit_drift(buf)
    assert abs(a - A) <= 1e-9 and abs(b - B) <= 1e-9
    c, d = fit_diffusion(buf)
    assert abs(c - C) <= 1e-9 and abs(d - D) <= 1e-9


def test_buffer_power_sums_match_raw_records():
    gen = np.random.default_rng(2)
    g, p, r = gen.normal(size=(3, 200))
    buf = buffer_of(g, p, r)
    X = np.vander(g, 2, increasing=True)
    assert fit_drift(buf) == pytest.approx(tuple(np.linalg.lstsq(X, p, rcond=None)[0]), rel=1e-9)
    X = np.vander(g, 3, increasing=True)
    assert diffusion_coefficients(buf) == pytest.approx(tuple(np.linalg.lstsq(X, r, rcond=None)[0]), rel=1e-9)


def test_refit_depends_only_on_buffer():
    gen = np.random.default_rng(4)
    g, p, r = gen.normal(size=(3, 30))
    first = buffer_of(g, p, r)
    again = buffer_of(g, p, r)
    assert fit_drift(first) == fit_drift(again)
    assert fit_diffusion(first) == fit_diffusion(again)
    # a superset that adds one near-duplicate record barely moves the fit
    bigger = buffer_of(list(g) + [g[0]], list(p) + [p[0] + 1e-9], list(r) + [r[0]])
    near = buffer_of(list(g) + [g[0]], list(p) + [p[0]], list(r) + [r[0]])
    assert fit_drift(bigger) == pytest.approx(fit_drift(near), abs=1e-8)


def test_drift_record():
    assert drift_record(0.3, 0.4) == pytest.approx(0.5)
    assert drift_record(0.3, 0.4, ito_correction=False) == 0.3


def _closed_loop_fits(ito_correction):
    model = ModelParams()
    gen = derive_stream(SeedSpec(17, 0))
    gains = np.linspace(-3.0, 0.5, 2000)
    buf = ReplayBuffer()
    for g in gains:
        p, r2 = estimate_P_R(simulate_episode_geometric(model, g, 1e-3, gen))
        buf.append(g, drift_record(p, r2, ito_correction), r2)
    return gains, fit_drift(buf), fit_diffusion(buf)


def test_closed_loop_identification():
    # With the growth-rate correction the drift regression targets A + B g,
    # and the variation regression targets (C + D g)^2.
    _, (A, B), (C, D) = _closed_loop_fits(True)
    assert abs(A - 1) < 0.1 and abs(B - 1) < 0.1
    assert abs(C - 1) < 0.05 and abs(D - 1) < 0.05


def test_log_growth_regression_target():
    # Uncorrected, the drift fit is the least-squares line through
    # E[P_hat] = A + B g - (C + D g)^2 / 2 over the deployed gains.
    gains, (A, B), _ = _closed_loop_fits(False)
    target = 1 + gains - 0.5 * (1 + gains) ** 2
    ref = np.linalg.lstsq(np.vander(gains, 2, increasing=True), target, rcond=None)[0]
    assert abs(A - ref[0]) < 0.1 and abs(B - ref[1]) < 0.1
    assert abs(B - 1) > 0.15


# -- episode loop -------------------------------------------------------------

def base_config(**run):
    return RunConfig().with_overrides(run={"algo": "baseline", "episodes": 100, "replications": 1, **run})


def test_no_episodes_keeps_bootstrap_only():
    out = run_replication_baseline(base_config(episodes=0), SeedSpec(1))
    assert len(out) == 0
    assert out.bootstrap_gains == (-0.5, -1.5)
    assert len(out.bootstrap_stats) == 2
    assert out.buffer_size == 2


def test_baseline_records(ones):
    out = run_replication_baseline(base_config(), SeedSpec(6), keep_estimates=True)
    assert np.array_equal(out.episode, np.arange(1, 101))
    assert out.buffer_size == 2 + 100 - out.flagged
    assert np.all(out.phi2 == 0)
    assert np.allclose(out.sq_error, (out.phi1 + 2) ** 2, rtol=1e-15)
    assert np.allclose(out.sq_error_sampled, (out.sampled_gain + 2) ** 2, rtol=1e-15)
    for i in (0, 10, 99):
        assert out.regret_increment[i] == pytest.approx(
            oracle.regret_increment(ones, PolicyParams(out.sampled_gain[i], 0.0)), rel=1e-12, abs=1e-15)
    for est in out.estimates:
        assert est.D > 0


def test_baseline_deterministic():
    cfg = base_config()
    a = run_replication_baseline(cfg, SeedSpec(8, 3))
    b = run_replication_baseline(cfg, SeedSpec(8, 3))
    assert np.array_equal(a.phi1, b.phi1) and np.array_equal(a.sampled_gain, b.sampled_gain)


def test_baseline_first_point_estimate_log_growth():
    cfg = base_config(episodes=1).with_overrides(baseline={"ito_correction": False})
    out = run_replication_baseline(cfg, SeedSpec(2))
    (p1, _), (p2, _) = out.bootstrap_stats
    B = (p1 - p2) / (-0.5 - (-1.5))
    # (C, D) still at their initial values before three distinct gains exist
    assert out.phi1[0] == pytest.approx(-(B + 0.5 * 1.0) / 1.0, rel=1e-12)


def test_baseline_first_point_estimate_corrected_drift():
    out = run_replication_baseline(base_config(episodes=1), SeedSpec(2))
    (p1, r1), (p2, r2) = out.bootstrap_stats
    B = ((p1 + r1 / 2) - (p2 + r2 / 2)) / 1.0
    assert out.phi1[0] == pytest.approx(-(B + 0.5) / 1.0, rel=1e-12)


def _distance(est):
    return abs(est.A - 1) + abs(est.B - 1) + abs(est.C - 1) + abs(est.D - 1)


@pytest.mark.slow
def test_identification_consistency():
    cfg = base_config(episodes=1000, dt=1e-3)
    improved = 0
    for seed in range(20):
        out = run_replication_baseline(cfg, SeedSpec(cfg.run.base_seed, seed), keep_estimates=True)
        by_n = {e.n: e for e in out.estimates}
        improved += _distance(by_n[1000]) < _distance(by_n[100])
    assert improved >= 16, f"estimation error decreased in only {improved}/20 runs"
