"""Replication runner: parallel execution, deterministic CSV output, summary."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rllq import oracle
from rllq.actor_critic import run_replication
from rllq.baseline import run_replication_baseline
from rllq.config import RunConfig, validate
from rllq.metrics import AggregateSeries, SlopeFit, aggregate, loglog_slope
from rllq.sde import SeedSpec

log = logging.getLogger(__name__)

EPISODES_HEADER = "replication,episode,phi1,phi2,regret_increment,cum_regret,sq_error"
AGGREGATE_HEADER = "episode,mean_sq_error,mean_cum_regret"
FLOAT_FMT = "%.16e"  # 17 significant digits, round-trips through float64


@dataclass
class ExperimentResult:
    records: list
    series: AggregateSeries
    mse_fit: SlopeFit | None
    regret_fit: SlopeFit | None
    phi_star: float
    final_mean_phi1: float
    flagged: int
    seconds: float
    out_dir: Path | None = None


def _one_replication(args):
    config, index = args
    seed = SeedSpec(config.run.base_seed, index)
    if config.run.algo == "baseline":
        return run_replication_baseline(config, seed)
    return run_replication(config, seed)


def run_replications(config: RunConfig, workers: int | None = None) -> list:
    """Run every replication and return records in replication-index order.

    Each replication draws from its own stream keyed by its index, so the
    result does not depend on how indices are spread over workers.
    """
    workers = config.run.workers if workers is None else workers
    jobs = [(config, i) for i in range(config.run.replications)]
    if workers <= 1 or len(jobs) <= 1:
        return [_one_replication(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_one_replication, jobs))


def _safe_slope(y, n, window) -> SlopeFit | None:
    try:
        return loglog_slope(y, n, window)
    except ValueError as exc:
        log.warning("slope fit skipped: %s", exc)
        return None


def write_episodes_csv(path: Path, records: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(EPISODES_HEADER + "\n")
        for rep, r in enumerate(records):
            n = len(r.episode)
            if n == 0:
                continue
            cols = np.column_stack([
                np.full(n, rep), r.episode,
                r.phi1, r.phi2, r.regret_increment, np.cumsum(r.regret_increment), r.sq_error,
            ])
            np.savetxt(fh, cols, fmt=["%d", "%d"] + [FLOAT_FMT] * 5, delimiter=",", newline="\n")


def write_aggregate_csv(path: Path, series: AggregateSeries) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(AGGREGATE_HEADER + "\n")
        if len(series.episodes):
            cols = np.column_stack([series.episodes, series.mean_sq_error, series.mean_cum_regret])
            np.savetxt(fh, cols, fmt=["%d", FLOAT_FMT, FLOAT_FMT], delimiter=",", newline="\n")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return repr(float(v))


def format_summary(config: RunConfig, res: ExperimentResult) -> str:
    lo, hi = config.fit_window()
    lines = [
        f"algo = {config.run.algo}",
        f"replications = {config.run.replications}",
        f"episodes = {config.run.episodes}",
        f"phi_star = {_fmt(res.phi_star)}",
        f"final_mean_phi1 = {_fmt(res.final_mean_phi1)}",
        f"fit_window = {lo}:{hi}",
        f"mse_slope = {_fmt(res.mse_fit.slope if res.mse_fit else None)}",
        f"regret_slope = {_fmt(res.regret_fit.slope if res.regret_fit else None)}",
        f"flagged_episodes = {res.flagged}",
        f"wall_clock_seconds = {res.seconds:.3f}",
        "",
        "# configuration",
        config.to_ini(),
    ]
    return "\n".join(lines)


def run_experiment(config: RunConfig, out_dir: str | os.PathLike | None = None, workers: int | None = None) -> ExperimentResult:
    """Run all replications, aggregate, fit slopes and write the artifacts.

    Files go to ``out_dir`` (default ``config.output.directory``); pass
    ``out_dir=False`` to skip writing.
    """
    validate(config)
    start = time.perf_counter()
    records = run_replications(config, workers)
    series = aggregate(records)
    window = config.fit_window()
    n = series.episodes
    mse_fit = _safe_slope(series.mean_sq_error, n, window) if len(n) else None
    regret_fit = _safe_slope(series.mean_cum_regret, n, window) if len(n) else None
    final = float(np.mean([r.phi1[-1] for r in records])) if config.run.episodes else math.nan
    res = ExperimentResult(
        records=records,
        series=series,
        mse_fit=mse_fit,
        regret_fit=regret_fit,
        phi_star=oracle.optimal_gain(config.model),
        final_mean_phi1=final,
        flagged=int(sum(r.flagged for r in records)),
        seconds=0.0,
    )
    if out_dir is not False:
        path = Path(out_dir if out_dir is not None else config.output.directory)
        path.mkdir(parents=True, exist_ok=True)
        write_episodes_csv(path / "episodes.csv", records)
        write_aggregate_csv(path / "aggregate.csv", series)
        res.out_dir = path
    res.seconds = time.perf_counter() - start
    if res.out_dir is not None:
        _write_text(res.out_dir / "summary.txt", format_summary(config, res))
    return res


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
