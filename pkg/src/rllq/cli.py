"""Command-line entry point: ``rllq [--config PATH] [overrides...]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from rllq.config import ConfigError, load_config
from rllq.harness import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fit_window(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rllq", description="Run RL-LQ or baseline replications and write CSV results.")
    p.add_argument("--config", help="INI config file; missing keys take defaults")
    p.add_argument("--algo", choices=["rllq", "baseline"])
    p.add_argument("--episodes", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--dt", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: $RLLQ_WORKERS, then config)")
    p.add_argument("--fit-window", type=_fit_window, metavar="LO:HI")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    run = {}
    for flag, key in (("algo", "algo"), ("episodes", "episodes"), ("replications", "replications"),
                      ("seed", "base_seed"), ("dt", "dt")):
        v = getattr(args, flag)
        if v is not None:
            run[key] = v
    workers = args.workers
    if workers is None and os.environ.get("RLLQ_WORKERS"):
        workers = os.environ["RLLQ_WORKERS"]
    if workers is not None:
        run["workers"] = workers
    output = {}
    if args.out is not None:
        output["directory"] = args.out
    if args.fit_window is not None:
        output["fit_lo"], output["fit_hi"] = args.fit_window
    sections = {}
    if run:
        sections["run"] = run
    if output:
        sections["output"] = output
    return sections


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(**_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(cfg)
    except (ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    mse = "nan" if res.mse_fit is None else f"{res.mse_fit.slope:.4f}"
    reg = "nan" if res.regret_fit is None else f"{res.regret_fit.slope:.4f}"
    print(f"{cfg.run.algo}: R={cfg.run.replications} N={cfg.run.episodes} "
          f"mse_slope={mse} regret_slope={reg} -> {res.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
