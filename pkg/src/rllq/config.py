"""Experiment configuration: INI file with one section per block.

Every key is optional. Defaults give the reference experiment: all-ones
model, dt = 0.01, gamma = 1, N = 400,000 episodes and 120 replications.
Unknown sections or keys are rejected.

Example::

    [model]
    A = 1.0
    [run]
    algo = rllq
    episodes = 50000
    replications = 20
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from rllq.actor_critic import Schedule
from rllq.oracle import ModelParams


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending ``section.key``."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class RunSettings:
    algo: str = "rllq"
    episodes: int = 400_000
    replications: int = 120
    dt: float = 0.01
    base_seed: int = 20240101
    workers: int = 1
    phi1_init: float = -0.5


@dataclass(frozen=True)
class CriticSettings:
    mode: str = "fixed"
    gamma: float = 1.0
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 1.0
    theta1: float = 1.0
    theta2: float = 0.0


@dataclass(frozen=True)
class BaselineSettings:
    A0: float = 1.0
    B0: float = 1.0
    C0: float = 0.5
    D0: float = 1.0
    bootstrap_gain_1: float = -0.5
    bootstrap_gain_2: float = -1.5
    eps_d: float = 1e-6
    ito_correction: bool = True


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "results"
    fit_lo: Optional[int] = None
    fit_hi: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    run: RunSettings = field(default_factory=RunSettings)
    schedule: Schedule = field(default_factory=Schedule)
    critic: CriticSettings = field(default_factory=CriticSettings)
    baseline: BaselineSettings = field(default_factory=BaselineSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def fit_window(self) -> tuple[int, int]:
        """Slope-fit window; defaults to [N/10, N]."""
        N = self.run.episodes
        lo = self.output.fit_lo if self.output.fit_lo is not None else max(1, N // 10)
        hi = self.output.fit_hi if self.output.fit_hi is not None else N
        return lo, hi

    def with_overrides(self, **sections) -> "RunConfig":
        """Return a validated copy; ``sections`` maps block name to {key: value}."""
        blocks = {}
        for name, values in sections.items():
            current = getattr(self, name)
            blocks[name] = _build_block(name, type(current), {**_as_dict(current), **values})
        cfg = dataclasses.replace(self, **blocks)
        validate(cfg)
        return cfg

    def to_ini(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"[{f.name}]")
            for k, v in _as_dict(getattr(self, f.name)).items():
                lines.append(f"{k} = {'' if v is None else v}")
            lines.append("")
        return "\n".join(lines)


def _block_types():
    return {
        "model": ModelParams,
        "run": RunSettings,
        "schedule": Schedule,
        "critic": CriticSettings,
        "baseline": BaselineSettings,
        "output": OutputSettings,
    }


def _as_dict(block) -> dict:
    return {f.name: getattr(block, f.name) for f in fields(block)}


def _coerce(section: str, key: str, raw, default):
    name = f"{section}.{key}"
    if raw is None or (isinstance(raw, str) and raw.strip() == "" and (default is None or key.startswith("fit_"))):
        return None
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if key in ("episodes", "replications", "base_seed", "workers", "fit_lo", "fit_hi"):
            value = int(raw)
            if isinstance(raw, float) and raw != value:
                raise ValueError
            return value
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            lowered = str(raw).lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError
        if isinstance(default, str):
            return str(raw)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot parse {raw!r}") from None


def _build_block(section: str, cls, values: dict):
    valid = {f.name: f for f in fields(cls)}
    defaults = _as_dict(cls())
    kwargs = {}
    for key, raw in values.items():
        if key not in valid:
            raise ConfigError(f"{section}.{key}", "unknown key")
        kwargs[key] = _coerce(section, key, raw, defaults[key])
    try:
        return cls(**kwargs)
    except ValueError as exc:
        # dataclass invariants (ModelParams, Schedule) name the field first
        msg = str(exc)
        first = msg.split()[0] if msg else ""
        raise ConfigError(f"{section}.{first if first in valid else '?'}", msg) from None


def validate(cfg: RunConfig) -> None:
    r = cfg.run
    if r.algo not in ("rllq", "baseline"):
        raise ConfigError("run.algo", f"must be 'rllq' or 'baseline', got {r.algo!r}")
    if r.episodes < 0:
        raise ConfigError("run.episodes", "must be >= 0")
    if r.replications < 1:
        raise ConfigError("run.replications", "must be >= 1")
    if r.workers < 1:
        raise ConfigError("run.workers", "must be >= 1")
    if not r.dt > 0:
        raise ConfigError("run.dt", "must be positive")
    if r.dt > cfg.model.T:
        raise ConfigError("run.dt", "must not exceed model.T")
    m = round(cfg.model.T / r.dt)
    if abs(m * r.dt - cfg.model.T) > 1e-9 * cfg.model.T:
        raise ConfigError("run.dt", f"does not divide T={cfg.model.T}")
    c = cfg.critic
    if c.mode not in ("fixed", "learn"):
        raise ConfigError("critic.mode", f"must be 'fixed' or 'learn', got {c.mode!r}")
    if c.gamma < 0:
        raise ConfigError("critic.gamma", "must be >= 0")
    for k in ("c1", "c2", "c3"):
        if not getattr(c, k) > 0:
            raise ConfigError(f"critic.{k}", "must be positive")
    b = cfg.baseline
    if b.bootstrap_gain_1 == b.bootstrap_gain_2:
        raise ConfigError("baseline.bootstrap_gain_2", "bootstrap gains must be distinct")
    if not b.D0 > 0:
        raise ConfigError("baseline.D0", "must be positive")
    if not b.eps_d > 0:
        raise ConfigError("baseline.eps_d", "must be positive")
    if r.algo == "baseline" and cfg.model.x0 <= 0:
        raise ConfigError("model.x0", "baseline requires x0 > 0 (log-state estimators)")
    o = cfg.output
    for k in ("fit_lo", "fit_hi"):
        v = getattr(o, k)
        if v is not None and v < 1:
            raise ConfigError(f"output.{k}", "must be >= 1")
    if o.fit_lo is not None and o.fit_hi is not None and o.fit_lo > o.fit_hi:
        raise ConfigError("output.fit_lo", "must not exceed output.fit_hi")


def load_config(path: str | os.PathLike | None = None, text: str | None = None) -> RunConfig:
    """Parse and validate an INI config; missing keys take defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (A vs a)
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(Path(path)) as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("<file>", f"parse error: {exc}") from None

    types = _block_types()
    blocks = {}
    for section in parser.sections():
        if section not in types:
            raise ConfigError(section, "unknown section")
    for section, cls in types.items():
        values = dict(parser.items(section)) if parser.has_section(section) else {}
        blocks[section] = _build_block(section, cls, values)
    cfg = RunConfig(**blocks)
    validate(cfg)
    return cfg
