"""Flat ``key = value`` configuration files.

Lines starting with ``#`` and blank lines are ignored, trailing ``# ...``
comments are stripped, lists are comma separated.  Every key has a default,
so an empty file is valid.  Precedence, lowest first: defaults, config file,
the ``CELLFLOW_OUT`` environment variable (output directory only), command
line flags.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .grid import SCHEMES, SOLVER_SCHEME

ENV_OUT = "CELLFLOW_OUT"


class ConfigError(ValueError):
    """Invalid configuration file or option (exit status 2)."""


@dataclass
class Config:
    # scan
    L_list: tuple[int, ...] = (4, 8)
    beta_list: tuple[float, ...] = (3.0, 5.0)
    # resolution policy: h <= rule / sqrt(A) unless the grid would exceed
    # max_unknowns, in which case the rule is relaxed and the row says so
    rule: float = 0.4
    max_unknowns: int = 1_200_000
    tol: float = 1e-9
    eig_tol: float = 1e-8
    scheme: str = SOLVER_SCHEME
    mc_paths: int = 0
    mc_dt_factor: float = 0.0125
    seed: int = 0
    threads: int = 1
    out: Path = field(default_factory=lambda: Path("cellflow-out"))
    # single-point commands
    L: float = 4.0
    A: float = 256.0
    topology: str = "dirichlet-square"
    resolution: int = 0  # 0: derived from the rule
    paths: int = 10_000
    trajectories: int = 0

    def validate(self) -> Config:
        if not self.L_list:
            raise ConfigError("L_list must not be empty")
        for L in self.L_list:
            if L <= 0 or L % 2:
                raise ConfigError(f"scan side lengths must be positive even integers, got {L}")
        for b in self.beta_list:
            if not 0 < b < 8:
                raise ConfigError(f"beta must lie in (0, 8), got {b}")
        if not 0 < self.rule <= 2:
            raise ConfigError("rule must lie in (0, 2]")
        if self.tol <= 0 or self.eig_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.mc_paths < 0 or self.paths < 1:
            raise ConfigError("path counts must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.A < 0 or self.L <= 0:
            raise ConfigError("need A >= 0 and L > 0")
        if self.topology not in ("dirichlet-square", "dirichlet-disk", "square", "disk"):
            raise ConfigError("topology must be square or disk")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _convert(key: str, raw: str):
    default = getattr(Config(), key)
    try:
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(float(x)) if kind is int else kind(x) for x in raw.split(",") if x.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            v = float(raw)
            if not v.is_integer():
                raise ValueError(raw)
            return int(v)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, Path):
            return Path(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                environ: dict | None = None) -> Config:
    """Defaults < file < CELLFLOW_OUT < overrides (None values are skipped)."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text))
    env = os.environ if environ is None else environ
    if env.get(ENV_OUT):
        values["out"] = Path(env[ENV_OUT])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in _FIELDS:
            raise ConfigError(f"unknown option {k!r}")
        values[k] = Path(v) if k == "out" else v
    return Config(**values).validate()
