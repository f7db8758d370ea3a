"""Run configuration shared by every CLI subcommand, loaded from YAML."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .backtest import DEFAULT_LAMBDA_GRID, ExitRule, StrategyConfig
from .bootstrap import BootstrapConfig
from .errors import ConfigurationError
from .synthgen import GenConfig
from .tick_sync import DEFAULT_INTRA_EVENT_GAP_NS

ENV_INPUT = "LEADLAG_INPUT"
ENV_OUTPUT = "LEADLAG_OUT"

# Keys that locate files or control scheduling; they never change results and
# are left out of the config hash.
_UNHASHED = {"input", "output", "jobs"}


@dataclass(frozen=True)
class StrategySection:
    lam: float | None = None                # None: calibrate on the in-sample days
    grid: tuple = DEFAULT_LAMBDA_GRID
    split_day: int | float = 0.6            # int: day count, float in (0, 1): fraction
    fee_ticks: float = 0.5
    max_spread_ticks: float = 2
    max_position: int = 1
    exit: str = "zero-cross"

    def strategy(self, cycle: int, lam: float | None = None) -> StrategyConfig:
        return StrategyConfig(lam=lam or self.lam or self.grid[0], cycle=cycle,
                              fee_ticks=self.fee_ticks, max_spread_ticks=self.max_spread_ticks,
                              max_position=self.max_position, exit=ExitRule.parse(self.exit))

    def split(self, n_days: int) -> int:
        s = self.split_day
        k = int(round(s * n_days)) if isinstance(s, float) and 0 < s < 1 else int(s)
        return min(max(k, 1), n_days)


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    output: str = "out"
    seed: int = 0
    jobs: int = 1
    dates: tuple | None = None              # inclusive (first, last) ISO dates
    instruments: tuple | None = None        # restrict to these ids; default: all, liquidity-ranked
    intra_event_gap_ns: int = DEFAULT_INTRA_EVENT_GAP_NS
    lags: int = 10
    pairs: tuple = ("F1,F2", "F1,F3", "F1,F4")
    leadlag_mode: str = "synced"            # or "raw": asynchronous streams, lag unit 500 ms
    ema_cycle: int = 50
    horizons: tuple = (1, 2, 4, 8)
    models: tuple = (1, 2)
    textbook_partial: bool = False
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    strategy: StrategySection = field(default_factory=StrategySection)
    synth: GenConfig | None = None

    def __post_init__(self):
        for name in ("dates", "instruments", "pairs", "horizons", "models"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(v))
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        if self.lags < 1:
            raise ConfigurationError("lags must be >= 1")
        if any(h < 1 for h in self.horizons):
            raise ConfigurationError("horizons must be >= 1")
        if not set(self.models) <= {1, 2}:
            raise ConfigurationError("models must be drawn from {1, 2}")
        if self.leadlag_mode not in ("synced", "raw"):
            raise ConfigurationError("leadlag_mode must be 'synced' or 'raw'")
        if self.dates is not None and len(self.dates) != 2:
            raise ConfigurationError("dates must be [first, last]")
        for p in self.pairs:
            if len(parse_pair(p)) != 2:
                raise ConfigurationError(f"bad pair {p!r}")

    def validate_paths(self, need_input: bool = True) -> None:
        if need_input:
            if self.input is None:
                raise ConfigurationError("no input path given (--input, config 'input' or $LEADLAG_INPUT)")
            if not Path(self.input).exists():
                raise ConfigurationError(f"input path does not exist: {self.input}")

    def hashable(self) -> dict:
        return {k: v for k, v in to_mapping(self).items() if k not in _UNHASHED}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashable(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_pair(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _section(cls, data: Mapping | None, path: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"'{path}' must be a mapping")
    if cls is GenConfig:
        return GenConfig.from_mapping(data)
    known = {f.name for f in fields(cls)}
    data = dict(data)
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown key(s) in '{path}': {', '.join(sorted(unknown))}")
    if "grid" in data:
        data["grid"] = tuple(float(x) for x in data["grid"])
    return cls(**data)


def from_mapping(data: Mapping[str, Any]) -> RunConfig:
    data = dict(data or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    seed = data.get("seed", 0)
    # sections inherit the global seed unless they set their own
    for name in ("bootstrap", "synth"):
        if isinstance(data.get(name), Mapping) or (name == "bootstrap" and data.get(name) is None):
            data[name] = {"seed": seed, **(data.get(name) or {})}
    try:
        data["bootstrap"] = _section(BootstrapConfig, data.get("bootstrap"), "bootstrap")
        data["strategy"] = _section(StrategySection, data.get("strategy"), "strategy")
        if data.get("synth") is not None:
            data["synth"] = _section(GenConfig, data["synth"], "synth")
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def to_mapping(cfg) -> dict:
    """Plain JSON-ready form of a (nested) config dataclass."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if hasattr(v, "__dataclass_fields__"):
            v = to_mapping(v)
        elif isinstance(v, tuple):
            v = list(v)
        elif isinstance(v, ExitRule):
            v = str(v)
        out[f.name] = v
    return out


def load_config(path: str | os.PathLike | None = None, **overrides) -> RunConfig:
    """YAML file, then ``$LEADLAG_INPUT``/``$LEADLAG_OUT``, then explicit overrides (non-None only)."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {p}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"{p} must contain a mapping")
    if os.environ.get(ENV_INPUT):
        data["input"] = os.environ[ENV_INPUT]
    if os.environ.get(ENV_OUTPUT):
        data["output"] = os.environ[ENV_OUTPUT]
    cfg = from_mapping(data)
    changes = {k: v for k, v in overrides.items() if v is not None}
    if "seed" in changes:
        changes["bootstrap"] = replace(cfg.bootstrap, seed=changes["seed"])
        if cfg.synth is not None:
            changes["synth"] = replace(cfg.synth, seed=changes["seed"])
    return replace(cfg, **changes)
