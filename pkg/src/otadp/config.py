"""Scenario configuration: a JSON document with nested sections.

Parsing is strict: unknown keys and wrongly typed values are rejected with
the dotted path of the offending field.  Precedence is command-line flags
over file values over the defaults below.
"""

from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError
from .market import TABLE_ONE


@dataclass
class ProsumerRow:
    c1: float
    c2: float
    v1: float
    v2: float


@dataclass
class MarketSection:
    a: float = 100.0
    I: Optional[int] = None
    L: Optional[float] = None


@dataclass
class ChannelSection:
    Nr: int = 8
    snr_db: float = 10.0
    P: float = 1.0
    source: str = "sampled"
    path: Optional[str] = None
    combiner: str = "dominant"


@dataclass
class DpSection:
    alpha: float = 0.2
    alphas: list[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8])
    epsilon_targets: Optional[list[float]] = field(default_factory=lambda: [100.0])
    delta: float = 1e-5
    K: int = 100


@dataclass
class RunSection:
    n_trials: int = 100
    max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0
    stop_mode: str = "fixed"
    bid_overflow_policy: str = "clamp"


@dataclass
class CalibrateSection:
    snr_db_list: list[float] = field(default_factory=lambda: [0.0, 10.0, 20.0])
    Nr_list: list[int] = field(default_factory=lambda: [8, 16, 32, 64])
    epsilon_grid: Optional[list[float]] = None
    n_grid: int = 20
    n_channels: int = 20
    tol: float = 1e-4


@dataclass
class AsweepSection:
    I: int = 10
    a_grid: list[float] = field(default_factory=lambda: [float(a) for a in range(20, 85, 5)])
    alpha: float = 0.2
    K: int = 100
    mse_ceiling: float = 1e6


@dataclass
class ScenarioRow:
    name: str
    I: int
    Nr: int
    snr_db: float


def _reference_scenarios():
    return [
        ScenarioRow("Baseline", 3, 8, 10.0),
        ScenarioRow("Low SNR", 3, 8, 0.0),
        ScenarioRow("High SNR", 3, 8, 30.0),
        ScenarioRow("Crowded", 8, 8, 10.0),
        ScenarioRow("Overloaded", 12, 8, 10.0),
        ScenarioRow("Many Antennas", 3, 64, 10.0),
    ]


@dataclass
class CompareSection:
    alpha: float = 0.2
    n_channels: int = 200
    scenarios: list[ScenarioRow] = field(default_factory=_reference_scenarios)


@dataclass
class ScenarioConfig:
    prosumers: list[ProsumerRow] = field(
        default_factory=lambda: [ProsumerRow(*row) for row in TABLE_ONE]
    )
    market: MarketSection = field(default_factory=MarketSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    dp: DpSection = field(default_factory=DpSection)
    run: RunSection = field(default_factory=RunSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    asweep: AsweepSection = field(default_factory=AsweepSection)
    compare: CompareSection = field(default_factory=CompareSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _is_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1 and len(typing.get_args(tp)) == 2:
            return args[0]
    return None


def _coerce(tp, value, path):
    inner = _is_optional(tp)
    if inner is not None:
        return None if value is None else _coerce(inner, value, path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is list:
        (elem,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return [_coerce(elem, v, f"{path}[{k}]") for k, v in enumerate(value)]
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
        if math.isnan(value):
            raise ConfigError(f"{path}: NaN is not allowed")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = path or "<root>"
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{sub}: required field missing")
    return cls(**kwargs)


def _check_choice(value, choices, path):
    if value not in choices:
        raise ConfigError(f"{path}: must be one of {list(choices)}, got {value!r}")


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Semantic checks that the schema alone cannot express."""
    if not cfg.prosumers:
        raise ConfigError("prosumers: at least one prosumer is required")
    for k, row in enumerate(cfg.prosumers):
        if not row.c1 > 0:
            raise ConfigError(f"prosumers[{k}].c1: must be positive")
        if not row.v1 < 0:
            raise ConfigError(f"prosumers[{k}].v1: must be negative")
    m = cfg.market
    if not m.a > 0:
        raise ConfigError("market.a: must be positive")
    if m.I is not None and m.I < 2:
        raise ConfigError("market.I: must be >= 2")
    if m.I is None and len(cfg.prosumers) < 2:
        raise ConfigError("market.I: need at least two prosumers")
    if m.L is not None and not m.L > 0:
        raise ConfigError("market.L: must be positive")
    ch = cfg.channel
    if ch.Nr < 1:
        raise ConfigError("channel.Nr: must be >= 1")
    if not ch.P > 0:
        raise ConfigError("channel.P: must be positive")
    _check_choice(ch.source, ("sampled", "file"), "channel.source")
    if ch.source == "file" and not ch.path:
        raise ConfigError("channel.path: required when channel.source is 'file'")
    _check_choice(ch.combiner, ("dominant", "sum"), "channel.combiner")
    dp = cfg.dp
    if dp.alpha < 0 or any(a < 0 for a in dp.alphas):
        raise ConfigError("dp.alpha: noise-to-signal ratios must be >= 0")
    if not dp.alphas:
        raise ConfigError("dp.alphas: at least one value is required")
    if dp.epsilon_targets is not None and any(not e > 0 for e in dp.epsilon_targets):
        raise ConfigError("dp.epsilon_targets: must be positive")
    if not 0 < dp.delta < 1:
        raise ConfigError("dp.delta: must lie in (0, 1)")
    if dp.K < 1:
        raise ConfigError("dp.K: must be >= 1")
    r = cfg.run
    if r.n_trials < 1 or r.max_iter < 1:
        raise ConfigError("run.n_trials and run.max_iter must be >= 1")
    if not r.tol > 0:
        raise ConfigError("run.tol: must be positive")
    if r.seed < 0:
        raise ConfigError("run.seed: must be >= 0")
    _check_choice(r.stop_mode, ("fixed", "tolerance"), "run.stop_mode")
    _check_choice(r.bid_overflow_policy, ("error", "clamp"), "run.bid_overflow_policy")
    c = cfg.calibrate
    if c.n_grid < 2 or c.n_channels < 1 or not c.tol > 0:
        raise ConfigError("calibrate: need n_grid >= 2, n_channels >= 1, tol > 0")
    if c.epsilon_grid is not None and any(not e > 0 for e in c.epsilon_grid):
        raise ConfigError("calibrate.epsilon_grid: must be positive")
    s = cfg.asweep
    if s.I < 2 or s.K < 1 or not s.a_grid or any(not a > 0 for a in s.a_grid):
        raise ConfigError("asweep: need I >= 2, K >= 1 and a positive a_grid")
    if sorted(s.a_grid) != s.a_grid:
        raise ConfigError("asweep.a_grid: must be increasing")
    if not s.mse_ceiling > 0:
        raise ConfigError("asweep.mse_ceiling: must be positive")
    cmp_ = cfg.compare
    if cmp_.alpha < 0 or cmp_.n_channels < 1:
        raise ConfigError("compare: need alpha >= 0 and n_channels >= 1")
    for k, sc in enumerate(cmp_.scenarios):
        if sc.I < 1 or sc.Nr < 1:
            raise ConfigError(f"compare.scenarios[{k}]: I and Nr must be >= 1")
    return cfg


def parse_config(data) -> ScenarioConfig:
    return validate(_build(ScenarioConfig, data, ""))


def load_config(path) -> ScenarioConfig:
    """Read a config file, or the ``config`` block of a run manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(data, dict) and "command" in data and "config" in data:
        data = data["config"]
    try:
        return parse_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def default_config() -> ScenarioConfig:
    return validate(ScenarioConfig())


def apply_overrides(cfg: ScenarioConfig, seed=None, trials=None) -> ScenarioConfig:
    run = cfg.run
    if seed is not None:
        run = dataclasses.replace(run, seed=int(seed))
    if trials is not None:
        run = dataclasses.replace(run, n_trials=int(trials))
    return validate(dataclasses.replace(cfg, run=run))
