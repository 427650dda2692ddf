"""Engine configuration: one flat key=value file with section headers.

Sections and keys are fixed; unknown keys are rejected. ``to_text`` emits a
canonical rendering, so parse -> serialize -> parse is a fixed point. The
``HYPER_CONFIG`` environment variable may point at a default config file.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .datamodel import BucketKind
from .declarative import TIME_MODE_STEPS, TIME_MODE_WALL, ActivationParams
from .errors import ConfigError
from .procedural import SCOPE_MODE_FALLBACK, SCOPE_MODE_WEIGHTED, ScopeWeights
from .rulemine import MiningConfig

_SECTION_FIELDS = {
    "activation": ("d", "m", "s_max", "cold_base", "min_elapsed"),
    "mining": ("minsup", "minconf", "max_antecedent", "max_consequent",
               "fire_window", "min_periodic_occ", "periodic_tolerance",
               "lift_threshold", "minsup_frac"),
    "scopes": ("individual", "group", "global", "mode"),
    "engine": ("beta", "lift_cap", "time_mode", "exclude_recent", "cooc_window",
               "bucket_kind", "bucket_key", "tz_offset", "seed"),
}


@dataclass(frozen=True)
class EngineConfig:
    activation: ActivationParams = field(default_factory=ActivationParams)
    mining: MiningConfig = field(default_factory=MiningConfig)
    scopes: ScopeWeights = field(default_factory=ScopeWeights)
    beta: float = 1.0
    lift_cap: float = 5.0
    scope_mode: str = SCOPE_MODE_WEIGHTED
    time_mode: str = TIME_MODE_WALL
    exclude_recent: int = 0
    cooc_window: int = 5
    bucket_kind: BucketKind = BucketKind.TIME_OF_DAY
    bucket_key: str | None = None
    tz_offset: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.scope_mode not in (SCOPE_MODE_WEIGHTED, SCOPE_MODE_FALLBACK):
            raise ValueError(f"scope mode must be weighted or fallback, got {self.scope_mode!r}")
        if self.time_mode not in (TIME_MODE_WALL, TIME_MODE_STEPS):
            raise ValueError(f"time mode must be wall or steps, got {self.time_mode!r}")
        if self.exclude_recent < 0:
            raise ValueError("exclude_recent must be >= 0")
        if self.cooc_window < 1:
            raise ValueError("cooc_window must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lift_cap <= 0:
            raise ValueError("lift_cap must be positive")
        if self.bucket_kind is BucketKind.CUSTOM and not self.bucket_key:
            raise ValueError("custom bucket kind requires bucket_key")

    def to_dict(self) -> dict:
        """Nested plain-value snapshot, e.g. for metric reports."""
        return {
            "activation": {f.name: getattr(self.activation, f.name)
                           for f in fields(self.activation)},
            "mining": {f.name: getattr(self.mining, f.name)
                       for f in fields(self.mining)},
            "scopes": {"individual": self.scopes.individual,
                       "group": self.scopes.group,
                       "global": self.scopes.global_,
                       "mode": self.scope_mode},
            "engine": {"beta": self.beta, "lift_cap": self.lift_cap,
                       "time_mode": self.time_mode,
                       "exclude_recent": self.exclude_recent,
                       "cooc_window": self.cooc_window,
                       "bucket_kind": self.bucket_kind.value,
                       "bucket_key": self.bucket_key,
                       "tz_offset": self.tz_offset, "seed": self.seed},
        }

    def to_text(self) -> str:
        # Canonical section and key order keeps serialization byte-stable.
        d = self.to_dict()
        out = io.StringIO()
        for section in ("activation", "mining", "scopes", "engine"):
            out.write(f"[{section}]\n")
            for key in _SECTION_FIELDS[section]:
                value = d[section].get(key)
                if value is None:
                    continue
                out.write(f"{key} = {value}\n")
            out.write("\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "EngineConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        values: dict[str, dict[str, str]] = {}
        for section in parser.sections():
            if section not in _SECTION_FIELDS:
                raise ConfigError(f"unknown config section [{section}]")
            allowed = _SECTION_FIELDS[section]
            values[section] = {}
            for key, raw in parser.items(section):
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values[section][key] = raw
        try:
            return cls._from_values(values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _from_values(cls, values: dict[str, dict[str, str]]) -> "EngineConfig":
        act = values.get("activation", {})
        mining = values.get("mining", {})
        scopes = values.get("scopes", {})
        engine = values.get("engine", {})

        def opt(src, key, conv, default):
            return conv(src[key]) if key in src else default

        activation = ActivationParams(
            d=opt(act, "d", float, 0.5),
            m=opt(act, "m", int, 3),
            s_max=opt(act, "s_max", float, 2.0),
            cold_base=opt(act, "cold_base", float, -10.0),
            min_elapsed=opt(act, "min_elapsed", int, 1),
        )
        minsup_frac = mining.get("minsup_frac")
        mining_cfg = MiningConfig(
            minsup=opt(mining, "minsup", int, 3),
            minconf=opt(mining, "minconf", float, 0.5),
            max_antecedent=opt(mining, "max_antecedent", int, 3),
            max_consequent=opt(mining, "max_consequent", int, 1),
            fire_window=opt(mining, "fire_window", int, 10),
            min_periodic_occ=opt(mining, "min_periodic_occ", int, 3),
            periodic_tolerance=opt(mining, "periodic_tolerance", int, 1),
            lift_threshold=opt(mining, "lift_threshold", float, 2.0),
            minsup_frac=float(minsup_frac) if minsup_frac not in (None, "") else None,
        )
        scope_weights = ScopeWeights(
            individual=opt(scopes, "individual", float, 1.0),
            group=opt(scopes, "group", float, 0.5),
            global_=opt(scopes, "global", float, 0.25),
        )
        return cls(
            activation=activation,
            mining=mining_cfg,
            scopes=scope_weights,
            scope_mode=scopes.get("mode", SCOPE_MODE_WEIGHTED),
            beta=opt(engine, "beta", float, 1.0),
            lift_cap=opt(engine, "lift_cap", float, 5.0),
            time_mode=engine.get("time_mode", TIME_MODE_WALL),
            exclude_recent=opt(engine, "exclude_recent", int, 0),
            cooc_window=opt(engine, "cooc_window", int, 5),
            bucket_kind=BucketKind(engine.get("bucket_kind", "time_of_day")),
            bucket_key=engine.get("bucket_key") or None,
            tz_offset=opt(engine, "tz_offset", int, 0),
            seed=opt(engine, "seed", int, 0),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        return cls.from_text(text)
