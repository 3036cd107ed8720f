"""Experiment configuration shared by the CLI and the replica runner."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .gw import OffspringLaw
from .observables import Beta


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = "simulate"
    sigma: float = 0.0
    tau: float = 0.0
    rho: float = 0.0
    t: float = 10.0
    r: float | None = None
    horizons: tuple[float, ...] = ()
    A: float = 4.0
    gamma: float = 0.75
    barrier: bool = False
    replicas: int = 1000
    first_replica: int = 0
    seed: int | None = None
    offspring: str = "2:1"
    p: float = 2.0
    grid_n: int = 9
    grid_max: float = 1.5
    min_boundary_distance: float = 0.15
    threads: int = 1
    node_cap: int = 10**8
    out: str | None = None
    csv: str | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(float(h) for h in self.horizons))
        for name in ("sigma", "tau", "rho", "t", "A", "gamma", "p", "grid_max", "min_boundary_distance"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.r is not None:
            object.__setattr__(self, "r", float(self.r))

    @property
    def beta(self) -> Beta:
        return Beta(self.sigma, self.tau)

    @property
    def law(self) -> OffspringLaw:
        return OffspringLaw.parse(self.offspring)

    def validate(self) -> "ExperimentConfig":
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [-1, 1]")
        if self.replicas < 0:
            raise ConfigError("replicas must be >= 0")
        if self.first_replica < 0:
            raise ConfigError("first_replica must be >= 0")
        if self.t < 0:
            raise ConfigError("t must be >= 0")
        if self.r is not None and not 0 <= self.r <= self.t:
            raise ConfigError("need 0 <= r <= t")
        if any(h < 0 for h in self.horizons):
            raise ConfigError("horizons must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.format not in ("json", "text"):
            raise ConfigError("format must be json or text")
        if self.barrier and not 0.5 < self.gamma < 1.0:
            raise ConfigError("invalid barrier exponent: need 1/2 < gamma < 1")
        try:
            self.law
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def resolved_horizons(self) -> tuple[float, ...]:
        hs = set(self.horizons) if self.horizons else {self.t}
        if self.r is not None:
            hs.add(self.r)
        return tuple(sorted(hs))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["horizons"] = list(self.horizons)
        return d

    def report_dict(self) -> dict:
        """Config as embedded in reports: everything that can change the numbers."""
        d = self.to_dict()
        for k in ("threads", "out", "csv", "format"):
            d.pop(k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "horizons" in d:
            d["horizons"] = tuple(d["horizons"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))
