"""Run configuration: the reproducibility record embedded in every output."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigurationError
from .flight import StepPolicy

__all__ = ["SimConfig", "load_config", "FORMAT_VERSION"]

FORMAT_VERSION = 1


@dataclass
class SimConfig:
    """Everything needed to reproduce a run bit for bit."""

    domain: dict[str, Any]
    epsilon: float
    min_generation: int
    n_flights: int = 10000
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    policy: dict[str, Any] = field(default_factory=dict)
    fit: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.domain, Mapping) or "type" not in self.domain:
            raise ConfigurationError("config: 'domain' must be a mapping with a 'type' key")
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ConfigurationError("config: epsilon must be positive")
        if int(self.min_generation) != self.min_generation:
            raise ConfigurationError("config: min_generation must be an integer")
        self.min_generation = int(self.min_generation)
        if self.epsilon < 2.0 ** (self.min_generation + 3):
            raise ConfigurationError(
                f"config: epsilon={self.epsilon:g} below 2^(min_generation+3)"
                f"={2.0**(self.min_generation+3):g}")
        if self.n_flights < 1:
            raise ConfigurationError("config: n_flights must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("config: workers must be >= 1")
        self.domain = dict(self.domain)
        self.policy = dict(self.policy)
        self.fit = dict(self.fit)
        self.step_policy()  # validate policy fields eagerly

    def step_policy(self) -> StepPolicy:
        known = {"c_step", "dt_max", "delta_abs", "t_max", "bridge_correction",
                 "approach_factor"}
        extra = set(self.policy) - known
        if extra:
            raise ConfigurationError(f"config: unknown policy fields {sorted(extra)}")
        return StepPolicy(**self.policy)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["format_version"] = FORMAT_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(obj: Mapping[str, Any]) -> "SimConfig":
        allowed = {"domain", "epsilon", "min_generation", "n_flights", "master_seed",
                   "workers", "output_dir", "policy", "fit"}
        data = {k: v for k, v in obj.items() if k != "format_version"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError(f"config: unknown keys {sorted(unknown)}")
        missing = {"domain", "epsilon", "min_generation"} - set(data)
        if missing:
            raise ConfigurationError(f"config: missing required keys {sorted(missing)}")
        try:
            return SimConfig(**data)
        except TypeError as exc:
            raise ConfigurationError(f"config: {exc}") from exc


def load_config(path: str | Path) -> SimConfig:
    """Parse a JSON config file."""
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigurationError(f"config file {p} must hold a JSON object")
    return SimConfig.from_dict(obj)
