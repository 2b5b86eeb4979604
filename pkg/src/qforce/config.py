"""Scenario configuration: INI-style sections with a fixed, typed schema.

Every key has a type and a default; unknown sections or keys are rejected
before any computation.  Example::

    [run]
    scenario = kernel-compare
    seed = 7

    [kernel]
    beta = 1.0
    scale = 10
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError

SCENARIOS = (
    "stationary-check", "evolve", "trajectories", "kernel-compare", "rel-check",
    "spin-mass", "spin-stats", "noether-check", "pair-creation",
)

# section -> key -> (type, default, allowed values or None)
SCHEMA: dict = {
    "run": {
        "scenario": (str, "stationary-check", SCENARIOS),
        "seed": (int, 0, None),
        "output": (str, "qforce-out", None),
    },
    "constants": {name: (float, 1.0, None) for name in ("hbar", "m", "c", "e", "omega")},
    "grid": {
        "points": (int, 0, None),
        "extent": (float, 0.0, None),
    },
    "kernel": {
        "beta": (float, 1.0, None),
        "order": (int, 1, (0, 1, 2, 3)),
        "density": (str, "gaussian", ("gaussian", "bimodal", "sech2")),
        "scale": (float, 10.0, None),
    },
    "stationary": {
        "case": (str, "hydrogen", ("hydrogen", "oscillator-ground", "oscillator-second", "oscillator-gap")),
        "tolerance": (float, 1e-6, None),
    },
    "evolve": {
        "steps": (int, 2000, None),
        "periods": (float, 1.0, None),
        "displacement": (float, 1.0, None),
        "store_every": (int, 20, None),
    },
    "trajectories": {
        "particles": (int, 10000, None),
        "steps": (int, 2000, None),
        "sample_every": (int, 50, None),
        "displacement": (float, 1.0, None),
        "write_every": (int, 100, None),
        "write_stride": (int, 100, None),
    },
    "rel": {
        "nt": (int, 128, None),
        "ny": (int, 64, None),
        "t_extent": (float, 1.0, None),
        "kappa": (float, 1.0, None),
    },
    "spin": {
        "epsilon": (float, 0.0, None),
        "epsilon_prime": (float, 0.3, None),
        "beta_prime": (float, 1.0, None),
        "n": (int, 64, None),
        "mode": (int, 3, None),
    },
    "noether": {
        "coeff": (float, 0.4, None),
        "nt": (int, 128, None),
        "ny": (int, 64, None),
    },
    "pair": {
        "tau": (float, 1.0, None),
        "horizon": (float, 10.0, None),
        "y_extent": (float, 40.0, None),
        "nt": (int, 201, None),
        "ny": (int, 401, None),
        "amplitude_plus": (float, 1.0, None),
        "center_plus": (float, 0.0, None),
        "width_plus": (float, 1.0, None),
        "amplitude_minus": (float, 1.0, None),
        "center_minus": (float, 0.0, None),
        "width_minus": (float, 1.0, None),
    },
}

POSITIVE = {("constants", k) for k in ("hbar", "m", "c", "e", "omega")} | {
    ("kernel", "beta"), ("kernel", "scale"), ("stationary", "tolerance"), ("evolve", "steps"),
    ("evolve", "periods"), ("evolve", "store_every"), ("trajectories", "particles"),
    ("trajectories", "steps"), ("trajectories", "sample_every"), ("trajectories", "write_every"),
    ("trajectories", "write_stride"), ("rel", "nt"), ("rel", "ny"), ("rel", "t_extent"),
    ("spin", "beta_prime"), ("spin", "n"), ("spin", "mode"), ("noether", "nt"), ("noether", "ny"),
    ("pair", "tau"), ("pair", "horizon"), ("pair", "y_extent"), ("pair", "nt"), ("pair", "ny"),
    ("pair", "width_plus"), ("pair", "width_minus"),
}


def _convert(section: str, key: str, raw: Any):
    kind, _, allowed = SCHEMA[section][key]
    try:
        value = kind(raw) if not isinstance(raw, str) or kind is str else kind(raw.strip())
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: expected {kind.__name__}, got {raw!r}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: must be finite, got {value!r}")
    if allowed is not None and value not in allowed:
        raise ConfigError(f"[{section}] {key}: {value!r} not in {list(allowed)}")
    if (section, key) in POSITIVE and not value > 0:
        raise ConfigError(f"[{section}] {key}: must be positive, got {value!r}")
    if section == "grid" and value < 0:
        raise ConfigError(f"[grid] {key}: must be non-negative (0 selects the scenario default)")
    return value


@dataclass(frozen=True)
class ScenarioConfig:
    values: Mapping = field(default_factory=dict)

    @property
    def scenario(self) -> str:
        return self.values["run"]["scenario"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def output(self) -> Path:
        return Path(self.values["run"]["output"])

    def get(self, section: str, key: str):
        return self.values[section][key]

    def section(self, name: str) -> dict:
        return dict(self.values[name])

    def as_dict(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}

    def digest(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def defaults() -> dict:
    return {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def build_config(sections: Optional[Mapping] = None, overrides: Optional[Mapping] = None) -> ScenarioConfig:
    """Validate ``sections`` ({section: {key: value}}) and dotted ``overrides`` against the schema."""
    values = defaults()
    merged: dict = {}
    for s, keys in (sections or {}).items():
        merged.setdefault(s, {}).update(keys)
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        s, k = dotted.split(".", 1)
        merged.setdefault(s, {})[k] = raw
    for s, keys in merged.items():
        if s not in SCHEMA:
            raise ConfigError(f"unknown section [{s}]")
        for k, raw in keys.items():
            if k not in SCHEMA[s]:
                raise ConfigError(f"unknown key {k!r} in [{s}]")
            values[s][k] = _convert(s, k, raw)
    return ScenarioConfig(values)


def parse_config_text(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if parser.defaults():
        raise ConfigError("keys outside a section are not allowed")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def load_config(path=None, overrides: Optional[Mapping] = None) -> ScenarioConfig:
    sections = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        sections = parse_config_text(text)
    return build_config(sections, overrides)


def schema_doc() -> str:
    """Plain-text listing of every section, key, type and default."""
    lines = []
    for s, keys in SCHEMA.items():
        lines.append(f"[{s}]")
        for k, (kind, default, allowed) in keys.items():
            extra = f"  one of {', '.join(map(str, allowed))}" if allowed else ""
            lines.append(f"  {k} ({kind.__name__}, default {default!r}){extra}")
    return "\n".join(lines)
