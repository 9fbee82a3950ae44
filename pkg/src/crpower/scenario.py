"""Physical scenario description, unit conventions and config ingestion.

All quantities are linear (power ratios, linear watt-like units).  Config
files may carry dB values through an explicit ``_db`` key suffix; the
conversion ``linear = 10**(db/10)`` is applied exactly once at parse time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Raised when a config document is missing keys or violates invariants."""


# Scenario fields that may be given in dB (gains and powers).
_DB_ALLOWED = {"g1", "g2", "gamma_", "h", "n0", "pp", "p_avg", "i_avg"}
# Config documents use the bare name "gamma"; the field keeps a trailing
# underscore so it never collides with gamma-function helpers.
_CONFIG_ALIASES = {"gamma": "gamma_"}


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Scenario:
    """All physical and budget parameters of one cognitive-radio instance.

    Gains are linear channel power gains: ``g1`` PT->ST, ``g2`` PT->SR,
    ``gamma_`` ST->PR (the interference path) and ``h`` ST->SR (the data
    path).  ``pp`` is the primary symbol power, ``q0`` the primary idle
    probability, ``p_avg``/``i_avg`` the average transmit-power and
    interference budgets, ``frame_t`` the frame duration in seconds,
    ``fs`` the sampling frequency in Hz and ``m`` the number of power
    levels.
    """

    g1: float
    g2: float
    gamma_: float
    h: float
    n0: float
    pp: float
    q0: float
    p_avg: float
    i_avg: float
    frame_t: float
    fs: float
    m: int

    def __post_init__(self):
        positive = ["g1", "gamma_", "h", "n0", "pp", "p_avg", "i_avg", "frame_t", "fs"]
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
        if not (isinstance(self.g2, (int, float)) and math.isfinite(self.g2) and self.g2 >= 0):
            raise ConfigError(f"g2 must be >= 0, got {self.g2!r}")
        if not (0.0 <= self.q0 <= 1.0):
            raise ConfigError(f"q0 out of range [0, 1]: {self.q0!r}")
        if not (isinstance(self.m, int) and self.m >= 1):
            raise ConfigError(f"m must be an integer >= 1, got {self.m!r}")
        if self.frame_t * self.fs < 1:
            raise ConfigError("frame_t*fs must be >= 1 (at least one sample per frame)")

    @property
    def q1(self) -> float:
        return 1.0 - self.q0

    def rate_h0(self, p):
        """SU spectral efficiency when the primary is idle, log2(1 + p*h/n0)."""
        return math.log2(1.0 + p * self.h / self.n0)

    def rate_h1(self, p):
        """SU spectral efficiency under primary interference at SR."""
        return math.log2(1.0 + p * self.h / (self.n0 + self.g2 * self.pp))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


def scenario_from_config(doc) -> Scenario:
    """Build a validated Scenario from a config document.

    ``doc`` may be a mapping, a JSON string, or a path-like pointing at a
    JSON file.  Keys use the scenario field names ("gamma" for the ST->PR
    gain); gain/power keys may instead appear with a ``_db`` suffix.
    Supplying both the linear and dB form of one key is an error.
    """
    if isinstance(doc, (str, bytes)):
        text = doc
        stripped = text.lstrip() if isinstance(text, str) else text.lstrip(b" ")
        if not (isinstance(stripped, str) and stripped.startswith("{")):
            with open(doc, "r", encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config must be a key-value mapping, got {type(doc).__name__}")

    values: dict[str, float] = {}
    seen_keys = set(doc)
    for f in fields(Scenario):
        name = f.name
        key = "gamma" if name == "gamma_" else name
        db_key = key + "_db"
        has_lin = key in doc
        has_db = db_key in doc
        if has_db and name not in _DB_ALLOWED:
            raise ConfigError(f"key {db_key!r} not allowed: {key} has no dB form")
        if has_lin and has_db:
            raise ConfigError(f"duplicate key: both {key!r} and {db_key!r} given")
        if not has_lin and not has_db:
            raise ConfigError(f"missing key: {key!r}")
        raw = doc[db_key] if has_db else doc[key]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"non-numeric value for {db_key if has_db else key!r}: {raw!r}")
        value = db_to_linear(float(raw)) if has_db else float(raw)
        if name == "m":
            if value != int(value):
                raise ConfigError(f"m must be an integer, got {raw!r}")
            values[name] = int(value)
        else:
            values[name] = value
        seen_keys.discard(key)
        seen_keys.discard(db_key)
    if seen_keys:
        raise ConfigError(f"unknown config keys: {sorted(seen_keys)}")
    return Scenario(**values)


def sample_count(s: Scenario, tau: float) -> int:
    """Number of sensing samples for a sensing time tau, round(tau*fs)."""
    if not (0.0 <= tau <= s.frame_t):
        raise ValueError(f"tau out of range [0, {s.frame_t}]: {tau}")
    return int(round(tau * s.fs))


@dataclass(frozen=True)
class SensingConfig:
    """Candidate sensing times searched by the optimizer, sorted ascending."""

    tau_grid: tuple = ()

    def __post_init__(self):
        grid = tuple(float(t) for t in self.tau_grid)
        if not grid:
            raise ConfigError("tau grid must not be empty")
        if any(t1 >= t2 for t1, t2 in zip(grid, grid[1:])):
            raise ConfigError("tau grid must be strictly increasing")
        object.__setattr__(self, "tau_grid", grid)

    @classmethod
    def uniform(cls, s: Scenario, points: int = 51) -> "SensingConfig":
        """Uniform grid of candidate sensing times over [0, frame_t]."""
        if points < 1:
            raise ConfigError("tau grid needs at least one point")
        if points == 1:
            return cls((0.0,))
        step = s.frame_t / (points - 1)
        return cls(tuple(i * step for i in range(points)))

    def validated(self, s: Scenario) -> "SensingConfig":
        if self.tau_grid[0] < 0 or self.tau_grid[-1] > s.frame_t:
            raise ConfigError(
                f"tau grid must lie within [0, {s.frame_t}], got "
                f"[{self.tau_grid[0]}, {self.tau_grid[-1]}]"
            )
        return self
