"""Run configuration: defaults, flat key=value files, provenance digest."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError, DataError
from .som import TrainSchedule


@dataclass
class RunConfig:
    """Every knob of the pipeline; the defaults reproduce the reference setup."""

    map_size: int = 56
    top_k: int = 4
    epsilon: float = 0.01
    sigma: float = 4.0
    input_size: int = 224
    epochs: int = 10
    lr_start: float = 0.5
    lr_end: float = 0.01
    radius_start: float = 2.0
    radius_end: float = 0.5
    seed: int = 0
    interpolation: str = "nearest"
    covariance_center: str = "centroid"

    def __post_init__(self):
        if self.map_size < 1:
            raise ConfigError(f"map_size must be >= 1, got {self.map_size}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.input_size < 1:
            raise ConfigError(f"input_size must be >= 1, got {self.input_size}")
        if self.interpolation not in ("nearest", "bilinear"):
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")
        if self.covariance_center not in ("centroid", "mean"):
            raise ConfigError(f"unknown covariance_center {self.covariance_center!r}")
        try:
            self.schedule()
        except DataError as exc:
            raise ConfigError(str(exc)) from exc

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            epochs=self.epochs,
            lr_start=self.lr_start,
            lr_end=self.lr_end,
            radius_start=self.radius_start,
            radius_end=self.radius_end,
            seed=self.seed,
        )

    def serialize(self) -> str:
        """Canonical key=value text, sorted by key; the digest is taken over this."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.md5(self.serialize().encode()).hexdigest()

    def digest_bytes(self) -> bytes:
        return bytes.fromhex(self.digest())


_INT_FIELDS = {"map_size", "top_k", "input_size", "epochs", "seed"}
_FLOAT_FIELDS = {"epsilon", "sigma", "lr_start", "lr_end", "radius_start", "radius_end"}
_STR_FIELDS = {"interpolation", "covariance_center"}


def _coerce(key: str, raw: str):
    if key in _INT_FIELDS:
        return int(raw)
    if key in _FLOAT_FIELDS:
        return float(raw)
    if key in _STR_FIELDS:
        return raw.strip().strip("'\"")
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines; '#' starts a comment, blank lines ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides."""
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, str(value)) if isinstance(value, str) else value
    unknown = set(values) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig(**values)
