"""Pipeline configuration: defaults, TOML files, and flag overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields

from .errors import TempogenError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["PipelineConfig", "ConfigError", "UnknownKeyError", "load_config"]


class ConfigError(TempogenError):
    pass


class UnknownKeyError(ConfigError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    sample_rate: int = 16000
    frame_ms: float = 20.0
    max_events: int = 4
    clip_seconds: float = 10.0
    mix_weak: int = 1
    mix_strong: int = 2
    cfg_scale: float = 7.5
    model_preset: str = "toy"

    def __post_init__(self):
        for name in ("sample_rate", "frame_ms", "max_events", "clip_seconds",
                     "mix_weak", "mix_strong"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.cfg_scale < 0:
            raise ConfigError(f"cfg_scale must be non-negative, got {self.cfg_scale}")

    @property
    def frame_duration(self) -> float:
        return self.frame_ms / 1000.0

    @property
    def mix_ratio(self) -> tuple[int, int]:
        return (self.mix_weak, self.mix_strong)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then TOML file values, then explicit overrides.

    Unknown keys and wrongly typed values fail loudly; a malformed file
    surfaces the parser's line/column message.
    """
    values: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                values = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    allowed = {f.name: f.type for f in fields(PipelineConfig)}
    clean: dict = {}
    for key, value in values.items():
        if key not in allowed:
            raise UnknownKeyError(f"unknown config key {key!r}")
        want = allowed[key]
        if want == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        elif want == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
            value = float(value)
        elif want == "str" and not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
        clean[key] = value
    return PipelineConfig(**clean)
