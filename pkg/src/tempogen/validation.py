"""Input validation helpers shared across estimators and pipeline functions."""

from __future__ import annotations

import numpy as np

from .errors import TempogenError


class ValidationError(TempogenError, ValueError):
    pass


def check_positive(name: str, value) -> float:
    value = float(value)
    if not value > 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return value


def check_non_negative(name: str, value) -> float:
    value = float(value)
    if value < 0:
        raise ValidationError(f"{name} must be non-negative, got {value}")
    return value


def check_probability(name: str, value) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_array(name: str, x, ndim: int | None = None, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_waveform(name: str, x) -> np.ndarray:
    """Mono waveform: 1-D float array."""
    return check_array(name, x, ndim=1, dtype=np.float32)


def ensure_rng(seed_or_rng) -> np.random.Generator:
    """Accept a Generator, an integer seed, or None (fresh entropy)."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic per-item generator derived from a root seed and an index key.

    Independence from execution order is what makes parallel dataset
    generation reproducible, so never derive from a shared stateful rng.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))
