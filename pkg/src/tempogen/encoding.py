"""Timestamp-matrix construction from timed captions.

The matrix has one row per latent frame (default 20 ms) and one column per
embedding channel.  Row ``t`` holds the sum of the embeddings of every
event active at that frame's center time; rows with no active event are
exactly zero.  Temporally coarse inputs get a constant placeholder row
instead, which is distinguishable from the all-zero strong rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .captions import TimedCaption
from .embedding import Embedder, HashingTextEmbedder
from .errors import TempogenError
from .validation import check_positive

__all__ = [
    "DEFAULT_FRAME_DURATION",
    "TimestampMatrix",
    "FrameMismatchError",
    "frame_count",
    "frame_centers",
    "active_frame_mask",
    "embed_event",
    "build_timestamp_matrix",
    "placeholder_vector",
    "coarse_placeholder",
    "TimestampEncoder",
]

DEFAULT_FRAME_DURATION = 0.020


class FrameMismatchError(TempogenError):
    pass


@dataclass
class TimestampMatrix:
    values: np.ndarray  # (frames, channels)
    frame_duration: float
    duration: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise FrameMismatchError(f"matrix must be 2-D, got shape {self.values.shape}")
        expected = frame_count(self.duration, self.frame_duration)
        if self.values.shape[0] != expected:
            raise FrameMismatchError(
                f"{self.values.shape[0]} rows but duration {self.duration}s at "
                f"{self.frame_duration}s frames needs {expected}"
            )

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def frame_count(duration: float, frame_duration: float) -> int:
    check_positive("duration", duration)
    check_positive("frame_duration", frame_duration)
    return math.ceil(round(duration / frame_duration, 9))


def frame_centers(duration: float, frame_duration: float) -> np.ndarray:
    n = frame_count(duration, frame_duration)
    return (np.arange(n) + 0.5) * frame_duration


def active_frame_mask(event, duration: float, frame_duration: float) -> np.ndarray:
    """Boolean mask of frames whose center falls inside any event interval."""
    centers = frame_centers(duration, frame_duration)
    mask = np.zeros(centers.size, dtype=bool)
    for iv in event.intervals:
        mask |= (centers >= iv.onset) & (centers < iv.offset)
    return mask


def embed_event(description: str, embedder: Embedder) -> np.ndarray:
    """Embed one event description; result is a (dim,) float vector."""
    vec = np.asarray(embedder.embed(description), dtype=np.float64)
    if vec.shape != (embedder.dim,):
        raise FrameMismatchError(
            f"embedder returned shape {vec.shape}, expected ({embedder.dim},)"
        )
    return vec


def build_timestamp_matrix(
    caption: TimedCaption,
    embedder: Embedder,
    frame_duration: float = DEFAULT_FRAME_DURATION,
) -> TimestampMatrix:
    """Sum event embeddings into the frames where each event is active."""
    n = frame_count(caption.duration, frame_duration)
    values = np.zeros((n, embedder.dim), dtype=np.float64)
    for event in caption.events:
        vec = embed_event(event.description, embedder)
        mask = active_frame_mask(event, caption.duration, frame_duration)
        values[mask] += vec
    return TimestampMatrix(values=values, frame_duration=frame_duration, duration=caption.duration)


def placeholder_vector(dim: int) -> np.ndarray:
    """Fixed nonzero row used for temporally coarse inputs; norm-comparable
    to unit event embeddings."""
    return np.full(dim, 1.0 / math.sqrt(dim))


def coarse_placeholder(
    duration: float,
    frame_duration: float = DEFAULT_FRAME_DURATION,
    dim: int = 32,
    vector: np.ndarray | None = None,
) -> TimestampMatrix:
    """Constant matrix for inputs that carry no timestamps."""
    if vector is None:
        vector = placeholder_vector(dim)
    vector = np.asarray(vector, dtype=np.float64)
    n = frame_count(duration, frame_duration)
    values = np.tile(vector, (n, 1))
    return TimestampMatrix(values=values, frame_duration=frame_duration, duration=duration)


class TimestampEncoder(BaseEstimator, TransformerMixin):
    """Transformer from timed captions to timestamp matrices.

    Stateless apart from resolving the default embedder, so ``fit`` only
    validates parameters.  ``transform`` accepts a single caption or an
    iterable of captions.
    """

    def __init__(self, embedder=None, frame_duration: float = DEFAULT_FRAME_DURATION):
        self.embedder = embedder
        self.frame_duration = frame_duration

    def fit(self, X=None, y=None):
        check_positive("frame_duration", self.frame_duration)
        self.embedder_ = self.embedder if self.embedder is not None else HashingTextEmbedder()
        return self

    def _check_fitted(self):
        if not hasattr(self, "embedder_"):
            self.fit()

    def encode(self, caption: TimedCaption) -> TimestampMatrix:
        self._check_fitted()
        return build_timestamp_matrix(caption, self.embedder_, self.frame_duration)

    def coarse(self, duration: float) -> TimestampMatrix:
        self._check_fitted()
        return coarse_placeholder(duration, self.frame_duration, self.embedder_.dim)

    def transform(self, X):
        if isinstance(X, TimedCaption):
            return self.encode(X)
        return [self.encode(caption) for caption in X]
