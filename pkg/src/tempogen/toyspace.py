"""Toy latent space where temporal control is directly measurable.

Each event label owns a fixed unit template vector, mutually orthogonal
across labels.  A clip's latent holds, per frame, the sum of the templates
of the events active at that frame plus small noise, so a detector can
recover event timestamps by correlating frames against templates with no
audio decoder in the loop.  A second "shifted" template bank with a chosen
cosine to the canonical one stands in for the distribution gap between
simulated and real recordings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .captions import Annotation, Interval, TimedCaption, TimedEvent
from .encoding import active_frame_mask, frame_count
from .errors import TempogenError
from .validation import check_positive, ensure_rng

__all__ = [
    "UnknownTemplateError",
    "make_template_banks",
    "save_templates",
    "load_templates",
    "synthesize_latent",
    "detect_latent_events",
    "LatentEventDetector",
    "ToyRecord",
    "draw_toy_record",
]


class UnknownTemplateError(TempogenError):
    pass


def make_template_banks(
    labels, dim: int, rng, shift_cos: float = 1.0
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Canonical and shifted template banks over the same labels.

    Templates are rows of one orthonormal set, so distinct labels are exactly
    orthogonal in both banks and shifted template k has cosine ``shift_cos``
    to canonical template k and zero to every other one.  Needs dim >= 2 *
    len(labels).
    """
    labels = list(labels)
    k = len(labels)
    if dim < 2 * k:
        raise TempogenError(f"need dim >= {2 * k} for {k} labels, got {dim}")
    rng = ensure_rng(rng)
    gauss = rng.standard_normal((dim, 2 * k))
    q, _ = np.linalg.qr(gauss)
    base, extra = q[:, :k].T, q[:, k:].T
    sin = np.sqrt(max(0.0, 1.0 - shift_cos**2))
    canonical = {label: base[i] for i, label in enumerate(labels)}
    shifted = {label: shift_cos * base[i] + sin * extra[i] for i, label in enumerate(labels)}
    return canonical, shifted


def save_templates(path, templates: dict[str, np.ndarray]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({k: v.tolist() for k, v in templates.items()}, fh)


def load_templates(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {k: np.asarray(v, dtype=np.float64) for k, v in raw.items()}


def synthesize_latent(
    events: list[tuple[str, tuple[Interval, ...]]],
    templates: dict[str, np.ndarray],
    duration: float,
    frame_duration: float,
    noise_scale: float = 0.0,
    rng=None,
) -> np.ndarray:
    """Latent whose active frames carry the sum of the active templates."""
    dim = len(next(iter(templates.values())))
    frames = frame_count(duration, frame_duration)
    latent = np.zeros((frames, dim))
    for label, intervals in events:
        if label not in templates:
            raise UnknownTemplateError(f"no template for label {label!r}")
        mask = active_frame_mask(TimedEvent(label, tuple(intervals)), duration, frame_duration)
        latent[mask] += templates[label]
    if noise_scale > 0.0:
        latent += noise_scale * ensure_rng(rng).standard_normal(latent.shape)
    return latent


def _bridge_and_merge(active: np.ndarray, frame_duration: float, bridge: int) -> list[Interval]:
    """Merge active frames into intervals; gaps shorter than ``bridge + 1``
    frames are closed first."""
    active = active.copy()
    if bridge > 0:
        run_start = None
        for i in range(len(active) + 1):
            on = i < len(active) and not active[i]
            if on and run_start is None:
                run_start = i
            elif not on and run_start is not None:
                interior = run_start > 0 and i < len(active)
                if interior and (i - run_start) <= bridge:
                    active[run_start:i] = True
                run_start = None
    intervals = []
    start = None
    for i in range(len(active) + 1):
        on = i < len(active) and active[i]
        if on and start is None:
            start = i
        elif not on and start is not None:
            intervals.append(Interval(start * frame_duration, i * frame_duration))
            start = None
    return intervals


def detect_latent_events(
    latent: np.ndarray,
    templates: dict[str, np.ndarray],
    threshold: float = 0.4,
    frame_duration: float = 0.02,
    bridge_frames: int = 1,
    norm_floor: float = 0.5,
) -> Annotation:
    """Recover event activity by correlating frames against each template.

    Correlation is the inner product with the unit template divided by
    ``max(frame norm, norm_floor)``: plain cosine for frames carrying real
    signal, while the floor keeps near-silent frames from normalizing pure
    noise up to full scale.
    """
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2:
        raise TempogenError(f"latent must be 2-D, got shape {latent.shape}")
    norms = np.linalg.norm(latent, axis=1)
    denom = np.maximum(norms, norm_floor)
    duration = latent.shape[0] * frame_duration
    annotation = Annotation(items=[], duration=duration)
    for label, template in templates.items():
        unit = template / np.linalg.norm(template)
        correlation = (latent @ unit) / denom
        for iv in _bridge_and_merge(correlation > threshold, frame_duration, bridge_frames):
            annotation.items.append((label, iv))
    return annotation


class LatentEventDetector(BaseEstimator):
    """Estimator facade over :func:`detect_latent_events`."""

    def __init__(self, templates=None, threshold: float = 0.4,
                 frame_duration: float = 0.02, bridge_frames: int = 1,
                 norm_floor: float = 0.5):
        self.templates = templates
        self.threshold = threshold
        self.frame_duration = frame_duration
        self.bridge_frames = bridge_frames
        self.norm_floor = norm_floor

    def fit(self, X=None, y=None):
        if not self.templates:
            raise UnknownTemplateError("detector needs a non-empty template bank")
        check_positive("frame_duration", self.frame_duration)
        self.templates_ = {k: np.asarray(v, dtype=np.float64) for k, v in self.templates.items()}
        return self

    def predict(self, latent) -> Annotation:
        if not hasattr(self, "templates_"):
            self.fit()
        return detect_latent_events(
            latent, self.templates_, self.threshold, self.frame_duration,
            self.bridge_frames, self.norm_floor,
        )


# ---------------------------------------------------------------------------
# Toy records for end-to-end experiments
# ---------------------------------------------------------------------------


def _disjoint_spans(rng, count, duration, event_seconds, max_tries) -> list[Interval]:
    """Non-overlapping spans built constructively: draw lengths until they
    fit, then scatter the leftover time into the gaps."""
    total_ticks = int(round(duration * 100))
    for _ in range(max_tries):
        length_ticks = [
            int(round(float(rng.uniform(*event_seconds)) * 100)) for _ in range(count)
        ]
        free = total_ticks - sum(length_ticks)
        if free >= 0:
            break
    else:
        raise TempogenError(
            f"{count} events of {event_seconds}s never fit in {duration}s"
        )
    cuts = sorted(int(rng.integers(0, free + 1)) for _ in range(count))
    gaps = [cuts[0]] + [b - a for a, b in zip(cuts, cuts[1:])]
    spans = []
    position = 0
    for gap, ticks in zip(gaps, length_ticks):
        position += gap
        spans.append(Interval(position / 100.0, (position + ticks) / 100.0))
        position += ticks
    return spans


@dataclass
class ToyRecord:
    """One toy clip: labelled events with intervals plus the clean latent."""

    labels: tuple[str, ...]
    descriptions: tuple[str, ...]
    intervals: tuple[tuple[Interval, ...], ...]
    domain: str  # "real" or "sim"
    strong: bool
    duration: float
    latent: np.ndarray

    @property
    def tcc(self) -> str:
        return " and ".join(self.descriptions)

    def caption(self) -> TimedCaption:
        events = tuple(
            TimedEvent(desc, ivs) for desc, ivs in zip(self.descriptions, self.intervals)
        )
        return TimedCaption(events=events, duration=self.duration)

    def label_annotation(self) -> Annotation:
        items = [(label, iv) for label, ivs in zip(self.labels, self.intervals) for iv in ivs]
        return Annotation(items=items, duration=self.duration)


def write_toy_dataset(records: list[ToyRecord], out_dir, frame_duration: float):
    """Write latent files plus a manifest for file-based training and eval.

    Each record's clause descriptions and labels ride along as extra
    manifest keys so consumers can rebuild conditioning without re-parsing
    caption text.
    """
    from .formats import write_latent
    from .manifest import DataRecord, write_manifest

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, record in enumerate(records):
        name = f"clip_{i:05d}.lat"
        write_latent(out_dir / name, record.latent, frame_duration, record.duration)
        manifest.append(
            DataRecord(
                audio_path=name,
                tcc=record.tcc,
                source="simulated" if record.domain == "sim" else "real",
                strength="strong" if record.strong else "weak",
                tdc=record.caption() if record.strong else None,
                extra={
                    "labels": list(record.labels),
                    "descriptions": list(record.descriptions),
                    "domain": record.domain,
                },
            )
        )
    path = out_dir / "manifest.jsonl"
    write_manifest(manifest, path)
    return path


def draw_toy_record(
    rng,
    labels,
    mapping: dict[str, list[str]],
    templates: dict[str, np.ndarray],
    duration: float,
    frame_duration: float,
    n_events: tuple[int, int] = (2, 4),
    event_seconds: tuple[float, float] = (0.5, 1.5),
    domain: str = "real",
    strong: bool = True,
    disjoint: bool = False,
    noise_scale: float = 0.05,
    max_tries: int = 200,
) -> ToyRecord:
    """Sample one toy clip; all times land on the centisecond grid."""
    rng = ensure_rng(rng)
    labels = list(labels)
    count = int(rng.integers(n_events[0], n_events[1] + 1))
    count = min(count, len(labels))
    chosen = [labels[i] for i in rng.choice(len(labels), size=count, replace=False)]

    if disjoint:
        spans = _disjoint_spans(rng, len(chosen), duration, event_seconds, max_tries)
    else:
        spans = []
        for _label in chosen:
            length = round(float(rng.uniform(*event_seconds)), 2)
            latest = max(0.0, duration - length)
            onset = int(rng.integers(int(round(latest * 100)) + 1)) / 100.0
            spans.append(Interval(onset, round(onset + length, 2)))

    descriptions = []
    for label in chosen:
        options = mapping[label]
        descriptions.append(options[int(rng.integers(len(options)))])
    intervals = tuple((iv,) for iv in spans)
    latent = synthesize_latent(
        list(zip(chosen, intervals)), templates, duration, frame_duration,
        noise_scale=noise_scale, rng=rng,
    )
    return ToyRecord(
        labels=tuple(chosen),
        descriptions=tuple(descriptions),
        intervals=intervals,
        domain=domain,
        strong=strong,
        duration=duration,
        latent=latent,
    )
