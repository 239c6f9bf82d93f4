"""Filtering real data into temporally strong records, plus the training mix.

Grounding outputs (event description to detected intervals) are produced by
external tooling and ingested from JSON keyed by the record's audio path.
A record is kept as temporally strong when every event was detected and no
two events overlap; otherwise it stays temporally weak.  Intervals are
half-open, so events that merely touch do not overlap.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .captions import Annotation, Interval, TimedCaption
from .errors import TempogenError
from .manifest import DataRecord

__all__ = [
    "CurationError",
    "DescriptionMismatchError",
    "MissingGroundingError",
    "EmptyPoolError",
    "Overlap",
    "CurationReport",
    "load_groundings",
    "detect_overlaps",
    "detect_omissions",
    "curate",
    "mix_sampler",
]


class CurationError(TempogenError):
    pass


class DescriptionMismatchError(CurationError):
    pass


class MissingGroundingError(CurationError):
    pass


class EmptyPoolError(CurationError):
    pass


@dataclass(frozen=True)
class Overlap:
    """A positive-length collision between intervals of two distinct events."""

    event_a: int
    event_b: int
    interval_a: Interval
    interval_b: Interval

    @property
    def intersection(self) -> Interval:
        return self.interval_a.intersection(self.interval_b)


@dataclass
class CurationReport:
    kept: int = 0
    rejected_overlap: int = 0
    rejected_omission: int = 0
    reasons: dict[str, str] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.kept + self.rejected_overlap + self.rejected_omission

    def to_json(self) -> dict:
        return {
            "kept": self.kept,
            "rejected_overlap": self.rejected_overlap,
            "rejected_omission": self.rejected_omission,
            "total": self.total,
            "reasons": self.reasons,
        }


def load_groundings(path) -> dict[str, dict[str, list[Interval]]]:
    """Read groundings: record id -> {description: [[onset, offset], ...]}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out: dict[str, dict[str, list[Interval]]] = {}
    for record_id, per_event in raw.items():
        out[record_id] = {
            desc: [Interval(float(a), float(b)) for a, b in spans]
            for desc, spans in per_event.items()
        }
    return out


def detect_overlaps(caption: TimedCaption) -> list[Overlap]:
    """Every pair of intervals from distinct events that truly intersect.

    Sweep over onset-sorted intervals with an active set, so only pairs that
    can intersect are compared; results are ordered by (event_a, event_b)
    with event_a < event_b.
    """
    spans = []
    for idx, event in enumerate(caption.events):
        spans.extend((iv.onset, iv.offset, idx, iv) for iv in event.intervals)
    spans.sort(key=lambda s: (s[0], s[1]))

    overlaps: list[Overlap] = []
    active: list[tuple[float, int, Interval]] = []  # (offset, event index, interval)
    for onset, offset, idx, iv in spans:
        active = [a for a in active if a[0] > onset]
        for other_offset, other_idx, other_iv in active:
            if other_idx != idx:
                lo, hi = sorted((idx, other_idx))
                a_iv, b_iv = (iv, other_iv) if idx == lo else (other_iv, iv)
                overlaps.append(Overlap(lo, hi, a_iv, b_iv))
        active.append((offset, idx, iv))
    overlaps.sort(key=lambda o: (o.event_a, o.event_b, o.interval_a, o.interval_b))
    return overlaps


def detect_omissions(
    descriptions, grounding: dict[str, list[Interval]]
) -> list[str]:
    """Descriptions the grounding failed to locate anywhere in the clip."""
    wanted = list(descriptions)
    if set(wanted) != set(grounding):
        missing = set(wanted) - set(grounding)
        surplus = set(grounding) - set(wanted)
        raise DescriptionMismatchError(
            f"grounding covers a different description set "
            f"(missing={sorted(missing)}, surplus={sorted(surplus)})"
        )
    return [desc for desc in wanted if not grounding[desc]]


def _merge_intervals(intervals: list[Interval]) -> list[Interval]:
    """Union of possibly messy detector output within one event."""
    merged: list[Interval] = []
    for iv in sorted(intervals, key=lambda i: (i.onset, i.offset)):
        if merged and iv.onset <= merged[-1].offset:
            if iv.offset > merged[-1].offset:
                merged[-1] = Interval(merged[-1].onset, iv.offset)
        else:
            merged.append(iv)
    return merged


def _caption_from_grounding(
    grounding: dict[str, list[Interval]], duration: float | None
) -> TimedCaption:
    annotation = Annotation(items=[], duration=0.0)
    for desc, intervals in grounding.items():
        for iv in _merge_intervals(intervals):
            annotation.items.append((desc, iv))
    if duration is None:
        duration = max(iv.offset for _, iv in annotation.items)
    annotation.duration = duration
    return annotation.to_timed_caption()


def curate(
    records: list[DataRecord], groundings: dict[str, dict[str, list[Interval]]]
) -> tuple[list[DataRecord], CurationReport]:
    """Promote well-grounded weak records to strong; report every decision.

    Already-strong records (simulated data, or output of a previous pass)
    pass through untouched, which makes the operation idempotent.  Rejected
    records are not returned but stay usable as temporally coarse data; the
    report lists the reason per record.  The record's own
    ``extra["event_descriptions"]`` (when present) defines the expected
    event set, otherwise the grounding's keys do.
    """
    strong: list[DataRecord] = []
    report = CurationReport()
    for record in records:
        if record.is_strong:
            strong.append(record)
            report.kept += 1
            report.reasons[record.audio_path] = "kept"
            continue
        if record.audio_path not in groundings:
            raise MissingGroundingError(f"no grounding for record {record.audio_path!r}")
        grounding = groundings[record.audio_path]
        descriptions = record.extra.get("event_descriptions", list(grounding))

        omitted = detect_omissions(descriptions, grounding)
        if omitted:
            report.rejected_omission += 1
            report.reasons[record.audio_path] = f"omission: {', '.join(omitted)}"
            continue
        caption = _caption_from_grounding(grounding, record.extra.get("duration"))
        if detect_overlaps(caption):
            report.rejected_overlap += 1
            report.reasons[record.audio_path] = "overlap"
            continue

        strong.append(
            DataRecord(
                audio_path=record.audio_path,
                tcc=record.tcc,
                source=record.source,
                strength="strong",
                tdc=caption,
                extra=dict(record.extra),
            )
        )
        report.kept += 1
        report.reasons[record.audio_path] = "kept"
    return strong, report


def mix_sampler(weak, strong, ratio: tuple[int, int] = (1, 2), seed: int = 0):
    """Infinite deterministic stream mixing two pools at an exact ratio.

    Every aligned window of ``w + s`` draws holds exactly ``w`` weak and
    ``s`` strong records.  Within each pool the order is a seeded shuffle,
    reshuffled per pass, so the stream is reproducible from ``seed`` alone.
    """
    weak = list(weak)
    strong = list(strong)
    w, s = int(ratio[0]), int(ratio[1])
    if w <= 0 or s <= 0:
        raise CurationError(f"mix ratio must be two positive integers, got {ratio}")
    if not weak:
        raise EmptyPoolError("weak pool is empty")
    if not strong:
        raise EmptyPoolError("strong pool is empty")

    def cycle(pool, rng):
        while True:
            for i in rng.permutation(len(pool)):
                yield pool[i]

    root = np.random.SeedSequence(seed)
    weak_seq, strong_seq = root.spawn(2)
    weak_iter = cycle(weak, np.random.default_rng(weak_seq))
    strong_iter = cycle(strong, np.random.default_rng(strong_seq))

    window = w + s
    # Bresenham interleave: weak draws sit where the running ratio crosses.
    pattern = [((i + 1) * w) // window > (i * w) // window for i in range(window)]
    for take_weak in itertools.cycle(pattern):
        yield next(weak_iter) if take_weak else next(strong_iter)
