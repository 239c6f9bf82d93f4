"""Segment-based temporal metrics for labelled event activity.

The clip is cut into fixed-length segments (default 1 second); an event is
active in a segment when one of its intervals intersects it with positive
length.  Scores are micro-averaged over (segment, event) pairs: a true
positive where reference and hypothesis are both active, a false positive
where only the hypothesis is, a false negative where only the reference is.
Counts pool over a whole dataset before the precision/recall/F1 division,
and the multi-event variant pools only records whose reference lists two or
more events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .captions import Annotation, TimedCaption
from .errors import TempogenError
from .validation import check_positive

__all__ = [
    "GridMismatchError",
    "SegmentGrid",
    "ClassCounts",
    "EvalResult",
    "EvalSummary",
    "segment_activity",
    "segment_f1",
    "evaluate_set",
]

DEFAULT_SEGMENT_LENGTH = 1.0


class GridMismatchError(TempogenError):
    pass


@dataclass
class SegmentGrid:
    """Per-event boolean activity vectors over equal-length segments."""

    segment_length: float
    duration: float
    activity: dict[str, np.ndarray]

    @property
    def n_segments(self) -> int:
        return math.ceil(round(self.duration / self.segment_length, 9))

    def __post_init__(self):
        n = self.n_segments
        for event, vector in self.activity.items():
            vector = np.asarray(vector, dtype=bool)
            if vector.shape != (n,):
                raise GridMismatchError(
                    f"event {event!r}: activity length {vector.shape} != ({n},)"
                )
            self.activity[event] = vector


def _events_of(annotation) -> list[tuple[str, float, float]]:
    if isinstance(annotation, TimedCaption):
        return [
            (ev.description, iv.onset, iv.offset)
            for ev in annotation.events
            for iv in ev.intervals
        ]
    if isinstance(annotation, Annotation):
        return [(desc, iv.onset, iv.offset) for desc, iv in annotation.items]
    raise GridMismatchError(f"unsupported annotation type {type(annotation).__name__}")


def segment_activity(
    annotation,
    segment_length: float = DEFAULT_SEGMENT_LENGTH,
    duration: float | None = None,
    events=None,
) -> SegmentGrid:
    """Rasterize an annotation (or caption) onto the segment grid.

    ``events`` fixes the event universe (extra names get all-false rows), so
    reference and hypothesis grids can share one event set.  Intervals are
    clipped to the clip duration.
    """
    check_positive("segment_length", segment_length)
    if duration is None:
        duration = annotation.duration
    check_positive("duration", duration)
    n = math.ceil(round(duration / segment_length, 9))

    activity: dict[str, np.ndarray] = {}
    if events is not None:
        for name in events:
            activity[name] = np.zeros(n, dtype=bool)
    for name, onset, offset in _events_of(annotation):
        if name not in activity:
            if events is not None:
                raise GridMismatchError(f"event {name!r} not in the fixed event set")
            activity[name] = np.zeros(n, dtype=bool)
        onset = max(0.0, onset)
        offset = min(duration, offset)
        if offset <= onset:
            continue
        first = int(onset / segment_length)
        last = min(n - 1, int(math.ceil(offset / segment_length)) - 1)
        for s in range(first, last + 1):
            lo, hi = s * segment_length, (s + 1) * segment_length
            if min(offset, hi) - max(onset, lo) > 0:
                activity[name][s] = True
    return SegmentGrid(segment_length=segment_length, duration=duration, activity=activity)


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "ClassCounts"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class EvalResult:
    micro: ClassCounts = field(default_factory=ClassCounts)
    per_class: dict[str, ClassCounts] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.micro.precision

    @property
    def recall(self) -> float:
        return self.micro.recall

    @property
    def f1(self) -> float:
        return self.micro.f1

    def add_pair(self, reference: SegmentGrid, hypothesis: SegmentGrid):
        counts = _pair_counts(reference, hypothesis)
        for name, c in counts.items():
            self.micro.add(c)
            self.per_class.setdefault(name, ClassCounts()).add(c)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": {
                name: {"precision": c.precision, "recall": c.recall, "f1": c.f1,
                       "tp": c.tp, "fp": c.fp, "fn": c.fn}
                for name, c in sorted(self.per_class.items())
            },
        }


def _pair_counts(reference: SegmentGrid, hypothesis: SegmentGrid) -> dict[str, ClassCounts]:
    if reference.segment_length != hypothesis.segment_length:
        raise GridMismatchError("segment lengths differ")
    if reference.n_segments != hypothesis.n_segments:
        raise GridMismatchError(
            f"segment counts differ: {reference.n_segments} vs {hypothesis.n_segments}"
        )
    if set(reference.activity) != set(hypothesis.activity):
        raise GridMismatchError(
            f"event sets differ: {sorted(reference.activity)} vs {sorted(hypothesis.activity)}"
        )
    out = {}
    for name, ref in reference.activity.items():
        hyp = hypothesis.activity[name]
        out[name] = ClassCounts(
            tp=int(np.sum(ref & hyp)),
            fp=int(np.sum(~ref & hyp)),
            fn=int(np.sum(ref & ~hyp)),
        )
    return out


def segment_f1(reference: SegmentGrid, hypothesis: SegmentGrid) -> EvalResult:
    """Micro-averaged segment scores for one grid pair."""
    result = EvalResult()
    result.add_pair(reference, hypothesis)
    return result


@dataclass
class EvalSummary:
    overall: EvalResult
    multi_event: EvalResult | None
    n_records: int
    n_multi_event: int

    def to_json(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_multi_event": self.n_multi_event,
            "overall": self.overall.to_json(),
            "multi_event": self.multi_event.to_json() if self.multi_event else None,
        }


def _event_names(annotation) -> list[str]:
    seen = []
    for name, _, _ in _events_of(annotation):
        if name not in seen:
            seen.append(name)
    return seen


def evaluate_set(pairs, segment_length: float = DEFAULT_SEGMENT_LENGTH) -> EvalSummary:
    """Pool counts over (reference, hypothesis) annotation pairs.

    The multi-event result aggregates only records whose reference holds at
    least two events; it is None when no record qualifies.
    """
    overall = EvalResult()
    multi = EvalResult()
    n_records = 0
    n_multi = 0
    for reference, hypothesis in pairs:
        names = _event_names(reference)
        for extra in _event_names(hypothesis):
            if extra not in names:
                names.append(extra)
        duration = reference.duration
        ref_grid = segment_activity(reference, segment_length, duration, events=names)
        hyp_grid = segment_activity(hypothesis, segment_length, duration, events=names)
        overall.add_pair(ref_grid, hyp_grid)
        n_records += 1
        if len(_event_names(reference)) >= 2:
            multi.add_pair(ref_grid, hyp_grid)
            n_multi += 1
    return EvalSummary(
        overall=overall,
        multi_event=multi if n_multi else None,
        n_records=n_records,
        n_multi_event=n_multi,
    )
