"""Timed-caption data types and the canonical timed-caption text grammar.

A timed caption lists sound events together with the intervals where each
event is audible.  The canonical textual form is::

    caption  := clause (" and " clause)*
    clause   := description " at " interval ("," interval)*
    interval := onset "-" offset

Onsets and offsets are non-negative decimal seconds; the canonical rendering
uses exactly two fractional digits ("a dog barking at 1.00-2.50").  Finer
resolution survives in memory but is rounded on render.

The grammar stays unambiguous because a description may not contain the
substring " at " or " and " immediately followed by an interval-looking
token (digits, a dash, digits).  "a dog is barking and yipping" is a valid
description; "dog and 1.0-2.0" is not.  The parser rejects ambiguous inputs
with a positioned error instead of guessing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import PositionedError, TempogenError

__all__ = [
    "Interval",
    "TimedEvent",
    "TimedCaption",
    "Annotation",
    "CaptionError",
    "MalformedClauseError",
    "NonNumericTimeError",
    "InvertedIntervalError",
    "EmptyDescriptionError",
    "OverlappingIntervalsError",
    "InvalidCaptionError",
    "parse_tdc",
    "render_tdc",
]


class CaptionError(PositionedError):
    """Base class for caption parsing and validation failures."""


class MalformedClauseError(CaptionError):
    """Clause structure broken: missing ' at ', trailing junk, ambiguous text."""


class NonNumericTimeError(CaptionError):
    pass


class InvertedIntervalError(CaptionError):
    pass


class EmptyDescriptionError(CaptionError):
    pass


class OverlappingIntervalsError(CaptionError):
    """Two intervals of the same event overlap."""


class InvalidCaptionError(TempogenError, ValueError):
    """A caption value violates a type invariant."""


# A description must not look like it introduces or continues an interval
# list; see the module docstring.
_AMBIGUOUS_AT = re.compile(r" at (?=\d+(?:\.\d+)?-\d)")
_AMBIGUOUS_AND = re.compile(r" and (?=\d+(?:\.\d+)?-\d)")

_INTRODUCER = re.compile(r" at (?=\d+(?:\.\d+)?-\d)")
_TIME_PAIR = re.compile(r"(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)")
_COMMA = re.compile(r",\s*")


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open time span [onset, offset) in seconds."""

    onset: float
    offset: float

    def __post_init__(self):
        if self.onset < 0:
            raise InvalidCaptionError(f"interval onset must be non-negative, got {self.onset}")
        if not self.onset < self.offset:
            raise InvalidCaptionError(
                f"interval onset must precede offset, got [{self.onset}, {self.offset}]"
            )

    @property
    def duration(self) -> float:
        return self.offset - self.onset

    def overlaps(self, other: "Interval") -> bool:
        """Positive-length intersection; touching endpoints do not overlap."""
        return self.onset < other.offset and other.onset < self.offset

    def intersection(self, other: "Interval") -> "Interval | None":
        if not self.overlaps(other):
            return None
        return Interval(max(self.onset, other.onset), min(self.offset, other.offset))

    def contains_time(self, t: float) -> bool:
        return self.onset <= t < self.offset


@dataclass(frozen=True)
class TimedEvent:
    """One described sound event with the intervals where it occurs."""

    description: str
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        if not self.description:
            raise InvalidCaptionError("event description must be non-empty")
        if _AMBIGUOUS_AT.search(self.description) or _AMBIGUOUS_AND.search(self.description):
            raise InvalidCaptionError(
                "event description may not contain ' at ' or ' and ' followed by "
                f"an interval-like token: {self.description!r}"
            )
        object.__setattr__(self, "intervals", tuple(self.intervals))
        if not self.intervals:
            raise InvalidCaptionError("event needs at least one interval")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if b.onset < a.onset:
                raise InvalidCaptionError("event intervals must be sorted by onset")
            if a.overlaps(b):
                raise InvalidCaptionError(
                    f"event intervals must not overlap: {a} and {b} in {self.description!r}"
                )


@dataclass(frozen=True)
class TimedCaption:
    """Ordered events plus the clip duration they live in."""

    events: tuple[TimedEvent, ...]
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.events:
            raise InvalidCaptionError("caption needs at least one event")
        if self.duration <= 0:
            raise InvalidCaptionError(f"caption duration must be positive, got {self.duration}")
        for ev in self.events:
            for iv in ev.intervals:
                if iv.offset > self.duration + 1e-9:
                    raise InvalidCaptionError(
                        f"interval {iv} exceeds caption duration {self.duration}"
                    )

    @property
    def descriptions(self) -> tuple[str, ...]:
        return tuple(ev.description for ev in self.events)

    def max_offset(self) -> float:
        return max(iv.offset for ev in self.events for iv in ev.intervals)


@dataclass
class Annotation:
    """Reference event activity as a flat list of (description, interval) pairs.

    Unlike a caption, the same description may appear on several rows; rows
    for one description merge into a single event when converting.
    """

    items: list[tuple[str, Interval]] = field(default_factory=list)
    duration: float = 0.0

    def to_timed_caption(self) -> TimedCaption:
        order: list[str] = []
        grouped: dict[str, list[Interval]] = {}
        for desc, iv in self.items:
            if desc not in grouped:
                grouped[desc] = []
                order.append(desc)
            grouped[desc].append(iv)
        events = tuple(
            TimedEvent(desc, tuple(sorted(grouped[desc], key=lambda iv: iv.onset)))
            for desc in order
        )
        return TimedCaption(events=events, duration=self.duration)


def render_tdc(caption: TimedCaption) -> str:
    """Render a caption in the canonical grammar (two fractional digits)."""
    clauses = []
    for ev in caption.events:
        spans = ", ".join(f"{iv.onset:.2f}-{iv.offset:.2f}" for iv in ev.intervals)
        clauses.append(f"{ev.description} at {spans}")
    return " and ".join(clauses)


def parse_tdc(text: str, duration: float | None = None) -> TimedCaption:
    """Parse canonical timed-caption text.

    ``duration`` is out-of-band metadata (the grammar does not carry it);
    when omitted, the largest offset is used.  Intervals are sorted per
    event.  Every failure raises a :class:`CaptionError` carrying the
    character position.
    """
    if not text or text.isspace():
        raise MalformedClauseError("empty caption text", 0)

    pos = 0
    events: list[TimedEvent] = []
    n = len(text)
    while True:
        m = _INTRODUCER.search(text, pos)
        if m is None:
            # Keep a useful error class: ' at ' present but times unreadable.
            at = text.find(" at ", pos)
            if at == -1:
                raise MalformedClauseError("clause has no ' at <intervals>' part", pos)
            desc_end, times_start = at, at + 4
        else:
            desc_end, times_start = m.start(), m.end()

        description = text[pos:desc_end]
        if not description:
            raise EmptyDescriptionError("clause has an empty description", pos)
        bad = _AMBIGUOUS_AND.search(description) or _AMBIGUOUS_AT.search(description)
        if bad:
            raise MalformedClauseError(
                "ambiguous separator inside description", pos + bad.start()
            )

        intervals: list[Interval] = []
        pos = times_start
        while True:
            tm = _TIME_PAIR.match(text, pos)
            if tm is None:
                raise NonNumericTimeError("expected '<onset>-<offset>' with decimal seconds", pos)
            onset, offset = float(tm.group(1)), float(tm.group(2))
            if onset >= offset:
                raise InvertedIntervalError(
                    f"interval onset {tm.group(1)} is not before offset {tm.group(2)}", pos
                )
            intervals.append(Interval(onset, offset))
            pos = tm.end()
            cm = _COMMA.match(text, pos)
            if cm:
                pos = cm.end()
                continue
            break

        intervals.sort(key=lambda iv: iv.onset)
        for a, b in zip(intervals, intervals[1:]):
            if a.overlaps(b):
                raise OverlappingIntervalsError(
                    f"intervals {a} and {b} of one event overlap", desc_end
                )
        try:
            events.append(TimedEvent(description, tuple(intervals)))
        except InvalidCaptionError as exc:
            raise MalformedClauseError(str(exc), desc_end) from exc

        if pos == n:
            break
        if text.startswith(" and ", pos):
            pos += 5
            continue
        raise MalformedClauseError("unexpected text after interval list", pos)

    if duration is None:
        duration = max(iv.offset for ev in events for iv in ev.intervals)
    try:
        return TimedCaption(events=tuple(events), duration=duration)
    except InvalidCaptionError as exc:
        raise MalformedClauseError(str(exc), 0) from exc
