"""Shared generators for randomized tests.

Captions come out canonical: times on the centisecond grid, duration equal
to the largest offset, descriptions free of reserved separator patterns.
That makes parse(render(c)) == c an exact equality check.
"""

from __future__ import annotations

import numpy as np

from tempogen.captions import Interval, TimedCaption, TimedEvent

WORDS = [
    "dog", "barking", "a", "man", "speaking", "rain", "falling", "loud",
    "soft", "bell", "ringing", "engine", "humming", "birds", "chirping",
    "door", "slamming", "wind", "blowing", "footsteps", "approaching",
]


def random_description(rng: np.random.Generator, max_words: int = 4) -> str:
    n = int(rng.integers(1, max_words + 1))
    return " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), size=n))


def random_intervals(
    rng: np.random.Generator, duration: float, max_intervals: int = 3
) -> tuple[Interval, ...]:
    """Sorted non-overlapping intervals on the centisecond grid."""
    n = int(rng.integers(1, max_intervals + 1))
    ticks = int(round(duration * 100))
    cuts = sorted(rng.choice(ticks + 1, size=min(2 * n, ticks + 1), replace=False))
    intervals = []
    for a, b in zip(cuts[0::2], cuts[1::2]):
        if b > a:
            intervals.append(Interval(a / 100.0, b / 100.0))
    if not intervals:
        intervals = [Interval(0.0, duration)]
    return tuple(intervals)


def random_caption(
    rng: np.random.Generator,
    max_events: int = 4,
    max_duration: float = 6.0,
    max_intervals: int = 3,
) -> TimedCaption:
    duration = int(rng.integers(100, int(max_duration * 100) + 1)) / 100.0
    n_events = int(rng.integers(1, max_events + 1))
    events = []
    used = set()
    for _ in range(n_events):
        desc = random_description(rng)
        while desc in used:
            desc += " " + WORDS[int(rng.integers(len(WORDS)))]
        used.add(desc)
        events.append(TimedEvent(desc, random_intervals(rng, duration, max_intervals)))
    caption = TimedCaption(events=tuple(events), duration=duration)
    # Canonical duration: what a round trip through text reconstructs.
    return TimedCaption(events=caption.events, duration=caption.max_offset())
