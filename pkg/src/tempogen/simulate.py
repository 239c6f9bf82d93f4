"""Multi-event scene simulation from a bank of single-event segments.

A scene places labelled audio segments on a silent timeline at exact
offsets, so annotations are correct by construction.  Each distinct label
in a scene is narrated by one free-text description sampled from a mapping
table, the coarse caption is the descriptions joined with " and ", and the
timed caption pairs those descriptions with the placement intervals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import load_wav, save_wav
from .captions import Annotation, Interval, TimedCaption, render_tdc
from .errors import TempogenError
from .manifest import DataRecord, write_manifest
from .validation import check_positive, derived_rng, ensure_rng

__all__ = [
    "EventBankEntry",
    "EventBank",
    "SceneSpec",
    "Placement",
    "SceneResult",
    "SimulationConfig",
    "SimulationError",
    "PlacementOutOfBoundsError",
    "UnknownLabelError",
    "EmptyBankError",
    "load_event_bank",
    "load_mapping_table",
    "label_to_description",
    "place_event",
    "simulate_scene",
    "generate_dataset",
    "build_demo_bank",
]

MAX_DISTINCT_EVENTS = 4


class SimulationError(TempogenError):
    pass


class PlacementOutOfBoundsError(SimulationError):
    pass


class UnknownLabelError(SimulationError):
    pass


class EmptyBankError(SimulationError):
    pass


@dataclass(frozen=True)
class EventBankEntry:
    label: str
    clip_path: str
    duration: float

    def __post_init__(self):
        check_positive("event clip duration", self.duration)


class EventBank:
    """Single-event segments grouped by label; clips load lazily and cache."""

    def __init__(self, entries: list[EventBankEntry], base_dir=None, sample_rate: int = 16000):
        if not entries:
            raise EmptyBankError("event bank has no entries")
        self.sample_rate = sample_rate
        self.base_dir = Path(base_dir) if base_dir is not None else None
        self.by_label: dict[str, list[EventBankEntry]] = {}
        for entry in entries:
            self.by_label.setdefault(entry.label, []).append(entry)
        self._cache: dict[str, np.ndarray] = {}

    @property
    def labels(self) -> list[str]:
        return sorted(self.by_label)

    def entries_for(self, label: str) -> list[EventBankEntry]:
        if label not in self.by_label:
            raise UnknownLabelError(f"label {label!r} not in event bank")
        return self.by_label[label]

    def load_clip(self, entry: EventBankEntry) -> np.ndarray:
        if entry.clip_path not in self._cache:
            path = Path(entry.clip_path)
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            waveform, sr = load_wav(path)
            if sr != self.sample_rate:
                raise SimulationError(
                    f"{entry.clip_path}: sample rate {sr} != bank rate {self.sample_rate}"
                )
            self._cache[entry.clip_path] = waveform
        return self._cache[entry.clip_path]


def load_event_bank(path, sample_rate: int = 16000) -> EventBank:
    """Read an event bank descriptor (JSONL of label/clip_path/duration)."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            obj = json.loads(raw)
            try:
                entries.append(
                    EventBankEntry(
                        label=obj["label"],
                        clip_path=obj["clip_path"],
                        duration=float(obj["duration"]),
                    )
                )
            except KeyError as exc:
                raise SimulationError(f"{path} line {lineno}: missing key {exc}") from exc
    return EventBank(entries, base_dir=Path(path).parent, sample_rate=sample_rate)


def load_mapping_table(path) -> dict[str, list[str]]:
    """Read a label-to-descriptions table (JSON object of string lists)."""
    with open(path, encoding="utf-8") as fh:
        table = json.load(fh)
    for label, descriptions in table.items():
        if not descriptions:
            raise SimulationError(f"mapping for {label!r} is empty")
    return table


def label_to_description(label: str, table: dict[str, list[str]], rng) -> str:
    """Pick one description for a label, uniformly under ``rng``."""
    if label not in table:
        raise UnknownLabelError(f"label {label!r} not in mapping table")
    options = table[label]
    return options[int(ensure_rng(rng).integers(len(options)))]


@dataclass(frozen=True)
class Placement:
    label: str
    onset: float
    gain: float = 1.0


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic recipe for one simulated scene."""

    duration: float
    placements: tuple[Placement, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))
        check_positive("scene duration", self.duration)
        distinct = {p.label for p in self.placements}
        if not 1 <= len(distinct) <= MAX_DISTINCT_EVENTS:
            raise SimulationError(
                f"scene must hold 1..{MAX_DISTINCT_EVENTS} distinct events, got {len(distinct)}"
            )


@dataclass
class SceneResult:
    waveform: np.ndarray
    annotation: Annotation
    tcc: str
    tdc: TimedCaption
    peak_scale: float  # applied multiplier; 1.0 when the raw mix already fit


def place_event(
    timeline: np.ndarray, clip: np.ndarray, onset: float, gain: float, sample_rate: int
) -> np.ndarray:
    """Add ``gain * clip`` to a copy of ``timeline`` starting at ``onset`` seconds."""
    if onset < 0:
        raise PlacementOutOfBoundsError(f"onset {onset} is negative")
    start = int(round(onset * sample_rate))
    stop = start + len(clip)
    if stop > len(timeline):
        raise PlacementOutOfBoundsError(
            f"clip of {len(clip)} samples at onset {onset}s exceeds the "
            f"{len(timeline)}-sample timeline"
        )
    out = timeline.copy()
    out[start:stop] += np.float32(gain) * clip
    return out


def simulate_scene(spec: SceneSpec, bank: EventBank, table: dict[str, list[str]]) -> SceneResult:
    """Mix a scene and derive its annotation and captions.

    Fully deterministic given ``spec.seed``: the description of each distinct
    label and the clip chosen for each placement come from a generator seeded
    with it.  Placements of the same label share one description and become
    one multi-interval event in the timed caption.
    """
    rng = np.random.default_rng(spec.seed)
    sr = bank.sample_rate
    timeline = np.zeros(int(round(spec.duration * sr)), dtype=np.float32)

    descriptions: dict[str, str] = {}
    annotation = Annotation(items=[], duration=spec.duration)
    for placement in spec.placements:
        if placement.label not in descriptions:
            descriptions[placement.label] = label_to_description(placement.label, table, rng)
        entries = bank.entries_for(placement.label)
        entry = entries[int(rng.integers(len(entries)))]
        clip = bank.load_clip(entry)
        timeline = place_event(timeline, clip, placement.onset, placement.gain, sr)
        clip_seconds = len(clip) / sr
        annotation.items.append(
            (
                descriptions[placement.label],
                Interval(placement.onset, placement.onset + clip_seconds),
            )
        )

    peak = float(np.max(np.abs(timeline))) if timeline.size else 0.0
    peak_scale = 1.0
    if peak > 1.0:
        peak_scale = 1.0 / peak
        timeline = (timeline * np.float32(peak_scale)).astype(np.float32)

    tcc = " and ".join(descriptions[label] for label in descriptions)
    return SceneResult(
        waveform=timeline,
        annotation=annotation,
        tcc=tcc,
        tdc=annotation.to_timed_caption(),
        peak_scale=peak_scale,
    )


@dataclass
class SimulationConfig:
    sample_rate: int = 16000
    clip_seconds: float = 10.0
    max_events: int = 4
    disjoint_only: bool = False
    gain_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        check_positive("clip_seconds", self.clip_seconds)
        if not 1 <= self.max_events <= MAX_DISTINCT_EVENTS:
            raise SimulationError(f"max_events must be 1..{MAX_DISTINCT_EVENTS}")


def _draw_scene_spec(
    rng: np.random.Generator, config: SimulationConfig, bank: EventBank
) -> SceneSpec:
    labels = bank.labels
    n_events = int(rng.integers(1, config.max_events + 1))
    n_events = min(n_events, len(labels))
    chosen = [labels[i] for i in rng.choice(len(labels), size=n_events, replace=False)]

    for _ in range(1000):
        placements = []
        for label in chosen:
            entries = bank.entries_for(label)
            longest = max(e.duration for e in entries)
            # Onsets on the centisecond grid keep rendered captions exact.
            latest = max(0.0, config.clip_seconds - longest)
            onset = int(rng.integers(int(round(latest * 100)) + 1)) / 100.0
            gain = float(rng.uniform(*config.gain_range))
            placements.append(Placement(label, onset, gain))
        if not config.disjoint_only:
            break
        spans = sorted(
            (p.onset, p.onset + max(e.duration for e in bank.entries_for(p.label)))
            for p in placements
        )
        if all(a[1] <= b[0] for a, b in zip(spans, spans[1:])):
            break
    else:
        raise SimulationError("could not draw a disjoint scene; clips too long for the timeline")

    return SceneSpec(
        duration=config.clip_seconds,
        placements=tuple(placements),
        seed=int(rng.integers(2**63)),
    )


def generate_dataset(
    n: int,
    config: SimulationConfig,
    bank: EventBank,
    table: dict[str, list[str]],
    out_dir,
    seed: int,
) -> list[DataRecord]:
    """Simulate ``n`` scenes into ``out_dir`` and write ``manifest.jsonl``.

    Record ``i`` depends only on ``(seed, i)``, never on generation order,
    so reruns are byte-identical and generation may be parallelized.
    """
    if not bank.by_label:
        raise EmptyBankError("event bank has no labels")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(n):
        rng = derived_rng(seed, i)
        spec = _draw_scene_spec(rng, config, bank)
        scene = simulate_scene(spec, bank, table)
        name = f"clip_{i:05d}.wav"
        save_wav(out_dir / name, scene.waveform, config.sample_rate)
        extra = {}
        if scene.peak_scale != 1.0:
            extra["peak_scale"] = scene.peak_scale
        records.append(
            DataRecord(
                audio_path=name,
                tcc=scene.tcc,
                source="simulated",
                strength="strong",
                tdc=scene.tdc,
                extra=extra,
            )
        )
    write_manifest(records, out_dir / "manifest.jsonl")
    return records


# ---------------------------------------------------------------------------
# Demo bank: synthetic single-event segments for tests and quick starts
# ---------------------------------------------------------------------------

_DEMO_DESCRIPTIONS = {
    "beep": ["a short electronic beep", "a device beeping once", "a high-pitched beep"],
    "chirp": ["a rising chirp", "a quick frequency sweep", "an upward chirping tone"],
    "noise": ["a burst of static noise", "white noise hissing", "a noisy static burst"],
    "thump": ["a low muffled thump", "a dull heavy thud", "something thumping once"],
    "ring": ["a small bell ringing", "a metallic ringing tone", "a bright ring"],
    "hum": ["a steady low hum", "an electrical humming sound", "a deep droning hum"],
}


def _demo_clip(label: str, rng: np.random.Generator, sr: int) -> np.ndarray:
    dur = float(rng.choice([0.40, 0.60, 0.80, 1.00]))
    t = np.arange(int(dur * sr)) / sr
    env = np.sin(np.pi * t / dur) ** 2
    if label == "beep":
        wave = np.sin(2 * np.pi * 1400.0 * t)
    elif label == "chirp":
        wave = np.sin(2 * np.pi * (300.0 + 1200.0 * t / dur) * t)
    elif label == "noise":
        wave = rng.standard_normal(t.size) * 0.5
    elif label == "thump":
        wave = np.sin(2 * np.pi * 70.0 * t) * np.exp(-4 * t / dur)
    elif label == "ring":
        wave = np.sin(2 * np.pi * 900.0 * t) + 0.4 * np.sin(2 * np.pi * 1800.0 * t)
    else:
        wave = np.sin(2 * np.pi * 120.0 * t) + 0.2 * np.sin(2 * np.pi * 240.0 * t)
    out = (0.6 * env * wave).astype(np.float32)
    return np.clip(out, -1.0, 1.0)


def build_demo_bank(out_dir, seed: int = 0, sample_rate: int = 16000) -> tuple[Path, Path]:
    """Write a small synthetic event bank; returns (bank_path, mapping_path)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, label in enumerate(sorted(_DEMO_DESCRIPTIONS)):
        rng = derived_rng(seed, i)
        clip = _demo_clip(label, rng, sample_rate)
        name = f"{label}.wav"
        save_wav(out_dir / name, clip, sample_rate)
        entries.append({"label": label, "clip_path": name, "duration": len(clip) / sample_rate})

    bank_path = out_dir / "bank.jsonl"
    with open(bank_path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")
    mapping_path = out_dir / "mapping.json"
    with open(mapping_path, "w", encoding="utf-8") as fh:
        json.dump(_DEMO_DESCRIPTIONS, fh, indent=2)
    return bank_path, mapping_path
