"""Dataset records and the JSONL manifest format.

One record per line, UTF-8, with keys ``audio_path``, ``tcc``, optional
``tdc`` (canonical timed-caption text), ``source`` and ``strength``.
Unknown keys survive a read/write round trip untouched.  ``audio_path`` is
interpreted relative to the manifest's directory so regenerated datasets
hash identically regardless of where they live.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .captions import CaptionError, TimedCaption, parse_tdc, render_tdc
from .errors import TempogenError

__all__ = [
    "DataRecord",
    "ManifestError",
    "SchemaViolationError",
    "StrengthMismatchError",
    "read_manifest",
    "write_manifest",
    "resolve_audio_path",
]

_SOURCES = ("simulated", "real")
_STRENGTHS = ("weak", "strong")
_KNOWN_KEYS = ("audio_path", "tcc", "tdc", "source", "strength")


class ManifestError(TempogenError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaViolationError(ManifestError):
    pass


class StrengthMismatchError(ManifestError):
    """strength says 'strong' without a tdc, or 'weak' with one."""


@dataclass
class DataRecord:
    """One audio clip with its captions and provenance flags."""

    audio_path: str
    tcc: str
    source: str
    strength: str
    tdc: TimedCaption | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in _SOURCES:
            raise SchemaViolationError(f"source must be one of {_SOURCES}, got {self.source!r}")
        if self.strength not in _STRENGTHS:
            raise SchemaViolationError(
                f"strength must be one of {_STRENGTHS}, got {self.strength!r}"
            )
        if (self.strength == "strong") != (self.tdc is not None):
            raise StrengthMismatchError(
                f"strength={self.strength!r} but tdc is "
                f"{'present' if self.tdc is not None else 'absent'}"
            )

    @property
    def is_strong(self) -> bool:
        return self.strength == "strong"


def _record_from_obj(obj: dict, line: int) -> DataRecord:
    if not isinstance(obj, dict):
        raise SchemaViolationError("record must be a JSON object", line)
    for key in ("audio_path", "tcc", "source", "strength"):
        if key not in obj:
            raise SchemaViolationError(f"missing key {key!r}", line)
        if not isinstance(obj[key], str):
            raise SchemaViolationError(f"key {key!r} must be a string", line)
    tdc = None
    if "tdc" in obj and obj["tdc"] is not None:
        if not isinstance(obj["tdc"], str):
            raise SchemaViolationError("key 'tdc' must be a string", line)
        try:
            tdc = parse_tdc(obj["tdc"])
        except CaptionError as exc:
            raise SchemaViolationError(f"bad tdc: {exc}", line) from exc
    extra = {k: v for k, v in obj.items() if k not in _KNOWN_KEYS}
    try:
        return DataRecord(
            audio_path=obj["audio_path"],
            tcc=obj["tcc"],
            source=obj["source"],
            strength=obj["strength"],
            tdc=tdc,
            extra=extra,
        )
    except ManifestError as exc:
        raise type(exc)(str(exc), line) from exc


def _record_to_obj(record: DataRecord) -> dict:
    obj = {
        "audio_path": record.audio_path,
        "tcc": record.tcc,
        "source": record.source,
        "strength": record.strength,
    }
    if record.tdc is not None:
        obj["tdc"] = render_tdc(record.tdc)
    obj.update(record.extra)
    return obj


def read_manifest(path, strict: bool = True):
    """Read a JSONL manifest.

    With ``strict=True`` (default) the first bad line raises.  With
    ``strict=False`` returns ``(records, errors)`` where each error is a
    :class:`ManifestError` carrying its 1-based line number.
    """
    records: list[DataRecord] = []
    errors: list[ManifestError] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                try:
                    obj = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise SchemaViolationError(f"invalid JSON: {exc.msg}", lineno) from exc
                records.append(_record_from_obj(obj, lineno))
            except ManifestError as exc:
                if strict:
                    raise
                errors.append(exc)
    if strict:
        return records
    return records, errors


def write_manifest(records, path) -> None:
    """Write records as JSONL; read followed by write is byte-stable."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_obj(record), ensure_ascii=False))
            fh.write("\n")


def resolve_audio_path(manifest_path, record: DataRecord) -> Path:
    """Resolve a record's audio path relative to its manifest."""
    p = Path(record.audio_path)
    if p.is_absolute():
        return p
    return Path(manifest_path).parent / p
