"""WAV input and output.

Files on disk are RIFF PCM, 16-bit, mono, 16 kHz by default; the reader
additionally accepts 32-bit float mono WAV.  In memory every waveform is a
1-D float32 array in [-1, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import TempogenError

__all__ = ["AudioFormatError", "load_wav", "save_wav"]

_PCM_FULL_SCALE = 32767.0


class AudioFormatError(TempogenError):
    pass


def save_wav(path, waveform: np.ndarray, sample_rate: int) -> None:
    """Write a float waveform as 16-bit PCM; values are clipped to [-1, 1]."""
    waveform = np.asarray(waveform)
    if waveform.ndim != 1:
        raise AudioFormatError(f"expected mono waveform, got shape {waveform.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(waveform.astype(np.float64), -1.0, 1.0)
    pcm = np.round(clipped * _PCM_FULL_SCALE).astype(np.int16)
    wavfile.write(str(path), int(sample_rate), pcm)


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono WAV file; returns (float32 waveform, sample rate)."""
    sample_rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise AudioFormatError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        waveform = data.astype(np.float32) / np.float32(_PCM_FULL_SCALE)
    elif data.dtype == np.float32:
        waveform = data
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    return waveform, int(sample_rate)
