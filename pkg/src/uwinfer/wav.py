"""PCM WAV ingestion (16-bit mono, little-endian RIFF)."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import AudioClip
from .errors import FormatError


def read_wav(path: str | Path) -> AudioClip:
    """Read a 16-bit mono PCM file into an ``AudioClip`` scaled to [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as f:
            channels, width, rate = f.getnchannels(), f.getsampwidth(), f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as exc:
        # the stdlib reader rejects every non-PCM format tag (float, ADPCM, ...)
        raise FormatError(f"{path}: not a PCM WAV file ({exc})", field="format") from None
    except EOFError:
        raise FormatError(f"{path}: truncated RIFF header", field="header") from None
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit samples, got {8 * width}-bit", field="sample_width")
    if channels != 1:
        raise FormatError(f"{path}: expected mono, got {channels} channels", field="channels")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, float(rate))


def write_wav(path: str | Path, clip: AudioClip) -> None:
    rate = int(round(clip.sample_rate_hz))
    if rate != clip.sample_rate_hz:
        raise FormatError("WAV sample rates must be integral", field="sample_rate")
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(pcm.tobytes())
