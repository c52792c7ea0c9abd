"""Seeded synthetic audio classes standing in for a marine-mammal corpus."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dsp import AudioClip
from .errors import FormatError, InvalidInputError
from .wav import read_wav, write_wav


@dataclass(frozen=True)
class ClassFamily:
    """``tone`` uses ``f_lo``; ``chirp`` sweeps ``f_lo -> f_hi``; ``noise`` is band-limited to [f_lo, f_hi]."""

    name: str
    kind: str
    f_lo: float
    f_hi: float | None = None

    def __post_init__(self):
        if self.kind not in ("tone", "chirp", "noise"):
            raise InvalidInputError(f"unknown signal family {self.kind!r}")
        if self.kind != "tone" and self.f_hi is None:
            raise InvalidInputError(f"{self.kind} family {self.name!r} needs f_hi")
        if min(self.frequencies) <= 0:
            raise InvalidInputError(f"family {self.name!r} has a non-positive frequency")

    @property
    def frequencies(self) -> tuple[float, ...]:
        return (self.f_lo,) if self.f_hi is None else (self.f_lo, self.f_hi)


DEFAULT_FAMILIES = (
    ClassFamily("tone_20hz", "tone", 20.0),
    ClassFamily("tone_70hz", "tone", 70.0),
    ClassFamily("chirp_30_130hz", "chirp", 30.0, 130.0),
    ClassFamily("noise_110_160hz", "noise", 110.0, 160.0),
    ClassFamily("tone_45hz", "tone", 45.0),
    ClassFamily("tone_100hz", "tone", 100.0),
    ClassFamily("chirp_140_40hz", "chirp", 140.0, 40.0),
    ClassFamily("noise_15_55hz", "noise", 15.0, 55.0),
)


def default_families(num_classes: int) -> tuple[ClassFamily, ...]:
    if not 2 <= num_classes <= len(DEFAULT_FAMILIES):
        raise InvalidInputError(f"built-in families cover 2..{len(DEFAULT_FAMILIES)} classes")
    return DEFAULT_FAMILIES[:num_classes]


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    families: tuple[ClassFamily, ...] = field(default_factory=lambda: default_families(4))
    clips_per_class: int = 50
    clip_seconds: float = 2.0
    sample_rate_hz: float = 330.0
    seed: int = 0
    freq_jitter: float = 0.03
    noise_floor: float = 0.05

    @property
    def num_classes(self) -> int:
        return len(self.families)

    def validate(self) -> None:
        if len(self.families) < 2:
            raise InvalidInputError("need at least two classes")
        keys = [(f.kind, f.frequencies) for f in self.families]
        if len(set(keys)) != len(keys) or len({f.name for f in self.families}) != len(keys):
            raise InvalidInputError("class signal families must be pairwise distinct")
        nyquist = self.sample_rate_hz / 2
        for fam in self.families:
            if max(fam.frequencies) * (1 + self.freq_jitter) >= nyquist:
                raise InvalidInputError(
                    f"family {fam.name!r} reaches {max(fam.frequencies)} Hz (+jitter), "
                    f"at or above the {nyquist} Hz Nyquist limit")
        if self.clips_per_class < 1 or self.clip_seconds <= 0:
            raise InvalidInputError("clips_per_class and clip_seconds must be positive")

    def to_records(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LabeledClip:
    clip: AudioClip
    label: int
    class_name: str


def _render(fam: ClassFamily, t: np.ndarray, rate: float, rng: np.random.Generator, jitter: float) -> np.ndarray:
    scale = 1.0 + rng.uniform(-jitter, jitter)
    phase = rng.uniform(0, 2 * np.pi)
    if fam.kind == "tone":
        return np.sin(2 * np.pi * fam.f_lo * scale * t + phase)
    if fam.kind == "chirp":
        f0, f1 = fam.f_lo * scale, fam.f_hi * scale
        k = (f1 - f0) / t[-1] if t[-1] > 0 else 0.0
        return np.sin(2 * np.pi * (f0 * t + 0.5 * k * t ** 2) + phase)
    spectrum = np.fft.rfft(rng.standard_normal(t.size))
    freqs = np.fft.rfftfreq(t.size, 1.0 / rate)
    spectrum[(freqs < fam.f_lo) | (freqs > fam.f_hi)] = 0
    x = np.fft.irfft(spectrum, t.size)
    return x / (np.max(np.abs(x)) or 1.0)


def synth_dataset(spec: SyntheticDatasetSpec) -> list[LabeledClip]:
    """Generate ``clips_per_class`` clips per family, ordered by class."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.clip_seconds * spec.sample_rate_hz))
    t = np.arange(n) / spec.sample_rate_hz
    out = []
    for label, fam in enumerate(spec.families):
        for _ in range(spec.clips_per_class):
            x = rng.uniform(0.5, 0.9) * _render(fam, t, spec.sample_rate_hz, rng, spec.freq_jitter)
            x = x + spec.noise_floor * rng.standard_normal(n)
            x = np.clip(x, -1.0, 1.0)
            out.append(LabeledClip(AudioClip(x, spec.sample_rate_hz), label, fam.name))
    return out


def write_dataset(root: str | Path, clips: list[LabeledClip]) -> list[Path]:
    """One sub-directory per class, prefixed with the label so order survives a reload."""
    root = Path(root)
    paths, counters = [], {}
    for item in clips:
        folder = root / f"{item.label:02d}_{item.class_name}"
        folder.mkdir(parents=True, exist_ok=True)
        idx = counters.get(item.label, 0)
        counters[item.label] = idx + 1
        path = folder / f"clip_{idx:04d}.wav"
        write_wav(path, item.clip)
        paths.append(path)
    return paths


def load_dataset(root: str | Path) -> tuple[list[LabeledClip], list[str]]:
    """Read ``root/<class>/*.wav``; labels follow sorted directory names."""
    root = Path(root)
    if not root.is_dir():
        raise InvalidInputError(f"dataset directory {root} does not exist")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise FormatError(f"{root} has no class sub-directories", field="dataset")
    clips, names = [], []
    for label, folder in enumerate(class_dirs):
        names.append(folder.name)
        for path in sorted(folder.glob("*.wav")):
            clips.append(LabeledClip(read_wav(path), label, folder.name))
    return clips, names
