"""Signal path from raw audio to the CNN input plane.

Conventions fixed here and relied on by the tests:

* resampling is linear interpolation evaluated at the output timestamps
  ``k / target_rate``;
* the STFT uses a periodic Hann window and an unnormalized forward DFT,
  magnitude ``|X[k]|`` over the ``window_size // 2 + 1`` one-sided bins;
* the ADC rounds half away from zero and saturates at the rails;
* the spectrogram is mapped to ``n x n`` by bilinear interpolation with
  aligned corners, after scaling by its global maximum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .device import DeviceProfile
from .errors import InvalidInputError

DEFAULT_WINDOW = 64
DEFAULT_STEP = 32
HIGHPASS_CUTOFF_HZ = 5.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).ravel()
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("clip samples must be finite")
        if not (math.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise InvalidInputError(f"sample rate must be positive, got {self.sample_rate_hz!r}")
        object.__setattr__(self, "samples", _readonly(samples))
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def head(self, count: int) -> "AudioClip":
        return AudioClip(self.samples[:count], self.sample_rate_hz)


@dataclass(frozen=True)
class AdcTrace:
    codes: np.ndarray
    bits: int
    sample_rate_hz: float
    vref: float
    dc_offset: float
    gain: float = 1.0

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64).ravel()
        if codes.size and (codes.min() < 0 or codes.max() > self.full_scale):
            raise InvalidInputError(f"ADC codes must lie in [0, {self.full_scale}]")
        object.__setattr__(self, "codes", _readonly(codes))

    @property
    def full_scale(self) -> int:
        return (1 << self.bits) - 1

    def volts(self) -> np.ndarray:
        return self.codes / self.full_scale * self.vref


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray
    window_size: int
    window_step: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape


@dataclass(frozen=True)
class InputPlane:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidInputError(f"input plane must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("input plane values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def resample(clip: AudioClip, target_rate_hz: float) -> AudioClip:
    """Resample by linear interpolation at the output sample instants."""
    if not target_rate_hz > 0:
        raise InvalidInputError("target rate must be positive")
    if len(clip) == 0:
        raise InvalidInputError("cannot resample an empty clip")
    if target_rate_hz == clip.sample_rate_hz:
        return clip
    n_out = max(1, int(round(len(clip) * target_rate_hz / clip.sample_rate_hz)))
    t_out = np.arange(n_out) / target_rate_hz
    t_in = np.arange(len(clip)) / clip.sample_rate_hz
    return AudioClip(np.interp(t_out, t_in, clip.samples), target_rate_hz)


def normalize(clip: AudioClip) -> AudioClip:
    if len(clip) == 0:
        raise InvalidInputError("cannot normalize an empty clip")
    peak = np.max(np.abs(clip.samples))
    if peak == 0:
        return clip
    return AudioClip(clip.samples / peak, clip.sample_rate_hz)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def adc_sample(clip: AudioClip, profile: DeviceProfile) -> AdcTrace:
    """Clamp-circuit offset followed by unipolar quantization.

    Only the first ``profile.window_len`` samples are kept, as the node
    stores a single window in SRAM.
    """
    if clip.sample_rate_hz != profile.adc_rate_hz:
        raise InvalidInputError(
            f"clip is sampled at {clip.sample_rate_hz} Hz but the ADC runs at {profile.adc_rate_hz} Hz")
    full_scale = profile.adc_full_scale
    x = clip.samples[: profile.window_len]
    volts = x * profile.adc_gain + profile.dc_offset
    codes = np.clip(_round_half_away(volts / profile.vref * full_scale), 0, full_scale)
    return AdcTrace(codes.astype(np.int64), profile.adc_bits, profile.adc_rate_hz,
                    profile.vref, profile.dc_offset, profile.adc_gain)


def highpass_coefficient(cutoff_hz: float, sample_rate_hz: float) -> float:
    """Pole ``a = RC / (RC + dt)`` of ``y[n] = a * (y[n-1] + x[n] - x[n-1])``."""
    rc = 1.0 / (2.0 * math.pi * cutoff_hz)
    dt = 1.0 / sample_rate_hz
    return rc / (rc + dt)


def highpass(x: np.ndarray, sample_rate_hz: float, cutoff_hz: float = HIGHPASS_CUTOFF_HZ) -> np.ndarray:
    """Single-pole IIR high-pass, started as if ``x[0]`` had been held forever."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    a = highpass_coefficient(cutoff_hz, sample_rate_hz)
    return lfilter([a, -a], [1.0, -a], x - x[0])


def center(clip: AudioClip) -> AudioClip:
    """Subtract the clip mean (a block DC blocker; exactly idempotent up to rounding)."""
    return AudioClip(clip.samples - clip.samples.mean(), clip.sample_rate_hz)


def remove_dc(trace: AdcTrace, method: str = "mean") -> AudioClip:
    """Undo the clamp offset and return amplitudes in input units.

    ``method="mean"`` inverts the ADC transfer and then subtracts the
    window mean, which is an exact projection (idempotent, zero output for
    any constant input). ``method="highpass"`` runs the single-pole 5 Hz
    high-pass over the rescaled codes instead.
    """
    if trace.codes.size == 0:
        raise InvalidInputError("cannot remove DC from an empty trace")
    x = (trace.volts() - trace.dc_offset) / trace.gain
    if method == "mean":
        return center(AudioClip(x, trace.sample_rate_hz))
    if method == "highpass":
        return AudioClip(highpass(x, trace.sample_rate_hz), trace.sample_rate_hz)
    raise InvalidInputError(f"unknown DC removal method {method!r}")


def hann_window(size: int) -> np.ndarray:
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


def num_frames(length: int, window_size: int, window_step: int) -> int:
    return (length - window_size) // window_step + 1


def stft(clip: AudioClip, window_size: int = DEFAULT_WINDOW, window_step: int = DEFAULT_STEP) -> Spectrogram:
    if window_size < 2:
        raise InvalidInputError("window_size must be >= 2")
    if window_step < 1:
        raise InvalidInputError("window_step must be >= 1")
    if len(clip) < window_size:
        raise InvalidInputError(f"clip has {len(clip)} samples, fewer than the window size {window_size}")
    count = num_frames(len(clip), window_size, window_step)
    windows = np.lib.stride_tricks.sliding_window_view(clip.samples, window_size)[::window_step][:count]
    frames = np.abs(np.fft.rfft(windows * hann_window(window_size), axis=1))
    return Spectrogram(frames, window_size, window_step)


def _bilinear_axis(size_in: int, size_out: int) -> tuple[np.ndarray, np.ndarray]:
    if size_in == 1:
        return np.zeros(size_out, dtype=np.intp), np.zeros(size_out)
    pos = np.arange(size_out) * ((size_in - 1) / (size_out - 1))
    lo = np.minimum(np.floor(pos).astype(np.intp), size_in - 2)
    return lo, pos - lo


def bilinear_resize(grid: np.ndarray, n: int) -> np.ndarray:
    """Resize a 2-D grid to ``n x n``, corners aligned with the input corners."""
    grid = np.asarray(grid, dtype=np.float64)
    r0, fr = _bilinear_axis(grid.shape[0], n)
    c0, fc = _bilinear_axis(grid.shape[1], n)
    r1 = np.minimum(r0 + 1, grid.shape[0] - 1)
    c1 = np.minimum(c0 + 1, grid.shape[1] - 1)
    fr, fc = fr[:, None], fc[None, :]
    top = grid[r0][:, c0] * (1 - fc) + grid[r0][:, c1] * fc
    bottom = grid[r1][:, c0] * (1 - fc) + grid[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def to_input_plane(spec: Spectrogram, n: int) -> InputPlane:
    """Scale to the global maximum, then resize (frames x bins) to ``n x n``."""
    if n < 2:
        raise InvalidInputError("input plane side must be >= 2")
    if spec.frames.size == 0:
        raise InvalidInputError("spectrogram is empty")
    peak = spec.frames.max()
    scaled = spec.frames / peak if peak > 0 else np.zeros_like(spec.frames, dtype=np.float64)
    return InputPlane(bilinear_resize(scaled, n))


def preprocess(clip: AudioClip, profile: DeviceProfile, n: int, *, online: bool = False,
               window_size: int = DEFAULT_WINDOW, window_step: int = DEFAULT_STEP) -> InputPlane:
    """Full clip-to-plane pipeline.

    The offline path resamples, normalizes and analyses the first window.
    The online path additionally runs the clip through the ADC model and
    the software DC removal, as the deployed node does.
    """
    clip = normalize(resample(clip, profile.adc_rate_hz))
    if online:
        clip = normalize(remove_dc(adc_sample(clip, profile)))
    clip = clip.head(profile.window_len)
    return to_input_plane(stft(clip, window_size, window_step), n)
