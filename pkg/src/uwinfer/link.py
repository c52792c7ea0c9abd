"""FM0 backscatter uplink: framing, line coding, channel and receiver.

Chip values are impedance states: 1 = reflective, 0 = non-reflective.
FM0 inverts the level at every bit boundary; a data 0 also inverts at
mid-bit, a data 1 holds its level for the whole bit.

Frame layout (bit-exact, sent MSB-first)::

    preamble 0xAA55 (16 bits) | payload (any length) | CRC-8 (8 bits)

The CRC is CRC-8/ATM (poly 0x07, init 0x00, no reflection, no final xor)
over the payload bits packed MSB-first into bytes, the last byte padded
with zero bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .device import DeviceProfile, stage_energy
from .errors import CrcMismatchError, Fm0ViolationError, InvalidInputError, NoPreambleError

PREAMBLE_WORD = 0xAA55
PREAMBLE_BITS = 16
CRC_BITS = 8
CRC_POLY = 0x07
NON_REFLECTIVE_RATIO = 0.2


def _crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ CRC_POLY) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return table


_CRC_TABLE = _crc_table()


def crc8(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc = _CRC_TABLE[crc ^ byte]
    return crc


def as_bits(bits: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise InvalidInputError("bit streams may only contain 0 and 1")
    return arr.astype(np.uint8)


def int_to_bits(value: int, width: int) -> np.ndarray:
    if not 0 <= value < (1 << width):
        raise InvalidInputError(f"{value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def pack_bits(bits: Sequence[int]) -> bytes:
    """MSB-first packing, zero-padded to a whole byte."""
    return np.packbits(as_bits(bits)).tobytes()


def payload_crc(payload: Sequence[int]) -> int:
    return crc8(pack_bits(payload))


PREAMBLE = int_to_bits(PREAMBLE_WORD, PREAMBLE_BITS)


@dataclass(frozen=True)
class Packet:
    preamble: np.ndarray
    payload: np.ndarray
    checksum: int

    def bits(self) -> np.ndarray:
        return np.concatenate([self.preamble, self.payload, int_to_bits(self.checksum, CRC_BITS)])

    def __len__(self) -> int:
        return self.preamble.size + self.payload.size + CRC_BITS


def frame(payload: Sequence[int]) -> Packet:
    bits = as_bits(payload)
    if bits.size == 0:
        raise InvalidInputError("cannot frame an empty payload")
    return Packet(PREAMBLE.copy(), bits, payload_crc(bits))


def verify(packet: Packet) -> bool:
    return np.array_equal(packet.preamble, PREAMBLE) and payload_crc(packet.payload) == packet.checksum


@dataclass(frozen=True)
class LineSignal:
    chips: np.ndarray
    chip_rate_hz: float

    @property
    def duration_s(self) -> float:
        return self.chips.size / self.chip_rate_hz


def fm0_encode(bits: Sequence[int], initial_level: int = 0, bit_rate_bps: float = 1000.0) -> LineSignal:
    """Encode ``bits`` starting from the line level ``initial_level``."""
    b = as_bits(bits)
    if b.size == 0:
        raise InvalidInputError("cannot encode an empty bit stream")
    if initial_level not in (0, 1):
        raise InvalidInputError("initial level must be 0 or 1")
    # level after bit i flips once per bit plus once more per data 0,
    # i.e. parity of the running sum of the bits
    after = (initial_level + np.cumsum(b)) % 2
    before = np.concatenate([[initial_level], after[:-1]])
    chips = np.empty(2 * b.size, dtype=np.uint8)
    chips[0::2] = 1 - before
    chips[1::2] = after
    return LineSignal(chips, 2.0 * bit_rate_bps)


def fm0_violations(chips: Sequence[int], initial_level: int | None = None) -> np.ndarray:
    """Chip indices where a required bit-boundary inversion is missing."""
    c = np.asarray(chips, dtype=np.uint8)
    bad = np.flatnonzero(c[1:-1:2] == c[2::2]) * 2 + 2
    if initial_level is not None and c.size and c[0] == initial_level:
        bad = np.concatenate([[0], bad])
    return bad


def fm0_decode(chips: Sequence[int] | LineSignal, initial_level: int | None = None,
               strict: bool = True) -> np.ndarray:
    """Recover bits from hard chip decisions.

    A bit is 1 when its two chips agree. With ``strict`` any missing
    boundary inversion raises ``Fm0ViolationError``; otherwise the bits
    are returned as decided.
    """
    c = chips.chips if isinstance(chips, LineSignal) else np.asarray(chips, dtype=np.uint8)
    if c.size < 2 or c.size % 2:
        raise InvalidInputError(f"FM0 needs an even chip count >= 2, got {c.size}")
    if strict:
        bad = fm0_violations(c, initial_level)
        if bad.size:
            raise Fm0ViolationError("missing bit-boundary inversion", int(bad[0]))
    return (c[0::2] == c[1::2]).astype(np.uint8)


@dataclass(frozen=True)
class ChannelModel:
    attenuation: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.attenuation <= 1:
            raise InvalidInputError("attenuation must lie in (0, 1]")
        if not (self.noise_sigma >= 0 and np.isfinite(self.noise_sigma)):
            raise InvalidInputError("noise_sigma must be finite and >= 0")

    @property
    def levels(self) -> tuple[float, float]:
        """Received amplitude for (non-reflective, reflective) chips."""
        return NON_REFLECTIVE_RATIO * self.attenuation, self.attenuation

    @property
    def threshold(self) -> float:
        low, high = self.levels
        return 0.5 * (low + high)


@dataclass(frozen=True)
class LinkReport:
    bits: int
    chips: int
    duration_s: float
    energy_mj: float

    def to_records(self) -> dict:
        return {"bits": self.bits, "chips": self.chips,
                "duration_s": self.duration_s, "energy_mj": self.energy_mj}


def modulate(chips: np.ndarray, channel: ChannelModel, rng: np.random.Generator | None = None) -> np.ndarray:
    low, high = channel.levels
    samples = np.where(np.asarray(chips) == 1, high, low).astype(np.float64)
    if channel.noise_sigma > 0:
        rng = rng or np.random.default_rng(channel.seed)
        samples = samples + rng.normal(0.0, channel.noise_sigma, samples.size)
    return samples


def transmit(packet: Packet | Sequence[int], channel: ChannelModel, profile: DeviceProfile,
             initial_level: int = 0, lead_in_chips: int = 0) -> tuple[np.ndarray, LinkReport]:
    """Backscatter a framed packet (or a bare bit stream) through the channel.

    ``lead_in_chips`` idle non-reflective chips precede the packet; they
    are not billed, since the node is not modulating.
    """
    bits = packet.bits() if isinstance(packet, Packet) else as_bits(packet)
    signal = fm0_encode(bits, initial_level, profile.uplink_bps)
    chips = np.concatenate([np.zeros(lead_in_chips, dtype=np.uint8), signal.chips])
    samples = modulate(chips, channel)
    duration = bits.size / profile.uplink_bps
    report = LinkReport(int(bits.size), int(signal.chips.size), duration,
                        stage_energy(profile.p_backscatter_uw, duration))
    return samples, report


def hard_decisions(samples: np.ndarray, channel: ChannelModel | None = None) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if channel is not None:
        threshold = channel.threshold
    else:
        threshold = 0.5 * (samples.min() + samples.max())
    return (samples > threshold).astype(np.uint8)


_PREAMBLE_CHIPS = fm0_encode(PREAMBLE, 0).chips


def find_preamble(chips: np.ndarray, min_tail_chips: int = 2 * (1 + CRC_BITS)) -> int:
    """Index of the first exact preamble match in either polarity."""
    n = _PREAMBLE_CHIPS.size
    if chips.size < n + min_tail_chips:
        raise NoPreambleError("input too short to hold a frame")
    windows = np.lib.stride_tricks.sliding_window_view(chips[: chips.size - min_tail_chips], n)
    hit = np.all(windows == _PREAMBLE_CHIPS, axis=1) | np.all(windows != _PREAMBLE_CHIPS, axis=1)
    found = np.flatnonzero(hit)
    if found.size == 0:
        raise NoPreambleError("no preamble found")
    return int(found[0])


def receive(samples: np.ndarray, channel: ChannelModel | None = None,
            payload_bits: int | None = None) -> np.ndarray:
    """Locate, decode and CRC-check a frame; return its payload bits.

    Without ``payload_bits`` the frame is assumed to run to the end of
    ``samples``. Raises ``NoPreambleError``, ``Fm0ViolationError`` or
    ``CrcMismatchError``.
    """
    chips = hard_decisions(samples, channel)
    start = find_preamble(chips)
    if payload_bits is None:
        n_bits = (chips.size - start) // 2
    else:
        n_bits = PREAMBLE_BITS + payload_bits + CRC_BITS
        if start + 2 * n_bits > chips.size:
            raise NoPreambleError("frame truncated after preamble")
    frame_chips = chips[start:start + 2 * n_bits]
    bad = fm0_violations(frame_chips)
    if bad.size:
        raise Fm0ViolationError("missing bit-boundary inversion", start + int(bad[0]))
    bits = fm0_decode(frame_chips, strict=False)
    payload = bits[PREAMBLE_BITS:-CRC_BITS]
    received = bits_to_int(bits[-CRC_BITS:])
    expected = payload_crc(payload)
    if expected != received:
        raise CrcMismatchError(expected, received)
    return payload


def bit_error_rate(num_bits: int, channel: ChannelModel, seed: int = 0) -> float:
    """Monte-Carlo BER of unframed FM0 over ``channel`` with hard decisions."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, num_bits, dtype=np.uint8)
    chips = fm0_encode(bits, 0).chips
    decided = hard_decisions(modulate(chips, channel, rng), channel)
    return float(np.mean(fm0_decode(decided, strict=False) != bits))
