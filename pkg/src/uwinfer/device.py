"""Device profile, per-stage energy ledger, capacitor harvesting and the
intermittent-execution scheduler.

Units used throughout: power in microwatts (``*_uw``) or milliwatts
(``*_mw``), durations in seconds, energy in millijoules.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, InvalidInputError

RESULT_BITS = 12


@dataclass(frozen=True)
class DeviceProfile:
    """Constants describing the battery-free node.

    Power/time defaults are the measured values for the MSP430 prototype
    at 1.9 V. ``memory_limit_bytes``, ``vref``, ``dc_offset``,
    ``adc_gain`` and the capacitor fields are configuration defaults, not
    measurements.
    """

    adc_rate_hz: float = 330.0
    adc_bits: int = 12
    window_len: int = 512
    supply_v: float = 1.9
    p_sampling_uw: float = 932.0
    p_inference_uw: float = 1300.0
    p_backscatter_uw: float = 902.0
    t_sampling_s: float = 1.6
    t_inference_s: float = 3.0
    uplink_bps: float = 1000.0
    memory_limit_bytes: int = 8192
    vref: float = 1.9
    dc_offset: float = 0.95
    # volts per unit of normalized amplitude in front of the ADC
    adc_gain: float = 0.95
    harvest_efficiency: float = 1.0
    cap_capacitance_f: float = 0.01
    cap_rated_v: float = 5.5
    cap_v_min: float = 0.0
    reserve_fraction: float = 0.05

    def __post_init__(self):
        positive = ("adc_rate_hz", "supply_v", "p_sampling_uw", "p_inference_uw",
                    "p_backscatter_uw", "uplink_bps",
                    "vref", "adc_gain", "cap_capacitance_f", "cap_rated_v")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be positive and finite, got {value!r}")
        # zero-length stages are allowed so the limiting cases can be evaluated
        for name in ("t_sampling_s", "t_inference_s"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidInputError(f"{name} must be non-negative and finite, got {value!r}")
        if self.adc_bits < 1 or self.window_len < 1:
            raise InvalidInputError("adc_bits and window_len must be >= 1")
        if self.memory_limit_bytes < 0:
            raise InvalidInputError("memory_limit_bytes must be >= 0")
        if not 0.0 < self.harvest_efficiency <= 1.0:
            raise InvalidInputError("harvest_efficiency must lie in (0, 1]")
        if not 0.0 <= self.cap_v_min < self.cap_rated_v:
            raise InvalidInputError("cap_v_min must lie in [0, cap_rated_v)")
        if self.reserve_fraction < 0:
            raise InvalidInputError("reserve_fraction must be >= 0")

    @property
    def adc_full_scale(self) -> int:
        return (1 << self.adc_bits) - 1

    @property
    def raw_window_bits(self) -> int:
        return self.window_len * self.adc_bits

    def replace(self, **changes) -> "DeviceProfile":
        return dataclasses.replace(self, **changes)

    def empty_capacitor(self) -> "Capacitor":
        return Capacitor(self.cap_capacitance_f, 0.0, self.cap_v_min)


def dumps_profile(profile: DeviceProfile) -> str:
    """Render a profile as flat ``key = value`` text, one field per line."""
    lines = []
    for f in fields(profile):
        lines.append(f"{f.name} = {getattr(profile, f.name)!r}")
    return "\n".join(lines) + "\n"


def loads_profile(text: str) -> DeviceProfile:
    """Parse ``key = value`` text. Keys omitted fall back to defaults."""
    types = {f.name: f.type for f in fields(DeviceProfile)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise FormatError(f"line {lineno}: expected 'key = value'", field=key or None)
        if key not in types:
            raise FormatError(f"unknown profile key on line {lineno}", field=key)
        if key in values:
            raise FormatError(f"duplicate key on line {lineno}", field=key)
        try:
            values[key] = int(value) if types[key] == "int" else float(value)
        except ValueError:
            raise FormatError(f"cannot parse {value!r} on line {lineno}", field=key) from None
    return DeviceProfile(**values)


def load_profile(path: str | Path) -> DeviceProfile:
    return loads_profile(Path(path).read_text())


# -- energy ledger ---------------------------------------------------------

def stage_energy(power_uw: float, duration_s: float) -> float:
    """Energy in mJ of a stage drawing ``power_uw`` for ``duration_s``."""
    if power_uw < 0 or duration_s < 0:
        raise InvalidInputError("power and duration must be non-negative")
    return power_uw * duration_s * 1e-3


@dataclass(frozen=True)
class LedgerEntry:
    stage: str
    power_uw: float
    duration_s: float
    energy_mj: float

    @classmethod
    def of(cls, stage: str, power_uw: float, duration_s: float) -> "LedgerEntry":
        return cls(stage, power_uw, duration_s, stage_energy(power_uw, duration_s))


@dataclass(frozen=True)
class EnergyLedger:
    entries: tuple[LedgerEntry, ...]

    @property
    def total_mj(self) -> float:
        return math.fsum(e.energy_mj for e in self.entries)

    @property
    def total_s(self) -> float:
        return math.fsum(e.duration_s for e in self.entries)

    def __getitem__(self, stage: str) -> LedgerEntry:
        for entry in self.entries:
            if entry.stage == stage:
                return entry
        raise KeyError(stage)

    def to_records(self) -> dict:
        return {
            "entries": [dataclasses.asdict(e) for e in self.entries],
            "total_mj": self.total_mj,
            "total_s": self.total_s,
        }


def backscatter_duration(profile: DeviceProfile, bits: int) -> float:
    return bits / profile.uplink_bps


def inference_mission_energy(profile: DeviceProfile, result_bits: int = RESULT_BITS) -> EnergyLedger:
    """Sample a window, infer on board, backscatter only the result."""
    return EnergyLedger((
        LedgerEntry.of("sampling", profile.p_sampling_uw, profile.t_sampling_s),
        LedgerEntry.of("inference", profile.p_inference_uw, profile.t_inference_s),
        LedgerEntry.of("backscatter", profile.p_backscatter_uw,
                       backscatter_duration(profile, result_bits)),
    ))


def raw_transmission_energy(profile: DeviceProfile) -> EnergyLedger:
    """Sample a window and backscatter every raw ADC code."""
    return EnergyLedger((
        LedgerEntry.of("sampling", profile.p_sampling_uw, profile.t_sampling_s),
        LedgerEntry.of("backscatter", profile.p_backscatter_uw,
                       backscatter_duration(profile, profile.raw_window_bits)),
    ))


def inference_crossover_s(profile: DeviceProfile, result_bits: int = RESULT_BITS) -> float:
    """Inference time above which sending raw data becomes the cheaper option."""
    t_raw = backscatter_duration(profile, profile.raw_window_bits)
    t_result = backscatter_duration(profile, result_bits)
    return (t_raw * profile.p_backscatter_uw - t_result * profile.p_backscatter_uw) / profile.p_inference_uw


# -- storage ---------------------------------------------------------------

@dataclass(frozen=True)
class Capacitor:
    capacitance_f: float
    voltage_v: float
    v_min_operate: float = 0.0

    def __post_init__(self):
        if not self.capacitance_f > 0:
            raise InvalidInputError("capacitance must be positive")
        if self.voltage_v < 0 or self.v_min_operate < 0:
            raise InvalidInputError("voltages must be non-negative")

    @property
    def energy_mj(self) -> float:
        return 0.5 * self.capacitance_f * self.voltage_v ** 2 * 1e3

    @property
    def floor_mj(self) -> float:
        """Energy left behind once the voltage sags to ``v_min_operate``."""
        return 0.5 * self.capacitance_f * self.v_min_operate ** 2 * 1e3

    @property
    def usable_mj(self) -> float:
        return max(0.0, self.energy_mj - self.floor_mj)

    def with_energy(self, energy_mj: float) -> "Capacitor":
        return dataclasses.replace(
            self, voltage_v=math.sqrt(2.0 * max(energy_mj, 0.0) * 1e-3 / self.capacitance_f))

    @classmethod
    def charged(cls, capacitance_f: float, energy_mj: float, v_min_operate: float = 0.0) -> "Capacitor":
        return cls(capacitance_f, 0.0, v_min_operate).with_energy(energy_mj)


def rated_energy_mj(cap: Capacitor, profile: DeviceProfile) -> float:
    return 0.5 * cap.capacitance_f * profile.cap_rated_v ** 2 * 1e3


def harvest(cap: Capacitor, harvest_power_mw: float, dt_s: float, profile: DeviceProfile) -> Capacitor:
    """Charge ``cap`` at constant average power, saturating at the rated voltage."""
    if harvest_power_mw < 0 or dt_s < 0:
        raise InvalidInputError("harvest power and dt must be non-negative")
    if harvest_power_mw == 0 or dt_s == 0:
        return cap
    gained = harvest_power_mw * dt_s * profile.harvest_efficiency
    return cap.with_energy(min(cap.energy_mj + gained, rated_energy_mj(cap, profile)))


# -- intermittent scheduler -----------------------------------------------

@dataclass(frozen=True)
class MissionStage:
    name: str
    power_uw: float
    duration_s: float

    @property
    def energy_mj(self) -> float:
        return stage_energy(self.power_uw, self.duration_s)


def mission_stage(name: str, profile: DeviceProfile, result_bits: int = RESULT_BITS) -> MissionStage:
    if name == "sample":
        return MissionStage(name, profile.p_sampling_uw, profile.t_sampling_s)
    if name == "infer":
        return MissionStage(name, profile.p_inference_uw, profile.t_inference_s)
    if name == "backscatter":
        return MissionStage(name, profile.p_backscatter_uw, backscatter_duration(profile, result_bits))
    raise InvalidInputError(f"unknown mission stage {name!r}; expected sample, infer or backscatter")


DEFAULT_MISSION = ("sample", "infer", "backscatter")


class HarvestSchedule:
    """Piecewise-constant harvest power.

    ``segments`` is a sequence of ``(start_s, power_mw)`` with strictly
    increasing starts, the first at 0. The last power holds forever.
    """

    def __init__(self, segments: Sequence[tuple[float, float]]):
        segs = [(float(t), float(p)) for t, p in segments]
        if not segs or segs[0][0] != 0.0:
            raise InvalidInputError("harvest schedule must start at t = 0")
        for (t0, _), (t1, _) in zip(segs, segs[1:]):
            if not t1 > t0:
                raise InvalidInputError("harvest schedule start times must increase")
        if any(p < 0 or not math.isfinite(p) for _, p in segs):
            raise InvalidInputError("harvest power must be finite and non-negative")
        self.segments = segs

    @classmethod
    def constant(cls, power_mw: float) -> "HarvestSchedule":
        return cls([(0.0, power_mw)])

    def pieces(self, t: float) -> Iterable[tuple[float, float]]:
        """Yield ``(end_s, power_mw)`` for the pieces covering [t, inf)."""
        for i, (start, power) in enumerate(self.segments):
            end = self.segments[i + 1][0] if i + 1 < len(self.segments) else math.inf
            if end > t:
                yield end, power


@dataclass(frozen=True)
class ScheduleEvent:
    """One trace row; the energy amounts cover the interval since the previous row."""

    time_s: float
    event: str
    stage: str | None
    stored_mj: float
    harvested_mj: float = 0.0
    consumed_mj: float = 0.0
    spilled_mj: float = 0.0


@dataclass
class ScheduleTrace:
    events: list[ScheduleEvent] = field(default_factory=list)
    stages_run: list[str] = field(default_factory=list)
    active_time_s: float = 0.0
    starved: bool = False
    final: Capacitor | None = None

    @property
    def total_time_s(self) -> float:
        return self.events[-1].time_s if self.events else 0.0

    def to_records(self) -> dict:
        return {
            "events": [dataclasses.asdict(e) for e in self.events],
            "stages_run": list(self.stages_run),
            "active_time_s": self.active_time_s,
            "total_time_s": self.total_time_s,
            "starved": self.starved,
        }


def run_intermittent(
    cap: Capacitor,
    profile: DeviceProfile,
    mission: Sequence[str | MissionStage] = DEFAULT_MISSION,
    harvest_power_mw: float | HarvestSchedule = 0.0,
    *,
    reserve_fraction: float | None = None,
    start_time_s: float = 0.0,
) -> ScheduleTrace:
    """Run ``mission`` on harvested energy, charging between stages as needed.

    A stage starts only once the usable stored energy covers its cost plus
    the reserve margin. Harvesting continues while a stage runs. If the
    threshold can never be reached (no harvest, or a threshold above the
    capacitor's rated capacity) the trace ends with a ``starved`` event.
    """
    schedule = (harvest_power_mw if isinstance(harvest_power_mw, HarvestSchedule)
                else HarvestSchedule.constant(harvest_power_mw))
    reserve = profile.reserve_fraction if reserve_fraction is None else reserve_fraction
    if reserve < 0:
        raise InvalidInputError("reserve_fraction must be >= 0")
    stages = [s if isinstance(s, MissionStage) else mission_stage(s, profile) for s in mission]
    eff = profile.harvest_efficiency
    capacity = rated_energy_mj(cap, profile)
    floor = cap.floor_mj

    t = start_time_s
    stored = min(cap.energy_mj, capacity)
    trace = ScheduleTrace()
    trace.events.append(ScheduleEvent(t, "init", None, stored, spilled_mj=cap.energy_mj - stored))

    for stage in stages:
        cost = stage.energy_mj
        target = floor + cost * (1.0 + reserve)
        if stored < target:
            if target > capacity:
                trace.starved = True
                trace.events.append(ScheduleEvent(t, "starved", stage.name, stored))
                break
            t_begin, harvested = t, 0.0
            for end, power in schedule.pieces(t):
                rate = power * eff
                if rate > 0 and (end - t) * rate >= target - stored:
                    if not math.isfinite(t + (target - stored) / rate):
                        break  # rate too small to ever get there
                    t += (target - stored) / rate
                    harvested += target - stored
                    stored = target
                    break
                if math.isinf(end):
                    break
                harvested += rate * (end - t)
                stored += rate * (end - t)
                t = end
            if stored < target:
                trace.starved = True
                trace.events.append(ScheduleEvent(t_begin, "starved", stage.name, stored, harvested))
                break
            trace.events.append(ScheduleEvent(t, "charged", stage.name, stored, harvested))

        trace.events.append(ScheduleEvent(t, "start", stage.name, stored))
        t_end = t + stage.duration_s
        draw = cost / stage.duration_s if stage.duration_s > 0 else 0.0
        harvested = spilled = 0.0
        if stage.duration_s == 0:
            stored -= cost
        else:
            # step by time remaining so the full draw is billed even when t is huge
            remaining = stage.duration_s
            for end, power in schedule.pieces(t):
                dt = remaining if end - t >= remaining else end - t
                remaining -= dt
                gain = power * eff * dt
                harvested += gain
                stored += gain - draw * dt
                if stored > capacity:
                    spilled += stored - capacity
                    stored = capacity
                t = end
                if remaining <= 0:
                    break
        t = t_end
        trace.active_time_s += stage.duration_s
        trace.stages_run.append(stage.name)
        trace.events.append(ScheduleEvent(t, "end", stage.name, stored, harvested, cost, spilled))

    trace.final = cap.with_energy(stored)
    return trace
