"""End-to-end scenarios: training, the on-device mission and the energy tradeoff."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from . import device, link, nn, quant
from .device import DeviceProfile
from .dsp import preprocess
from .errors import FootprintError, InvalidInputError, LinkError
from .synth import LabeledClip

MIN_PER_CLASS = 10
SPLIT = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class TrainingParams:
    n: int = 16
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 1
    seed: int = 0
    split_seed: int = 0


@dataclass
class TrainingResult:
    model: nn.Model
    split_sizes: tuple[int, int, int]
    accuracy: dict[str, float]
    split_indices: dict[str, list[int]]


def split_indices(count: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle cut 80/10/10; the test slice takes the rounding remainder."""
    order = np.random.default_rng(seed).permutation(count)
    n_train = int(count * SPLIT[0])
    n_val = int(count * SPLIT[1])
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def check_class_counts(clips: list[LabeledClip], minimum: int = MIN_PER_CLASS) -> int:
    counts = Counter(c.label for c in clips)
    names = {c.label: c.class_name for c in clips}
    for label in range(max(counts) + 1 if counts else 0):
        if counts.get(label, 0) < minimum:
            raise InvalidInputError(
                f"class {names.get(label, label)!r} has {counts.get(label, 0)} samples, "
                f"need at least {minimum}")
    if len(counts) < 2:
        raise InvalidInputError("need at least two classes")
    return len(counts)


def planes_for(clips: list[LabeledClip], profile: DeviceProfile, n: int, online: bool = False):
    return [(preprocess(c.clip, profile, n, online=online), c.label) for c in clips]


def run_training(clips: list[LabeledClip], params: TrainingParams,
                 profile: DeviceProfile | None = None) -> TrainingResult:
    profile = profile or DeviceProfile()
    num_classes = check_class_counts(clips)
    data = planes_for(clips, profile, params.n)
    train_idx, val_idx, test_idx = split_indices(len(data), params.split_seed)
    config = nn.ModelConfig(n=params.n, num_classes=num_classes)
    model = nn.init_model(config, params.seed)
    subsets = {name: [data[i] for i in idx]
               for name, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx))}
    model = nn.train(model, subsets["train"], params.epochs, params.learning_rate, params.seed,
                     params.batch_size)
    acc = {name: nn.accuracy(model, subset) for name, subset in subsets.items()}
    return TrainingResult(
        model, (len(train_idx), len(val_idx), len(test_idx)), acc,
        {"train": train_idx.tolist(), "val": val_idx.tolist(), "test": test_idx.tolist()})


def model_digest(model: nn.Model | quant.QuantizedModel) -> str:
    return hashlib.sha256(quant.save_any(model)).hexdigest()


# -- mission ---------------------------------------------------------------

@dataclass
class Scenario:
    model: nn.Model | quant.QuantizedModel
    clips: list[LabeledClip]
    profile: DeviceProfile = field(default_factory=DeviceProfile)
    channel: link.ChannelModel = field(default_factory=link.ChannelModel)
    trials: int = 16
    seed: int = 0
    online: bool = True
    harvest_power_mw: float | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if not self.clips:
            raise InvalidInputError("scenario has no clips")


def select_trials(clips: list[LabeledClip], trials: int, seed: int) -> list[int]:
    """Balanced draw: trial ``t`` takes a clip of class ``t mod C``, without
    replacement inside a class until it is exhausted."""
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, c in enumerate(clips):
        by_class.setdefault(c.label, []).append(i)
    labels = sorted(by_class)
    pools = {lab: list(rng.permutation(by_class[lab])) for lab in labels}
    picks = []
    for t in range(trials):
        lab = labels[t % len(labels)]
        if not pools[lab]:
            pools[lab] = list(rng.permutation(by_class[lab]))
        picks.append(int(pools[lab].pop(0)))
    return picks


def _predict(model, plane) -> nn.InferenceResult:
    if isinstance(model, quant.QuantizedModel):
        return quant.forward_quantized(model, plane)
    return nn.forward(model, plane)


def run_mission(scenario: Scenario) -> dict:
    """Push selected clips through sample -> infer -> backscatter -> receive.

    Refuses to run a model that fails the footprint check. Decode errors
    are recorded per trial.
    """
    profile, model = scenario.profile, scenario.model
    fp = quant.footprint(model, profile)
    if not fp.fits:
        raise FootprintError(fp)
    dequantized = model.dequantize() if isinstance(model, quant.QuantizedModel) else model
    if dequantized.config.num_classes >= 1 << device.RESULT_BITS:
        raise InvalidInputError("class index does not fit the 12-bit result field")

    cap = profile.empty_capacitor()
    clock = 0.0
    records, ledgers = [], []
    for trial, idx in enumerate(select_trials(scenario.clips, scenario.trials, scenario.seed)):
        item = scenario.clips[idx]
        plane = preprocess(item.clip, profile, dequantized.config.n, online=scenario.online)
        result = nn.forward(dequantized, plane)
        payload = link.int_to_bits(result.predicted_class, device.RESULT_BITS)
        packet = link.frame(payload)
        channel = link.ChannelModel(scenario.channel.attenuation, scenario.channel.noise_sigma,
                                    scenario.channel.seed + trial)
        samples, link_report = link.transmit(packet, channel, profile)
        try:
            received = int(link.bits_to_int(link.receive(samples, channel, device.RESULT_BITS)))
            decode_error = None
        except LinkError as exc:
            received, decode_error = None, exc.kind
        ledger = device.EnergyLedger((
            device.LedgerEntry.of("sampling", profile.p_sampling_uw, profile.t_sampling_s),
            device.LedgerEntry.of("inference", profile.p_inference_uw, profile.t_inference_s),
            device.LedgerEntry.of("backscatter", profile.p_backscatter_uw, link_report.duration_s),
        ))
        ledgers.append(ledger)
        record = {
            "trial": trial,
            "clip_index": idx,
            "label": item.label,
            "class_name": item.class_name,
            "predicted": result.predicted_class,
            "probabilities": [float(p) for p in result.probabilities],
            "received": received,
            "decode_error": decode_error,
            "link": link_report.to_records(),
            "energy_mj": ledger.total_mj,
        }
        if scenario.harvest_power_mw is not None:
            stages = [device.mission_stage("sample", profile), device.mission_stage("infer", profile),
                      device.MissionStage("backscatter", profile.p_backscatter_uw, link_report.duration_s)]
            sched = device.run_intermittent(cap, profile, stages, scenario.harvest_power_mw,
                                            start_time_s=clock)
            cap, clock = sched.final, sched.total_time_s
            record["schedule"] = {"end_time_s": clock, "starved": sched.starved,
                                  "stages_run": sched.stages_run}
        records.append(record)

    correct = sum(r["predicted"] == r["label"] for r in records)
    decode_failures = Counter(r["decode_error"] for r in records if r["decode_error"])
    delivered = sum(r["received"] == r["predicted"] for r in records)
    return {
        "config": {
            "profile": asdict(profile),
            "channel": asdict(scenario.channel),
            "trials": scenario.trials,
            "seed": scenario.seed,
            "online": scenario.online,
            "harvest_power_mw": scenario.harvest_power_mw,
            "model": {"n": dequantized.config.n, "num_classes": dequantized.config.num_classes,
                      "quantized": isinstance(model, quant.QuantizedModel),
                      "sha256": model_digest(model)},
        },
        "footprint": asdict(fp),
        "trials": records,
        "summary": {
            "correct": correct,
            "total": len(records),
            "accuracy": correct / len(records),
            "chance": 1.0 / dequantized.config.num_classes,
            "delivered": delivered,
            "decode_errors": dict(sorted(decode_failures.items())),
            "mean_energy_mj": float(np.mean([l.total_mj for l in ledgers])),
            "ledger": ledgers[0].to_records(),
        },
    }


def run_tradeoff(profile: DeviceProfile) -> dict:
    """Compare on-board inference against shipping the raw window."""
    inference = device.inference_mission_energy(profile)
    raw = device.raw_transmission_energy(profile)
    return {
        "profile": asdict(profile),
        "inference": inference.to_records(),
        "raw": raw.to_records(),
        "inference_mj": inference.total_mj,
        "raw_mj": raw.total_mj,
        "raw_excess_percent": (raw.total_mj / inference.total_mj - 1.0) * 100.0,
        "crossover_t_inference_s": device.inference_crossover_s(profile),
    }
