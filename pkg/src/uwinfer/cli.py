"""Command-line entry point: ``uwinfer {synth,train,convert,mission,tradeoff,report}``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

from . import link, nn, pipeline, quant, report
from .device import DeviceProfile, load_profile
from .errors import FootprintError, UwInferError
from .synth import SyntheticDatasetSpec, default_families, load_dataset, synth_dataset, write_dataset

EXIT_ERROR = 2
EXIT_FOOTPRINT = 3


def _profile(args) -> DeviceProfile:
    return load_profile(args.profile) if args.profile else DeviceProfile()


def _write(path: str, data: bytes | str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        target.write_text(data)
    else:
        target.write_bytes(data)


def _emit(args, command: str, body: dict) -> None:
    text = report.dumps(report.make_report(command, body))
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)


def cmd_synth(args) -> None:
    spec = SyntheticDatasetSpec(default_families(args.classes), args.clips_per_class,
                                args.seconds, _profile(args).adc_rate_hz, args.seed)
    clips = synth_dataset(spec)
    paths = write_dataset(args.out, clips)
    _emit(args, "synth", {"spec": spec.to_records(), "clips": len(clips),
                          "files": [str(Path(p).relative_to(args.out)) for p in paths]})


def cmd_train(args) -> None:
    clips, names = load_dataset(args.data)
    params = pipeline.TrainingParams(args.n, args.epochs, args.lr, args.batch_size, args.seed,
                                     args.split_seed)
    result = pipeline.run_training(clips, params, _profile(args))
    _write(args.model_out, nn.save_model(result.model))
    _emit(args, "train", {
        "params": asdict(params),
        "classes": names,
        "split_sizes": dict(zip(("train", "val", "test"), result.split_sizes)),
        "accuracy": result.accuracy,
        "model": {"path": str(args.model_out), "num_params": result.model.config.num_params,
                  "sha256": pipeline.model_digest(result.model)},
    })


def cmd_convert(args) -> None:
    model = quant.load_any(Path(args.model).read_bytes())
    qmodel = quant.quantize(model)
    _write(args.out, quant.save_quantized(qmodel))
    fp = quant.footprint(qmodel, _profile(args))
    _emit(args, "convert", {
        "source": str(args.model), "output": str(args.out),
        "scales": qmodel.scales, "footprint": asdict(fp),
        "sha256": pipeline.model_digest(qmodel),
    })
    if args.require_fit and not fp.fits:
        raise FootprintError(fp)


def cmd_mission(args) -> None:
    model = quant.load_any(Path(args.model).read_bytes())
    clips, _ = load_dataset(args.data)
    scenario = pipeline.Scenario(
        model, clips, _profile(args),
        link.ChannelModel(args.attenuation, args.noise, args.channel_seed),
        args.trials, args.seed, online=not args.offline, harvest_power_mw=args.harvest_mw)
    _emit(args, "mission", pipeline.run_mission(scenario))


def cmd_tradeoff(args) -> None:
    _emit(args, "tradeoff", pipeline.run_tradeoff(_profile(args)))


def cmd_report(args) -> None:
    doc = report.load(args.input)
    text = report.dumps(doc) if args.format == "json" else report.render_text(doc)
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwinfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, profile=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        if profile:
            p.add_argument("--profile", help="device profile file (key = value lines)")
        p.add_argument("--report", help="write the report here instead of stdout")
        return p

    p = command("synth", cmd_synth, "generate a synthetic labeled dataset of WAV files")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--clips-per-class", type=int, default=50)
    p.add_argument("--seconds", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)

    p = command("train", cmd_train, "train a float model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)

    p = command("convert", cmd_convert, "quantize a model to int16 and check its footprint")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--require-fit", action="store_true", help="fail if the model does not fit")

    p = command("mission", cmd_mission, "run the sample/infer/backscatter mission")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attenuation", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--channel-seed", type=int, default=0)
    p.add_argument("--harvest-mw", type=float, default=None)
    p.add_argument("--offline", action="store_true", help="bypass the ADC model")

    command("tradeoff", cmd_tradeoff, "compare inference against raw transmission energy")

    p = command("report", cmd_report, "re-render a saved report", profile=False)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except FootprintError as exc:
        print(f"error[footprint]: {exc}", file=sys.stderr)
        return EXIT_FOOTPRINT
    except UwInferError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
