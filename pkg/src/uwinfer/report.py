"""Run reports: one JSON document per command.

Schema (keys in this order)::

    {
      "header": {"tool": "uwinfer", "version": str, "command": str,
                 "generated_at": ISO-8601 UTC timestamp},
      "body": {...command specific...}
    }

``header.generated_at`` is the only field that varies between identical
runs; ``strip_timestamp`` removes it for comparisons.
"""
from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import FormatError


def make_report(command: str, body: dict, timestamp: str | None = None) -> dict:
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    return {
        "header": {"tool": "uwinfer", "version": __version__, "command": command,
                   "generated_at": timestamp},
        "body": body,
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def strip_timestamp(text: str) -> dict:
    doc = json.loads(text)
    doc["header"].pop("generated_at", None)
    return doc


def load(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON report ({exc.msg})", field="report") from None
    if not isinstance(doc, dict) or not {"header", "body"} <= doc.keys():
        raise FormatError(f"{path}: missing header/body", field="report")
    return doc


def _ledger_lines(title: str, ledger: dict) -> list[str]:
    lines = [f"{title}:"]
    for e in ledger["entries"]:
        lines.append(f"  {e['stage']:<12} {e['power_uw']:>8.1f} uW  {e['duration_s']:>8.4f} s"
                     f"  {e['energy_mj']:>9.4f} mJ")
    lines.append(f"  {'total':<12} {'':>11}  {ledger['total_s']:>8.4f} s  {ledger['total_mj']:>9.4f} mJ")
    return lines


def _flatten(prefix: str, value, out: list[str]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, list) and value and isinstance(value[0], dict):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append(f"{prefix} = {value}")


def render_text(report: dict) -> str:
    head, body = report["header"], report["body"]
    lines = [f"uwinfer {head.get('version', '?')} / {head['command']} ({head.get('generated_at', '-')})", ""]
    command = head["command"]
    if command == "tradeoff":
        lines += _ledger_lines("on-board inference", body["inference"])
        lines += _ledger_lines("raw transmission", body["raw"])
        lines.append(f"raw data costs {body['raw_excess_percent']:.2f}% more than inference")
        lines.append(f"crossover inference time: {body['crossover_t_inference_s']:.3f} s")
    elif command == "mission":
        s = body["summary"]
        lines.append(f"accuracy {s['accuracy']:.3f} ({s['correct']}/{s['total']}, chance {s['chance']:.3f})")
        lines.append(f"delivered {s['delivered']}/{s['total']}, decode errors {s['decode_errors']}")
        lines.append(f"mean energy per trial {s['mean_energy_mj']:.4f} mJ")
        lines += _ledger_lines("per-trial ledger", s["ledger"])
        for t in body["trials"]:
            lines.append(f"  trial {t['trial']:>3}: label {t['label']} predicted {t['predicted']}"
                         f" received {t['received']}"
                         + (f" [{t['decode_error']}]" if t["decode_error"] else ""))
    else:
        flat: list[str] = []
        _flatten("", body, flat)
        lines += flat
    return "\n".join(lines) + "\n"
