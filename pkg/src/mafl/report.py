"""Report schema and file emission."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import jsonschema

_NUM = {"type": ["number", "null"]}

_RECORD = {
    "type": "object",
    "additionalProperties": False,
    "required": ["check", "scenario", "params", "lhs", "rhs", "margin", "pass", "tolerance"],
    "properties": {
        "check": {"type": "string"},
        "scenario": {"type": "string"},
        "params": {"type": "object"},
        "lhs": _NUM,
        "rhs": _NUM,
        "margin": _NUM,
        "pass": {"type": "boolean"},
        "tolerance": _NUM,
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["report_version", "scenario", "scenario_hash", "constants", "series", "records", "extras", "complete", "error", "pass"],
    "properties": {
        "report_version": {"const": 1},
        "scenario": {"type": "object"},
        "scenario_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "constants": {"type": "object"},
        "series": {"type": "array", "items": {"type": "object", "required": ["time"]}},
        "records": {"type": "array", "items": _RECORD},
        "extras": {"type": "object"},
        "complete": {"type": "boolean"},
        "error": {"type": ["string", "null"]},
        "pass": {"type": "boolean"},
    },
}

SERIES_COLUMNS = ("time", "sup_phi_tilde", "inf_phi_tilde", "mean_phidot", "ent_p", "I", "exp_int", "E_window")


class ReportIOError(OSError):
    pass


def validate_report(doc: dict):
    jsonschema.validate(doc, REPORT_SCHEMA)


def report_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def series_csv(doc: dict) -> str:
    return _csv(SERIES_COLUMNS, ([r.get(c) for c in SERIES_COLUMNS] for r in doc["series"]))


def level_mass_csv(doc: dict) -> str:
    rows = []
    for t0, d in sorted(doc["extras"].get("level_mass", {}).items(), key=lambda kv: float(kv[0])):
        rows.extend((float(t0), s, m) for s, m in zip(d["s"], d["phi"]))
    return _csv(("t0", "s", "phi"), rows)


def sup_phi_csv(doc: dict) -> str:
    rows = [(r["time"], max(abs(r["sup_phi_tilde"]), abs(r["inf_phi_tilde"]))) for r in doc["series"]]
    return _csv(("time", "sup_abs_phi_tilde"), rows)


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror}") from exc


def emit_report(report, out_dir, formats=("json", "csv")) -> list:
    """Write report.json, series.csv, level_mass.csv, sup_phi.csv and timings.json.

    Everything except timings.json is a function of the scenario alone.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {out}: {exc.strerror}") from exc
    doc = report.as_dict()
    validate_report(doc)
    written = []
    if "json" in formats:
        _write(out / "report.json", report_json(doc))
        written.append(out / "report.json")
    if "csv" in formats:
        for name, text in (("series.csv", series_csv(doc)), ("level_mass.csv", level_mass_csv(doc)), ("sup_phi.csv", sup_phi_csv(doc))):
            _write(out / name, text)
            written.append(out / name)
    _write(out / "timings.json", json.dumps(report.timings, sort_keys=True, indent=1) + "\n")
    written.append(out / "timings.json")
    return written


def load_report(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    doc = json.loads(p.read_text())
    validate_report(doc)
    return doc


def summarize(doc: dict) -> list:
    """One line per record: PASS/FAIL, check name, margin."""
    lines = []
    for r in doc["records"]:
        tag = "PASS" if r["pass"] else "FAIL"
        margin = r["margin"]
        lines.append(f"{tag} {doc['scenario']['name']}:{r['check']} margin={margin if margin is None else f'{margin:.4g}'}")
    if not doc["complete"]:
        lines.append(f"FAIL {doc['scenario']['name']}: incomplete ({doc['error']})")
    return lines
