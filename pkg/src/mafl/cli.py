"""Command line entry point: ``mafl run|check|degiorgi|abp|report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from mafl import estimates as est
from mafl.pipeline import run_scenario
from mafl.report import emit_report, load_report, summarize
from mafl.scenario import Scenario, ScenarioError

LEMMA_CHECKS = {
    "23": ("lemma23",),
    "31": ("aux", "lemma31"),
    "41": ("lemma41", "cutoff"),
    "degiorgi": ("degiorgi",),
    "iteration": ("iteration",),
    "young": ("aux", "young"),
}


def _run_one(path: str, out_root: str, resume: bool) -> tuple[str, bool, list]:
    sc = Scenario.load(path)
    out = Path(out_root) / sc.name
    rep = run_scenario(sc, out, resume=resume)
    emit_report(rep, out)
    return sc.name, rep.passed, summarize(rep.as_dict())


def cmd_run(args) -> int:
    threads = max(1, int(os.environ.get("MAFL_THREADS", "1")))
    jobs = [(str(p), args.out, not args.fresh) for p in args.scenarios]
    if threads == 1 or len(jobs) == 1:
        results = [_run_one(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    ok = True
    for name, passed, lines in results:
        for line in lines:
            print(line)
        print(f"{'PASS' if passed else 'FAIL'} {name}")
        ok &= passed
    return 0 if ok else 1


def _print_records(records) -> bool:
    ok = True
    for r in records:
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['check']} lhs={r['lhs']} rhs={r['rhs']} margin={r['margin']}")
        ok &= r["pass"]
    return ok


def cmd_check(args) -> int:
    d = Path(args.dir)
    if args.lemma == "abp":
        patches = sorted(d.glob("*.npz"))
        if not patches:
            print(f"no patch files in {d}", file=sys.stderr)
            return 2
        ok = True
        for p in patches:
            ok &= _print_records([est.abp_check(est.Patch.load(p)).record(p.stem).as_dict()])
        return 0 if ok else 1
    doc = load_report(d)
    sc = Scenario.from_dict(doc["scenario"])
    sc = replace(sc, checks=LEMMA_CHECKS[args.lemma], allow_refine=False)
    rep = run_scenario(sc, d, resume=True)
    ok = _print_records(rep.as_dict()["records"])
    return 0 if ok and rep.complete else 1


def _read_samples(path):
    """Two-column CSV of ``s, Phi``; a header row is skipped."""
    s, phi = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            try:
                a, b = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                continue
            s.append(a)
            phi.append(b)
    return np.array(s), np.array(phi)


def cmd_degiorgi(args) -> int:
    s, phi = _read_samples(args.csv)
    try:
        inp = est.DeGiorgiInput(s, phi, args.b0, args.delta0)
    except ValueError as exc:
        print(f"invalid samples: {exc}", file=sys.stderr)
        return 2
    res = est.degiorgi_s_infinity(inp)
    print(json.dumps(res.as_dict(), sort_keys=True))
    ok = res.ok and res.Phi_at_S_inf == 0 and res.S_inf <= res.bound
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_abp(args) -> int:
    res = est.abp_check(est.Patch.load(args.patch))
    rec = res.record(Path(args.patch).stem).as_dict()
    print(json.dumps(rec, sort_keys=True))
    return 0 if rec["pass"] else 1


def cmd_report(args) -> int:
    root = Path(args.dir)
    paths = [root / "report.json"] if (root / "report.json").exists() else sorted(root.glob("*/report.json"))
    if not paths:
        print(f"no report.json under {root}", file=sys.stderr)
        return 2
    ok = True
    for p in paths:
        doc = load_report(p)
        for line in summarize(doc):
            print(line)
        ok &= doc["pass"]
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mafl", description="Numerical checks of a priori estimates for Monge-Ampere type flows on flat tori.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run scenario files and write reports")
    p.add_argument("scenarios", nargs="+", type=Path)
    p.add_argument("--out", default="runs")
    p.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="re-run one check family on a finished run directory")
    p.add_argument("dir")
    p.add_argument("--lemma", required=True, choices=[*LEMMA_CHECKS, "abp"])
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("degiorgi", help="De Giorgi level iteration on sampled (s, Phi) pairs")
    p.add_argument("csv")
    p.add_argument("--b0", type=float, required=True)
    p.add_argument("--delta0", type=float, required=True)
    p.set_defaults(func=cmd_degiorgi)

    p = sub.add_parser("abp", help="parabolic ABP check on a patch file (.npz)")
    p.add_argument("patch")
    p.set_defaults(func=cmd_abp)

    p = sub.add_parser("report", help="summarize report.json files")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
