"""Run every scenario in scenarios/ and print one line per check."""

import argparse
import sys
import time
from pathlib import Path

from mafl.pipeline import run_scenario
from mafl.report import emit_report, summarize
from mafl.scenario import Scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="scenario names (default: all)")
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--fresh", action="store_true")
    args = ap.parse_args()

    paths = [ROOT / "scenarios" / f"{n}.json" for n in args.names] or sorted((ROOT / "scenarios").glob("*.json"))
    ok = True
    total = time.perf_counter()
    for path in paths:
        sc = Scenario.load(path)
        t = time.perf_counter()
        rep = run_scenario(sc, args.out / sc.name, resume=not args.fresh)
        emit_report(rep, args.out / sc.name)
        for line in summarize(rep.as_dict()):
            if line.startswith("FAIL"):
                print(line)
        print(f"{'PASS' if rep.passed else 'FAIL'} {sc.name:<20s} {len(rep.records):3d} records {time.perf_counter() - t:7.1f}s")
        ok &= rep.passed
    print(f"total {time.perf_counter() - total:.0f}s")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
