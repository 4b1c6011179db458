#!/usr/bin/env python3
"""Run the two reference fork-network cases and print a short report.

Case 1: equal 30-bar supplies, 30 kg/s demand — the supply flows split and
their sum matches the demand.  Case 2: one supply drops to 20 bar — the flow
at the weak supply reverses sign on the way to steady state.

Usage: python scripts/run_fork_cases.py [outdir]
"""

import sys
from pathlib import Path

from gasnet.cli import main as cli_main

REPO = Path(__file__).resolve().parents[1]


def run(case: str, outdir: Path) -> None:
    out = outdir / case
    code = cli_main([
        "simulate",
        "--network", str(REPO / "networks" / "fork.json"),
        "--scenario", str(REPO / "networks" / f"{case}.json"),
        "--out", str(out),
    ])
    if code != 0:
        raise SystemExit(code)
    print(f"{case}: wrote {out}/timeseries.csv, iterations.csv, summary.json")
    print((out / "summary.json").read_text())


if __name__ == "__main__":
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results")
    for case in ("fork_case1", "fork_case2"):
        run(case, outdir)
