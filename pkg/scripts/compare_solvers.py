#!/usr/bin/env python3
"""Compare nonlinear/linear solver settings on the asymmetric fork case.

Runs Newton under all preconditioner refresh strategies and both inner
tolerances, plus the Picard variant, and prints the per-variant iteration
totals.  Equivalent to `gasnet convergence` but with a formatted table.

Usage: python scripts/compare_solvers.py [outdir]
"""

import json
import sys
from pathlib import Path

from gasnet.cli import main as cli_main

REPO = Path(__file__).resolve().parents[1]


def main(outdir: Path) -> None:
    out = outdir / "convergence"
    code = cli_main([
        "convergence",
        "--network", str(REPO / "networks" / "fork.json"),
        "--scenario", str(REPO / "networks" / "fork_case2.json"),
        "--out", str(out),
    ])
    if code != 0:
        raise SystemExit(code)
    table = json.loads((out / "convergence_summary.json").read_text())
    width = max(len(k) for k in table)
    print(f"{'variant':<{width}}  first-step  total-newton  total-krylov")
    for name, row in sorted(table.items()):
        print(f"{name:<{width}}  {row['first_step_newton']:>10}  "
              f"{row['total_newton']:>12}  {row['total_krylov']:>12}")
    print(f"\nfull per-step table: {out}/convergence.csv")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results"))
