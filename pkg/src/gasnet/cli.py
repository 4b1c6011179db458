"""Command-line front end: simulate, analyze, convergence.

Exit codes: 0 success, 2 input/parse error, 3 solver failure, 4 structure
check failure.  All outputs are UTF-8; CSV uses ',' separators and '.'
decimal points.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import dae as dae_mod
from .dae import Scenario, Signal, assemble_dae, discretize, inputs_at
from .fvm import DEFAULT_C, SingularStateError
from .graph import GraphError, prepare
from .io import (
    InputError,
    ensure_outdir,
    load_network,
    load_scenario,
    smoothed_to_dict,
    write_iterations_csv,
    write_json,
    write_pattern,
    write_timeseries_csv,
)
from .linalg import SingularBlockError
from .sim import (
    FROZEN,
    PER_NEWTON,
    PER_STEP,
    SolverConfig,
    SolverError,
    constant_state,
    implicit_euler_simulate,
    initial_state,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_STRUCTURE = 4

DEFAULT_MESH_H = 100.0


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("GASNET_THREADS", "4")))
    except ValueError:
        return 4


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gasnet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--network", required=True, help="network JSON file")
        p.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--mesh", type=float, default=None, help="target cell size (m)")
        p.add_argument("--tau", type=float, default=None, help="time step (s)")
        p.add_argument("--eps0", type=float, default=None, help="nonlinear stop tolerance")
        p.add_argument("--eps-tol", type=float, default=None, help="inner linear tolerance")
        p.add_argument("--precond", choices=(FROZEN, PER_STEP, PER_NEWTON), default=None)
        p.add_argument("--method", choices=("newton", "picard"), default=None)

    common(sub.add_parser("simulate", help="run a transient simulation"))
    common(sub.add_parser("analyze", help="report structure of the assembled system"),
           scenario_required=False)
    common(sub.add_parser("convergence", help="compare solver settings step by step"))
    return ap


def _load(args):
    """Parse inputs, build the assembled system, return run ingredients."""
    net = load_network(args.network)
    sg = prepare(net)
    if args.scenario is not None:
        scenario, extras = load_scenario(args.scenario)
    else:
        # structural analysis without a scenario: constant nominal inputs
        supplies = {n.id: Signal.constant(30e5) for n in sg.nodes if n.kind == "supply"}
        demands = {n.id: Signal.constant(10.0) for n in sg.nodes if n.kind == "demand"}
        scenario, extras = Scenario(supplies, demands, horizon=10.0, tau=1.0), {}
    mesh = args.mesh if args.mesh is not None else float(extras.get("mesh_h", DEFAULT_MESH_H))
    c = float(extras.get("c", DEFAULT_C))
    grids, ops = discretize(sg, mesh, c)
    sys_ = assemble_dae(sg, grids, ops)

    kwargs = {}
    for key in ("eps0", "eps_tol", "n_max", "krylov", "krylov_maxit", "restart",
                "idr_shadow", "precond", "method"):
        if key in extras:
            kwargs[key] = extras[key]
    kwargs["tau"] = args.tau if args.tau is not None else scenario.tau
    for flag in ("eps0", "eps_tol", "precond", "method"):
        v = getattr(args, flag)
        if v is not None:
            kwargs[flag] = v
    cfg = SolverConfig(**kwargs)
    scenario.tau = cfg.tau
    return sys_, scenario, cfg, extras


def _x0(sys_, scenario, extras):
    mode = str(extras.get("initial", "steady"))
    return initial_state(sys_, scenario, mode=mode)


def _summary(sys_, ts, scenario) -> dict:
    t_end = float(ts.times[-1])
    u_end = inputs_at(sys_, scenario, t_end)
    supply_flow = {}
    for b in sys_.blocks:
        if b.supply_node is not None:
            supply_flow[b.supply_node] = supply_flow.get(b.supply_node, 0.0) + float(
                ts.columns[f"q_in[{b.pipe.id}]"][-1]
            )
    demand_total = float(np.sum(u_end[1]))
    supply_total = float(sum(supply_flow.values()))
    denom = max(abs(demand_total), 1e-30)
    pressures = {
        name[2:-1]: float(ts.columns[name][-1])
        for name in ts.columns
        if name.startswith("p[")
    }
    return {
        "t_end_s": t_end,
        "supply_flows_kg_s": supply_flow,
        "demand_total_kg_s": demand_total,
        "supply_total_kg_s": supply_total,
        "conservation_rel_error": abs(supply_total - demand_total) / denom,
        "pressures_pa": pressures,
        "total_newton_iterations": int(ts.newton_iters.sum()),
        "total_krylov_iterations": int(ts.krylov_iters.sum()),
    }


def cmd_simulate(args) -> int:
    sys_, scenario, cfg, extras = _load(args)
    out = ensure_outdir(args.out)
    x0 = _x0(sys_, scenario, extras)
    ts = implicit_euler_simulate(sys_, scenario, cfg, x0=x0)
    write_timeseries_csv(out / "timeseries.csv", ts.times, ts.columns)
    write_iterations_csv(out / "iterations.csv", ts)
    write_json(out / "summary.json", _summary(sys_, ts, scenario))
    return EXIT_OK


def cmd_analyze(args) -> int:
    sys_, scenario, cfg, extras = _load(args)
    out = ensure_outdir(args.out)
    sg = sys_.graph
    write_json(
        out / "pipes.json",
        {
            **smoothed_to_dict(sg),
            "n_extra": sys_.n_alg,
            "n_algebraic": sys_.n_alg,
            "n_state": sys_.n,
        },
    )
    # Jacobian at the first Newton iterate of the first step
    u1 = inputs_at(sys_, scenario, cfg.tau)
    x0 = constant_state(sys_, float(np.mean(u1[0])))
    J = dae_mod.eval_jacobian(sys_, x0, u1, cfg.tau)
    write_pattern(out / "jacobian_pattern.txt", J)

    nd = sys_.n_diff
    coo = J.tocoo()
    starts = np.asarray(sys_.block_boundaries)
    violations = 0
    for r, ccol in zip(coo.row, coo.col):
        if r < nd and ccol < nd:
            br = int(np.searchsorted(starts, r, side="right")) - 1
            bc = int(np.searchsorted(starts, ccol, side="right")) - 1
            if bc > br:
                violations += 1
    dfdx = dae_mod.df_dx(sys_, x0, u1[0]).tocoo()
    f_outside = int(np.sum((dfdx.row >= nd) | (dfdx.col >= nd)))
    report = {
        "n_state": sys_.n,
        "n_differential": nd,
        "n_algebraic": sys_.n_alg,
        "block_boundaries": sys_.block_boundaries,
        "upper_block_entries": violations,
        "friction_entries_outside_11_block": f_outside,
        "block_lower_triangular": violations == 0 and f_outside == 0,
    }
    write_json(out / "structure.json", report)
    return EXIT_OK if report["block_lower_triangular"] else EXIT_STRUCTURE


def _convergence_run(sys_, scenario, cfg, x0):
    ts = implicit_euler_simulate(sys_, scenario, cfg, x0=x0.copy())
    return ts.newton_iters, ts.krylov_iters, ts.final_residuals


def cmd_convergence(args) -> int:
    sys_, scenario, cfg, extras = _load(args)
    out = ensure_outdir(args.out)
    x0 = _x0(sys_, scenario, extras)

    variants: list[tuple[str, SolverConfig]] = [("picard", SolverConfig(
        tau=cfg.tau, eps0=cfg.eps0, n_max=cfg.n_max, method="picard"))]
    for strategy in (FROZEN, PER_STEP, PER_NEWTON):
        for eps_tol in (1e-3, 1e-6):
            label = f"newton/{strategy}/eps_tol={eps_tol:g}"
            variants.append((label, SolverConfig(
                tau=cfg.tau, eps0=cfg.eps0, n_max=cfg.n_max, eps_tol=eps_tol,
                precond=strategy, krylov=cfg.krylov,
            )))

    with ThreadPoolExecutor(max_workers=min(_thread_cap(), len(variants))) as pool:
        futures = [(label, pool.submit(_convergence_run, sys_, scenario, v, x0))
                   for label, v in variants]
        results = [(label, fut.result()) for label, fut in futures]

    with open(out / "convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("method,step,newton_iters,krylov_iters_total,final_residual\n")
        for label, (newton, krylov, res) in results:
            for k in range(len(newton)):
                fh.write(f"{label},{k + 1},{newton[k]},{krylov[k]},{res[k]!r}\n")
    table = {
        label: {
            "first_step_newton": int(newton[0]) if len(newton) else 0,
            "total_newton": int(newton.sum()),
            "total_krylov": int(krylov.sum()),
        }
        for label, (newton, krylov, res) in results
    }
    write_json(out / "convergence_summary.json", table)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "simulate": cmd_simulate,
        "analyze": cmd_analyze,
        "convergence": cmd_convergence,
    }[args.command]
    try:
        return handler(args)
    except (InputError, GraphError, OSError) as exc:
        print(f"gasnet: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, SingularBlockError, SingularStateError) as exc:
        print(f"gasnet: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
