"""File formats: network / scenario JSON, CSV time series, sparsity patterns.

Pressures may be declared in bar in scenario files (1 bar = 1e5 Pa); all
in-memory values are SI (Pa, kg/s, m, s).  CSV files use ',' separators and
'.' decimal points, and floats are written with repr precision so outputs
are deterministic and round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dae import Scenario, Signal
from .graph import NetworkGraph, Node, Pipe, SmoothedGraph

BAR = 1.0e5


class InputError(ValueError):
    """A network or scenario file failed to parse."""


def network_from_dict(d: dict) -> NetworkGraph:
    try:
        nodes = tuple(Node(str(n["id"]), str(n["kind"]).lower()) for n in d["nodes"])
        pipes = tuple(
            Pipe(
                id=str(p["id"]),
                from_node=str(p["from"]),
                to_node=str(p["to"]),
                length=float(p["length_m"]),
                diameter=float(p["diameter_m"]),
                friction=float(p["lambda"]),
                directed=bool(p.get("directed", False)),
            )
            for p in d["pipes"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad network file: {exc!r}") from None
    return NetworkGraph(nodes=nodes, pipes=pipes)


def load_network(path) -> NetworkGraph:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}")
    return network_from_dict(d)


def smoothed_to_dict(sg: SmoothedGraph) -> dict:
    return {
        "nodes": [{"id": n.id, "kind": n.kind} for n in sg.nodes],
        "long_pipes": [
            {
                "id": p.id,
                "from": p.from_node,
                "to": p.to_node,
                "kind": p.kind,
                "order": p.order,
                "segments": [
                    {"length_m": s.length, "diameter_m": s.diameter, "lambda": s.friction}
                    for s in p.segments
                ],
            }
            for p in sg.long_pipes
        ],
    }


def _signal(knots, scale: float = 1.0) -> Signal:
    if isinstance(knots, (int, float)):
        return Signal.constant(float(knots) * scale)
    sig = Signal.from_knots(knots)
    return Signal(sig.times, sig.values * scale)


def scenario_from_dict(d: dict) -> tuple[Scenario, dict]:
    """Parse a scenario file; returns (scenario, extra options).

    Extras carry solver overrides plus model options (mesh_h, c, initial
    state) that live outside :class:`~gasnet.sim.SolverConfig`.
    """
    try:
        if d.get("schema", 1) != 1:
            raise InputError(f"unsupported scenario schema {d['schema']!r}")
        unit = str(d.get("pressure_unit", "Pa"))
        scale = {"pa": 1.0, "bar": BAR}.get(unit.lower())
        if scale is None:
            raise InputError(f"unknown pressure_unit {unit!r}")
        supplies = {
            str(s["node"]): _signal(s["pressure"], scale) for s in d.get("supplies", [])
        }
        demands = {str(s["node"]): _signal(s["flow"]) for s in d.get("demands", [])}
        scenario = Scenario(
            supply_pressure=supplies,
            demand_flow=demands,
            horizon=float(d["horizon_s"]),
            tau=float(d["tau_s"]),
        )
        extras = dict(d.get("solver", {}))
        for key in ("mesh_h", "c", "initial"):
            if key in d:
                extras[key] = d[key]
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad scenario file: {exc!r}") from None
    return scenario, extras


def load_scenario(path) -> tuple[Scenario, dict]:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}")
    return scenario_from_dict(d)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_timeseries_csv(path, times: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        names = list(columns)
        w.writerow(["t_s"] + names)
        for i, t in enumerate(times):
            w.writerow([_fmt(t)] + [_fmt(columns[name][i]) for name in names])


def read_timeseries_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    arr = np.array([[float(v) for v in row] for row in data])
    if arr.size == 0:
        arr = arr.reshape(0, len(header))
    times = arr[:, 0]
    return times, {name: arr[:, j + 1] for j, name in enumerate(header[1:])}


def write_iterations_csv(path, ts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "newton_iters", "krylov_iters_total", "final_residual"])
        for k in range(len(ts.newton_iters)):
            w.writerow(
                [k + 1, int(ts.newton_iters[k]), int(ts.krylov_iters[k]),
                 _fmt(ts.final_residuals[k])]
            )


def write_pattern(path, A) -> None:
    """Coordinate-format dump (row col value per line) for spy plots."""
    coo = sp.coo_array(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {_fmt(coo.data[i])}\n")


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
