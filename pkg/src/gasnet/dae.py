"""Global nonlinear DAE assembly for a DF-ordered smoothed network.

The state vector stacks, per long pipe in DF order, the interior pressures
p_2..p_n and the flows q_1..q_{n-1}, followed by one extra terminal-flow
unknown per supply and junction pipe.  The system reads

    M dx/dt = K x + B_p p_s(t) + B_q q_d(t) + f(x, p_s)

where the algebraic rows (zero rows of M) carry the junction mass balances
and pressure equalities.  Each non-supply pipe takes its inlet pressure from
the terminal pressure of its lowest-DF-order incoming pipe ("donor"), which
keeps the differential (1,1) block of all system matrices block lower
triangular.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .fvm import (
    DEFAULT_C,
    FrictionEvaluator,
    PipeGrid,
    PipeOperators,
    assemble_operators,
    build_grid,
    friction_evaluator,
)
from .graph import DEMAND, SUPPLY, GraphError, LongPipe, SmoothedGraph, count_extras


class AssemblyError(ValueError):
    """The smoothed graph cannot be assembled into a well-posed DAE."""


@dataclass(frozen=True)
class PipeBlock:
    """Bookkeeping for one long pipe inside the global state vector."""

    pipe: LongPipe
    grid: PipeGrid
    ops: PipeOperators
    friction: FrictionEvaluator
    p_slice: slice
    q_slice: slice
    supply_node: str | None = None
    donor: int | None = None       # index of the donor pipe block
    donor_pn: int | None = None    # global index of the donor terminal pressure
    demand_node: str | None = None
    extra_index: int | None = None  # global index of the q_d unknown

    @property
    def pn_index(self) -> int:
        """Global index of this pipe's terminal pressure p_n."""
        return self.p_slice.stop - 1

    @property
    def q1_index(self) -> int:
        """Global index of this pipe's initial flow q_1."""
        return self.q_slice.start


@dataclass
class DaeSystem:
    graph: SmoothedGraph
    blocks: list[PipeBlock]
    n_diff: int
    n_alg: int
    supply_nodes: list[str]
    demand_nodes: list[str]
    M: sp.csr_array
    K: sp.csr_array
    Bp: sp.csr_array
    Bq: sp.csr_array
    block_boundaries: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.n_diff + self.n_alg

    def pressure_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        for b in self.blocks:
            mask[b.p_slice] = True
        return mask


@dataclass(frozen=True)
class Signal:
    """Piecewise-linear time signal with constant extrapolation."""

    times: np.ndarray
    values: np.ndarray

    @staticmethod
    def constant(value: float) -> "Signal":
        return Signal(np.array([0.0]), np.array([float(value)]))

    @staticmethod
    def from_knots(knots) -> "Signal":
        t = np.asarray([k[0] for k in knots], dtype=float)
        v = np.asarray([k[1] for k in knots], dtype=float)
        if len(t) == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("signal knots need strictly increasing times")
        return Signal(t, v)

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


@dataclass
class Scenario:
    """Boundary signals: supply pressures (Pa) and demand flows (kg/s)."""

    supply_pressure: dict[str, Signal]
    demand_flow: dict[str, Signal]
    horizon: float
    tau: float


def discretize(
    sg: SmoothedGraph, target_h: float, c: float = DEFAULT_C
) -> tuple[dict[str, PipeGrid], dict[str, PipeOperators]]:
    grids = {p.id: build_grid(p, target_h) for p in sg.long_pipes}
    ops = {pid: assemble_operators(g, c) for pid, g in grids.items()}
    return grids, ops


def assemble_dae(
    sg: SmoothedGraph,
    grids: dict[str, PipeGrid],
    operators: dict[str, PipeOperators],
) -> DaeSystem:
    """Place per-pipe operators, couple inlet pressures, add nodal constraints."""
    pipes = sg.long_pipes
    if any(p.order is None for p in pipes):
        raise AssemblyError("smoothed graph must be DF-ordered before assembly")
    kind = {n.id: n.kind for n in sg.nodes}

    # state layout: per-pipe [p; q] blocks in DF order, then extra flows
    blocks: list[PipeBlock] = []
    boundaries = [0]
    off = 0
    for p in pipes:
        grid = grids[p.id]
        m = grid.n - 1
        blocks.append(
            PipeBlock(
                pipe=p,
                grid=grid,
                ops=operators[p.id],
                friction=friction_evaluator(grid, operators[p.id].c),
                p_slice=slice(off, off + m),
                q_slice=slice(off + m, off + 2 * m),
            )
        )
        off += 2 * m
        boundaries.append(off)
    n_diff = off

    by_id = {b.pipe.id: i for i, b in enumerate(blocks)}
    extra_of: dict[str, int] = {}
    n_extra = 0
    for b in blocks:
        if kind[b.pipe.to_node] != DEMAND:
            extra_of[b.pipe.id] = n_diff + n_extra
            n_extra += 1

    # wire inlets and outlets
    for i, b in enumerate(blocks):
        if kind[b.pipe.from_node] == SUPPLY:
            blocks[i] = b = replace(b, supply_node=b.pipe.from_node)
        else:
            incoming = sorted(sg.incoming(b.pipe.from_node), key=lambda p: p.order)
            if not incoming:
                raise AssemblyError(
                    f"pipe {b.pipe.id!r} has no incoming pressure source at "
                    f"node {b.pipe.from_node!r}"
                )
            j = by_id[incoming[0].id]
            blocks[i] = b = replace(b, donor=j, donor_pn=blocks[j].pn_index)
        if kind[b.pipe.to_node] == DEMAND:
            blocks[i] = replace(b, demand_node=b.pipe.to_node)
        else:
            blocks[i] = replace(b, extra_index=extra_of[b.pipe.id])

    # constraint rows: per junction one mass balance + (n_in - 1) pressure rows
    rows_K: list[int] = []
    cols_K: list[int] = []
    vals_K: list[float] = []
    row = n_diff
    for node in sorted(sg.junctions(), key=lambda n: n.id):
        incoming = sorted(sg.incoming(node.id), key=lambda p: p.order)
        outgoing = sg.outgoing(node.id)
        if not incoming:
            raise AssemblyError(
                f"junction {node.id!r} has no incoming pipe after orientation"
            )
        for p in incoming:
            rows_K.append(row)
            cols_K.append(extra_of[p.id])
            vals_K.append(1.0)
        for p in outgoing:
            rows_K.append(row)
            cols_K.append(blocks[by_id[p.id]].q1_index)
            vals_K.append(-1.0)
        row += 1
        donor = incoming[0]
        for p in incoming[1:]:
            rows_K.append(row)
            cols_K.append(blocks[by_id[p.id]].pn_index)
            vals_K.append(1.0)
            rows_K.append(row)
            cols_K.append(blocks[by_id[donor.id]].pn_index)
            vals_K.append(-1.0)
            row += 1
    n_alg = row - n_diff

    n_e, n_a = count_extras(sg)
    if len(pipes) > 1 and (n_extra != n_e or n_alg != n_a):
        raise AssemblyError(
            f"constraint bookkeeping mismatch: {n_extra} extras vs n_e={n_e}, "
            f"{n_alg} algebraic rows vs n_a={n_a}"
        )
    if n_extra != n_alg:
        raise AssemblyError("system is not square: extras != algebraic rows")

    n = n_diff + n_alg
    supply_nodes = sorted(nid for nid, k in kind.items() if k == SUPPLY)
    demand_nodes = sorted(nid for nid, k in kind.items() if k == DEMAND)
    s_col = {nid: j for j, nid in enumerate(supply_nodes)}
    d_col = {nid: j for j, nid in enumerate(demand_nodes)}

    M_trip: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    K_trip: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    Bp_trip: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    Bq_trip: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    def add(trip, mat, r0, c0):
        coo = sp.coo_array(mat)
        trip.append((coo.row + r0, coo.col + c0, coo.data))

    for b in blocks:
        p0, q0 = b.p_slice.start, b.q_slice.start
        m = b.grid.n - 1
        add(M_trip, b.ops.M_p, p0, p0)
        add(M_trip, b.ops.M_q, q0, q0)
        add(K_trip, b.ops.K_pq, p0, q0)
        add(K_trip, b.ops.K_qp, q0, p0)
        qrows = np.arange(q0, q0 + m)
        prows = np.arange(p0, p0 + m)
        if b.supply_node is not None:
            Bp_trip.append((qrows, np.full(m, s_col[b.supply_node]), b.ops.B_p))
        else:
            K_trip.append((qrows, np.full(m, b.donor_pn), b.ops.B_p))
        if b.demand_node is not None:
            Bq_trip.append((prows, np.full(m, d_col[b.demand_node]), b.ops.B_q))
        else:
            K_trip.append((prows, np.full(m, b.extra_index), b.ops.B_q))
    K_trip.append(
        (np.asarray(rows_K, dtype=int), np.asarray(cols_K, dtype=int), np.asarray(vals_K))
    )

    def collect(trip, shape):
        if not trip:
            return sp.csr_array(shape)
        r = np.concatenate([t[0] for t in trip])
        c = np.concatenate([t[1] for t in trip])
        v = np.concatenate([t[2] for t in trip])
        out = sp.csr_array((v, (r, c)), shape=shape)
        out.eliminate_zeros()
        return out

    M = collect(M_trip, (n, n))
    K = collect(K_trip, (n, n))
    Bp = collect(Bp_trip, (n, len(supply_nodes)))
    Bq = collect(Bq_trip, (n, len(demand_nodes)))

    return DaeSystem(
        graph=sg,
        blocks=blocks,
        n_diff=n_diff,
        n_alg=n_alg,
        supply_nodes=supply_nodes,
        demand_nodes=demand_nodes,
        M=M.tocsr(),
        K=K,
        Bp=Bp.tocsr(),
        Bq=Bq.tocsr(),
        block_boundaries=boundaries,
    )


def inputs_at(sys: DaeSystem, scenario: Scenario, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the boundary signals at time t, in system node order."""
    try:
        ps = np.array([scenario.supply_pressure[nid](t) for nid in sys.supply_nodes])
        qd = np.array([scenario.demand_flow[nid](t) for nid in sys.demand_nodes])
    except KeyError as exc:
        raise AssemblyError(f"scenario is missing a signal for node {exc}") from None
    return ps, qd


def _inlet_pressure(sys: DaeSystem, b: PipeBlock, x: np.ndarray, ps: np.ndarray) -> float:
    if b.supply_node is not None:
        return float(ps[sys.supply_nodes.index(b.supply_node)])
    return float(x[b.donor_pn])


def eval_f(sys: DaeSystem, x: np.ndarray, ps: np.ndarray) -> np.ndarray:
    """Nonlinear friction term, stacked per pipe; zero on algebraic rows."""
    f = np.zeros(sys.n)
    for b in sys.blocks:
        p_in = _inlet_pressure(sys, b, x, ps)
        f[b.q_slice] = b.friction.evaluate(p_in, x[b.p_slice], x[b.q_slice])
    return f


def df_dx(sys: DaeSystem, x: np.ndarray, ps: np.ndarray) -> sp.csr_array:
    """Jacobian of the friction term; confined to the differential block."""
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for b in sys.blocks:
        p_in = _inlet_pressure(sys, b, x, ps)
        dg_dp, dg_dq, dg_dpin = b.friction.jacobian(p_in, x[b.p_slice], x[b.q_slice])
        m = b.grid.n - 1
        q0 = b.q_slice.start
        p0 = b.p_slice.start
        coo = dg_dp.tocoo()
        rows.append(coo.row + q0)
        cols.append(coo.col + p0)
        vals.append(coo.data)
        rows.append(np.arange(q0, q0 + m))
        cols.append(np.arange(q0, q0 + m))
        vals.append(dg_dq)
        if b.supply_node is None:
            rows.append(np.array([q0]))
            cols.append(np.array([b.donor_pn]))
            vals.append(np.array([dg_dpin[0]]))
    return sp.csr_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(sys.n, sys.n),
    )


def eval_residual(
    sys: DaeSystem,
    x: np.ndarray,
    x_prev: np.ndarray,
    u: tuple[np.ndarray, np.ndarray],
    tau: float,
) -> np.ndarray:
    """Implicit-Euler residual F(x) = (M - tau K)x - tau f(x) - M x_prev - tau B u."""
    if len(x) != sys.n or len(x_prev) != sys.n:
        raise ValueError("state vector length mismatch")
    ps, qd = u
    bu = sys.Bp @ ps + sys.Bq @ qd
    return (
        sys.M @ x
        - tau * (sys.K @ x)
        - tau * eval_f(sys, x, ps)
        - sys.M @ x_prev
        - tau * bu
    )


def eval_jacobian(
    sys: DaeSystem,
    x: np.ndarray,
    u: tuple[np.ndarray, np.ndarray],
    tau: float,
) -> sp.csr_array:
    """D_F(x) = (M - tau K) - tau df/dx, as one sparse matrix."""
    ps, _ = u
    return (sys.M - tau * sys.K - tau * df_dx(sys, x, ps)).tocsr()


def split_blocks(sys: DaeSystem, A: sp.csr_array):
    """Partition a system matrix into the differential/algebraic 2x2 blocks."""
    nd = sys.n_diff
    A = A.tocsr()
    return (
        A[:nd, :nd],
        A[:nd, nd:],
        A[nd:, :nd],
        A[nd:, nd:],
    )
