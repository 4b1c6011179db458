"""Time integration and nonlinear solvers for the network DAE.

Implicit Euler in time; at each step the nonlinear system is solved by
Newton's method (or the Picard variant that freezes |q|/p of the friction
term at the previous iterate).  The linear Newton systems are solved by a
right-preconditioned Krylov method using the block-LU Schur preconditioner,
rebuilt per Newton iteration, per time step, or frozen at the very first
Newton iterate depending on the configured strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dae
from .dae import DaeSystem, Scenario, inputs_at
from .linalg import (
    BlockPartition,
    KrylovResult,
    build_schur_preconditioner,
    equilibrate,
    gmres,
    idr_s,
)

FROZEN = "frozen"
PER_STEP = "per-step"
PER_NEWTON = "per-newton"


class SolverError(RuntimeError):
    """Nonlinear or linear solve failed."""


@dataclass
class SolverConfig:
    tau: float = 1.0
    eps0: float = 1e-5          # Newton stop tolerance on ||F||_2
    n_max: int = 50             # max Newton iterations per step
    eps_tol: float = 1e-3       # inner Krylov relative tolerance (forcing term)
    precond: str = PER_STEP     # frozen | per-step | per-newton
    method: str = "newton"      # newton | picard
    krylov: str = "gmres"       # gmres | idr
    krylov_maxit: int = 1000
    restart: int | None = None
    idr_shadow: int = 4
    max_dampings: int = 10

    def __post_init__(self):
        if self.eps0 <= 0 or self.eps_tol <= 0 or self.tau <= 0:
            raise ValueError("tau, eps0 and eps_tol must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.precond not in (FROZEN, PER_STEP, PER_NEWTON):
            raise ValueError(f"unknown preconditioner strategy {self.precond!r}")


@dataclass
class NonlinearResult:
    x: np.ndarray
    iterations: int
    residuals: list[float]
    krylov_iters: list[int]
    converged: bool


@dataclass
class TimeSeriesOutput:
    times: np.ndarray
    columns: dict[str, np.ndarray]
    newton_iters: np.ndarray
    krylov_iters: np.ndarray
    final_residuals: np.ndarray
    final_state: np.ndarray


class SchurKrylovSolver:
    """Preconditioned Krylov solve with a configurable refresh policy."""

    def __init__(self, cfg: SolverConfig, partition: BlockPartition):
        self.cfg = cfg
        self.partition = partition
        self.P = None
        self.dr = None
        self.dc = None

    def refresh(self, A: sp.csr_array) -> None:
        As, self.dr, self.dc = equilibrate(A)
        self.P = build_schur_preconditioner(As, self.partition)

    def solve(self, A: sp.csr_array, b: np.ndarray) -> tuple[np.ndarray, int]:
        cfg = self.cfg
        if self.P is None or cfg.precond == PER_NEWTON:
            self.refresh(A)
        # scale with the factors the preconditioner was built from
        As = (sp.diags_array(self.dr) @ A @ sp.diags_array(self.dc)).tocsr()
        bs = self.dr * b
        if cfg.krylov == "idr":
            res: KrylovResult = idr_s(
                As, bs, P=self.P, s=cfg.idr_shadow, tol=cfg.eps_tol,
                maxit=cfg.krylov_maxit,
            )
        else:
            res = gmres(
                As, bs, P=self.P, tol=cfg.eps_tol, maxit=cfg.krylov_maxit,
                restart=cfg.restart,
            )
        if not res.converged:
            hint = (
                " (frozen preconditioner may be stale; try precond='per-step')"
                if cfg.precond == FROZEN
                else ""
            )
            raise SolverError(
                f"Krylov solver did not reach tol={cfg.eps_tol:g} within "
                f"{cfg.krylov_maxit} iterations{hint}"
            )
        return self.dc * res.x, res.iterations


def _splu(A):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # raised by SuperLU on exact singularity
        raise SolverError(f"direct linear solve failed: {exc}") from exc


class DirectLinearSolver:
    """Sparse-LU fallback used by the steady-state solver."""

    def solve(self, A, b):
        return _splu(A).solve(b), 0

    def refresh(self, A):
        pass


def _damped_update(
    x: np.ndarray, dx: np.ndarray, pressure_mask: np.ndarray | None, max_dampings: int
) -> np.ndarray:
    """Shorten the step until no pressure turns nonpositive.

    The step is first clipped to keep a 10% margin inside the positive
    orthant of the pressures, then halved as a safety net.
    """
    alpha = 1.0
    if pressure_mask is not None:
        p, dp = x[pressure_mask], dx[pressure_mask]
        falling = dp < 0.0
        if np.any(falling):
            alpha = min(1.0, 0.9 * float(np.min(p[falling] / -dp[falling])))
    for _ in range(max_dampings + 1):
        cand = x + alpha * dx
        if pressure_mask is None or np.all(cand[pressure_mask] > 0.0):
            return cand
        alpha *= 0.5
    raise SolverError("Newton update drives a pressure nonpositive even after damping")


def newton_solve(
    F,
    J,
    x0: np.ndarray,
    cfg: SolverConfig,
    linear_solver=None,
    pressure_mask: np.ndarray | None = None,
) -> NonlinearResult:
    """Inexact Newton iteration on F(x) = 0 with ||F||_2 stopping rule."""
    if linear_solver is None:
        linear_solver = DirectLinearSolver()
    x = x0.copy()
    residuals = [float(np.linalg.norm(F(x)))]
    krylov: list[int] = []
    m = 0
    while m < cfg.n_max and residuals[-1] >= cfg.eps0:
        dx, k = linear_solver.solve(J(x), -F(x))
        x = _damped_update(x, dx, pressure_mask, cfg.max_dampings)
        residuals.append(float(np.linalg.norm(F(x))))
        krylov.append(k)
        m += 1
    return NonlinearResult(
        x=x, iterations=m, residuals=residuals, krylov_iters=krylov,
        converged=residuals[-1] < cfg.eps0,
    )


def picard_solve(
    sys: DaeSystem,
    x_prev: np.ndarray,
    u: tuple[np.ndarray, np.ndarray],
    cfg: SolverConfig,
    x0: np.ndarray | None = None,
) -> NonlinearResult:
    """Picard iteration for one implicit-Euler step.

    The friction rows are linearized as -kappa_i (|q_i|/p_i at the previous
    iterate) q_i, so each sweep solves a linear system whose friction
    contribution is diagonal.
    """
    tau = cfg.tau
    ps, qd = u
    x = (x_prev if x0 is None else x0).copy()
    rhs = sys.M @ x_prev + tau * (sys.Bp @ ps + sys.Bq @ qd)
    residuals = [float(np.linalg.norm(dae.eval_residual(sys, x, x_prev, u, tau)))]
    krylov: list[int] = []
    m = 0
    while m < cfg.n_max and residuals[-1] >= cfg.eps0:
        diag = np.zeros(sys.n)
        for b in sys.blocks:
            p_in = ps[sys.supply_nodes.index(b.supply_node)] if b.supply_node else x[b.donor_pn]
            ptil = np.empty(b.grid.n - 1)
            ptil[0] = p_in
            ptil[1:] = x[b.p_slice][:-1]
            if np.any(ptil <= 0):
                raise SolverError("Picard iterate lost pressure positivity")
            diag[b.q_slice] = b.friction.kappa * np.abs(x[b.q_slice]) / ptil
        A = sys.M - tau * sys.K + tau * sp.diags_array(diag)
        x = _splu(A).solve(rhs)
        residuals.append(float(np.linalg.norm(dae.eval_residual(sys, x, x_prev, u, tau))))
        krylov.append(0)
        m += 1
    return NonlinearResult(
        x=x, iterations=m, residuals=residuals, krylov_iters=krylov,
        converged=residuals[-1] < cfg.eps0,
    )


def partition_of(sys: DaeSystem) -> BlockPartition:
    return BlockPartition(tuple(sys.block_boundaries))


def flow_distributed_state(
    sys: DaeSystem, u: tuple[np.ndarray, np.ndarray], pressure: float | None = None
) -> np.ndarray:
    """Constant-pressure state with demand flows back-propagated to supplies.

    Walking the pipes in reverse DF order, each pipe carries its terminal
    flow uniformly; at a junction the outgoing total is split equally among
    the incoming pipes.  The result satisfies the junction mass balances and
    keeps flows away from zero, where the steady Jacobian degenerates.
    """
    ps, qd = u
    if pressure is None:
        pressure = float(np.mean(ps))
    x = constant_state(sys, pressure)
    flow: dict[str, float] = {}
    for b in reversed(sys.blocks):
        if b.demand_node is not None:
            q = float(qd[sys.demand_nodes.index(b.demand_node)])
        else:
            node = b.pipe.to_node
            total = sum(flow[p.id] for p in sys.graph.outgoing(node))
            q = total / len(sys.graph.incoming(node))
        flow[b.pipe.id] = q
        x[b.q_slice] = q
        if b.extra_index is not None:
            x[b.extra_index] = q
    return x


def steady_state(
    sys: DaeSystem,
    u: tuple[np.ndarray, np.ndarray],
    x_guess: np.ndarray | None = None,
    eps: float = 1e-9,
    n_max: int = 100,
) -> np.ndarray:
    """Solve K x + B u + f(x) = 0 by damped Newton with a direct solver.

    At exactly zero flow the friction Jacobian vanishes and the pressure
    equality rows become redundant, so the default guess distributes the
    demand flows over the network and nudges them off zero if necessary.
    """
    ps, qd = u
    if x_guess is None:
        x_guess = flow_distributed_state(sys, u)
    qmask = ~sys.pressure_mask()
    qmask[sys.n_diff:] = True
    if np.all(np.abs(x_guess[qmask]) < 1e-12):
        x_guess = x_guess.copy()
        x_guess[qmask] = 1e-6
    bu = sys.Bp @ ps + sys.Bq @ qd

    def G(x):
        return sys.K @ x + bu + dae.eval_f(sys, x, ps)

    def J(x):
        return (sys.K + dae.df_dx(sys, x, ps)).tocsr()

    # eps is relative to the forcing scale; the algebraic rows end up exact
    # anyway because the inner solves are direct
    scale = max(1.0, float(np.linalg.norm(bu)))
    mask = sys.pressure_mask()
    x = x_guess.copy()
    rnorm = float(np.linalg.norm(G(x)))
    for _ in range(n_max):
        if rnorm < eps * scale:
            return x
        dx = _splu(J(x)).solve(-G(x))
        # clip to the positive pressure orthant, then backtrack on ||G||;
        # flow reversals kink the friction term, so full steps can overshoot
        alpha, dp = 1.0, dx[mask]
        falling = dp < 0.0
        if np.any(falling):
            alpha = min(1.0, 0.9 * float(np.min(x[mask][falling] / -dp[falling])))
        accepted = False
        for _ in range(40):
            cand = x + alpha * dx
            cnorm = float(np.linalg.norm(G(cand)))
            if np.all(cand[mask] > 0.0) and cnorm < rnorm:
                x, rnorm, accepted = cand, cnorm, True
                break
            alpha *= 0.5
        if not accepted:
            raise SolverError(
                f"steady-state line search stalled (residual {rnorm:g})"
            )
    if rnorm < eps * scale:
        return x
    raise SolverError(f"steady-state Newton did not converge (residual {rnorm:g})")


def constant_state(sys: DaeSystem, pressure: float, flow: float = 0.0) -> np.ndarray:
    """Uniform-pressure state; consistent with the algebraic rows when flow=0."""
    x = np.zeros(sys.n)
    for b in sys.blocks:
        x[b.p_slice] = pressure
        x[b.q_slice] = flow
    return x


def initial_state(sys: DaeSystem, scenario: Scenario, mode: str = "steady",
                  pressure: float | None = None) -> np.ndarray:
    """Default x0: steady state at t=0 inputs, or a constant-pressure state."""
    u0 = inputs_at(sys, scenario, 0.0)
    if pressure is None:
        pressure = float(np.mean(u0[0]))
    if mode == "constant":
        return constant_state(sys, pressure)
    if mode == "steady":
        return steady_state(sys, u0, flow_distributed_state(sys, u0, pressure))
    raise ValueError(f"unknown initial state mode {mode!r}")


def _observables(sys: DaeSystem, x: np.ndarray, u) -> dict[str, float]:
    ps, qd = u
    out: dict[str, float] = {}
    for nid in sys.supply_nodes:
        out[f"p[{nid}]"] = float(ps[sys.supply_nodes.index(nid)])
    for b in sys.blocks:
        if b.demand_node is not None:
            out[f"p[{b.demand_node}]"] = float(x[b.pn_index])
    for node in sorted(sys.graph.junctions(), key=lambda n: n.id):
        inc = sorted(sys.graph.incoming(node.id), key=lambda p: p.order)
        blk = next(b for b in sys.blocks if b.pipe.id == inc[0].id)
        out[f"p[{node.id}]"] = float(x[blk.pn_index])
    for b in sys.blocks:
        out[f"q_in[{b.pipe.id}]"] = float(x[b.q1_index])
        if b.extra_index is not None:
            out[f"q_out[{b.pipe.id}]"] = float(x[b.extra_index])
        else:
            out[f"q_out[{b.pipe.id}]"] = float(qd[sys.demand_nodes.index(b.demand_node)])
    return out


def implicit_euler_simulate(
    sys: DaeSystem,
    scenario: Scenario,
    cfg: SolverConfig,
    x0: np.ndarray | None = None,
) -> TimeSeriesOutput:
    """March the DAE with implicit Euler, warm-starting Newton at each step."""
    tau = cfg.tau
    if x0 is None:
        x0 = initial_state(sys, scenario)
    u0 = inputs_at(sys, scenario, 0.0)
    alg = (sys.K @ x0 + sys.Bp @ u0[0] + sys.Bq @ u0[1])[sys.n_diff:]
    atol = 1e-6 * max(1.0, float(np.abs(x0).max()))
    if sys.n_alg and np.linalg.norm(alg, ord=np.inf) > atol:
        raise SolverError("initial state violates the algebraic constraints")

    n_t = int(round(scenario.horizon / tau))
    times = tau * np.arange(n_t + 1)
    mask = sys.pressure_mask()
    lin = SchurKrylovSolver(cfg, partition_of(sys))

    rows = [_observables(sys, x0, u0)]
    newton_iters = np.zeros(n_t, dtype=int)
    krylov_iters = np.zeros(n_t, dtype=int)
    final_res = np.zeros(n_t)

    x = x0.copy()
    for k in range(1, n_t + 1):
        t_k = times[k]
        u_k = inputs_at(sys, scenario, t_k)
        x_prev = x

        if cfg.method == "picard":
            res = picard_solve(sys, x_prev, u_k, cfg, x0=x_prev)
        else:
            F = lambda y: dae.eval_residual(sys, y, x_prev, u_k, tau)
            J = lambda y: dae.eval_jacobian(sys, y, u_k, tau)
            if cfg.precond == PER_STEP:
                lin.refresh(J(x_prev))
            elif cfg.precond == FROZEN and lin.P is None:
                lin.refresh(J(x_prev))
            res = newton_solve(F, J, x_prev, cfg, linear_solver=lin, pressure_mask=mask)
        if not res.converged:
            raise SolverError(
                f"step {k} (t={t_k:g}s): nonlinear solve stalled at "
                f"||F||={res.residuals[-1]:g}"
            )
        x = res.x
        newton_iters[k - 1] = res.iterations
        krylov_iters[k - 1] = sum(res.krylov_iters)
        final_res[k - 1] = res.residuals[-1]
        rows.append(_observables(sys, x, u_k))

    names = list(rows[0].keys())
    columns = {name: np.array([r[name] for r in rows]) for name in names}
    return TimeSeriesOutput(
        times=times,
        columns=columns,
        newton_iters=newton_iters,
        krylov_iters=krylov_iters,
        final_residuals=final_res,
        final_state=x,
    )
