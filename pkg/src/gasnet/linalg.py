"""Structured sparse kernels for the DF-ordered Jacobian systems.

The Jacobian splits into a large block-lower-triangular differential block
and a small algebraic block.  Solves with the (1,1) block use cached per-pipe
LU factorizations and block forward substitution; the Schur complement of
the algebraic block is formed explicitly (it is only n_s + n_j square) and
used in a block-LU preconditioner for right-preconditioned Krylov solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularBlockError(RuntimeError):
    """A diagonal pipe block (or the Schur complement) is singular."""


@dataclass(frozen=True)
class BlockPartition:
    """Row/column boundaries of the per-pipe blocks inside the (1,1) block."""

    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = self.boundaries
        if len(b) < 2 or b[0] != 0 or any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError("boundaries must be strictly increasing from 0")

    @property
    def nblocks(self) -> int:
        return len(self.boundaries) - 1

    @property
    def n(self) -> int:
        return self.boundaries[-1]


def _factor_blocks(A11: sp.csr_array, part: BlockPartition) -> list:
    factors = []
    for i in range(part.nblocks):
        r0, r1 = part.boundaries[i], part.boundaries[i + 1]
        block = sp.csc_matrix(A11[r0:r1, r0:r1])
        try:
            factors.append(spla.splu(block))
        except RuntimeError as exc:
            raise SingularBlockError(f"singular diagonal block {i}") from exc
    return factors


def block_forward_substitute(
    A11: sp.csr_array,
    part: BlockPartition,
    B: np.ndarray,
    factors: list | None = None,
) -> np.ndarray:
    """Solve A11 X = B for a block-lower-triangular A11, one block at a time."""
    if factors is None:
        factors = _factor_blocks(A11, part)
    A11 = A11.tocsr()
    X = np.zeros_like(B, dtype=float)
    for i in range(part.nblocks):
        r0, r1 = part.boundaries[i], part.boundaries[i + 1]
        rhs = np.array(B[r0:r1], dtype=float)
        if r0 > 0:
            rhs -= A11[r0:r1, :r0] @ X[:r0]
        X[r0:r1] = factors[i].solve(rhs)
    return X


@dataclass
class SchurPreconditioner:
    """Factored block-LU preconditioner P = [[D11, 0], [D21, S]]."""

    part: BlockPartition
    D11: sp.csr_array
    D21: sp.csr_array
    S: np.ndarray
    factors: list = field(repr=False, default_factory=list)
    S_lu: tuple = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.part.n + self.S.shape[0]

    def matvec(self, z: np.ndarray) -> np.ndarray:
        """Apply P itself (used in consistency tests)."""
        nd = self.part.n
        out = np.empty_like(z)
        out[:nd] = self.D11 @ z[:nd]
        out[nd:] = self.D21 @ z[:nd] + self.S @ z[nd:]
        return out

    def solve(self, r: np.ndarray) -> np.ndarray:
        return apply_preconditioner(self, r)


def build_schur_preconditioner(
    D_F: sp.csr_array, part: BlockPartition
) -> SchurPreconditioner:
    """Factor the diagonal blocks and form S = D22 - D21 D11^{-1} D12 densely."""
    nd = part.n
    D_F = D_F.tocsr()
    D11 = D_F[:nd, :nd]
    D12 = D_F[:nd, nd:]
    D21 = D_F[nd:, :nd]
    D22 = D_F[nd:, nd:]
    factors = _factor_blocks(D11, part)
    n_alg = D22.shape[0]
    if n_alg:
        X = block_forward_substitute(D11, part, D12.toarray(), factors)
        S = D22.toarray() - D21 @ X
        try:
            S_lu = sla.lu_factor(S)
        except Exception as exc:  # LinAlgError on exact singularity
            raise SingularBlockError("singular Schur complement") from exc
        if not np.all(np.abs(np.diag(S_lu[0])) > 0.0):
            raise SingularBlockError("singular Schur complement")
    else:
        S = np.zeros((0, 0))
        S_lu = None
    return SchurPreconditioner(
        part=part, D11=D11, D21=D21, S=S, factors=factors, S_lu=S_lu
    )


def apply_preconditioner(P: SchurPreconditioner, r: np.ndarray) -> np.ndarray:
    """Solve the block lower-triangular system P y = r."""
    nd = P.part.n
    y = np.empty_like(r, dtype=float)
    y[:nd] = block_forward_substitute(P.D11, P.part, r[:nd], P.factors)
    if P.S_lu is not None:
        y[nd:] = sla.lu_solve(P.S_lu, r[nd:] - P.D21 @ y[:nd])
    return y


def equilibrate(A: sp.csr_array) -> tuple[sp.csr_array, np.ndarray, np.ndarray]:
    """Row/column max-norm scaling: returns (Dr A Dc, dr, dc).

    The raw matrices mix entry scales over ~8 orders of magnitude (pressures
    vs flows), which pushes the attainable Krylov residual floor far above
    1e-12 relative; equilibration restores it.  The sparsity pattern, and
    with it the block structure, is unchanged.
    """
    A = A.tocsr()
    m = abs(A)
    dr = np.asarray(m.max(axis=1).todense()).ravel()
    dr = np.where(dr > 0.0, 1.0 / np.where(dr > 0.0, dr, 1.0), 1.0)
    Ms = sp.diags_array(dr) @ A
    mc = np.asarray(abs(Ms).max(axis=0).todense()).ravel()
    dc = np.where(mc > 0.0, 1.0 / np.where(mc > 0.0, mc, 1.0), 1.0)
    return (Ms @ sp.diags_array(dc)).tocsr(), dr, dc


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residuals: list[float]
    converged: bool


def _as_matvec(A):
    if callable(A):
        return A
    return lambda v: A @ v


def gmres(
    A,
    b: np.ndarray,
    P: SchurPreconditioner | None = None,
    tol: float = 1e-8,
    maxit: int | None = None,
    restart: int | None = None,
    x0: np.ndarray | None = None,
) -> KrylovResult:
    """Right-preconditioned GMRES with Arnoldi-recurrence stopping.

    With right preconditioning the recurrence residual equals ||b - A x|| in
    exact arithmetic, so the two-step property of the exact block-LU
    preconditioner is directly observable in the iteration count.  The final
    history entry is replaced by the recomputed true residual, which may sit
    above tol*||b|| by the roundoff floor of the preconditioner solves.
    """
    matvec = _as_matvec(A)
    psolve = (lambda v: v) if P is None else P.solve
    n = len(b)
    maxit = maxit if maxit is not None else n
    restart = restart if restart is not None else maxit

    x = np.zeros(n) if x0 is None else x0.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovResult(x=np.zeros(n), iterations=0, residuals=[0.0], converged=True)

    total = 0
    residuals: list[float] = []
    while True:
        r = b - matvec(x) if x.any() else b.copy()
        beta = np.linalg.norm(r)
        if not residuals:
            residuals.append(beta)
        if beta <= tol * bnorm:
            return KrylovResult(x, total, residuals, True)

        mdim = min(restart, maxit - total)
        if mdim <= 0:
            return KrylovResult(x, total, residuals, False)
        V = np.zeros((n, mdim + 1))
        H = np.zeros((mdim + 1, mdim))
        cs = np.zeros(mdim)
        sn = np.zeros(mdim)
        g = np.zeros(mdim + 1)
        V[:, 0] = r / beta
        g[0] = beta

        k_used = 0
        done = False
        for k in range(mdim):
            w = matvec(psolve(V[:, k]))
            for j in range(k + 1):
                H[j, k] = V[:, j] @ w
                w -= H[j, k] * V[:, j]
            H[k + 1, k] = np.linalg.norm(w)
            happy = H[k + 1, k] <= 1e-14 * beta
            if not happy:
                V[:, k + 1] = w / H[k + 1, k]
            # apply stored Givens rotations, then a new one
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            rho = np.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = H[k, k] / rho, H[k + 1, k] / rho
            H[k, k] = rho
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_used = k + 1
            residuals.append(abs(g[k + 1]))
            done = abs(g[k + 1]) <= tol * bnorm or happy
            if done or total >= maxit:
                break

        y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used])
        x = x + psolve(V[:, :k_used] @ y)
        residuals[-1] = np.linalg.norm(b - matvec(x))
        if done:
            return KrylovResult(x, total, residuals, True)
        if total >= maxit:
            return KrylovResult(x, total, residuals, False)


def idr_s(
    A,
    b: np.ndarray,
    P: SchurPreconditioner | None = None,
    s: int = 4,
    tol: float = 1e-8,
    maxit: int | None = None,
    x0: np.ndarray | None = None,
    seed: int = 0,
) -> KrylovResult:
    """IDR(s) with right preconditioning (prototype variant, fixed shadow space)."""
    matvec = _as_matvec(A)
    psolve = (lambda v: v) if P is None else P.solve
    op = lambda v: matvec(psolve(v))
    n = len(b)
    maxit = maxit if maxit is not None else 2 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovResult(np.zeros(n), 0, [0.0], True)

    rng = np.random.default_rng(seed)
    Psh = np.linalg.qr(rng.standard_normal((n, s)))[0]

    u = np.zeros(n) if x0 is None else x0.copy()
    r = b - op(u) if u.any() else b.copy()
    residuals = [float(np.linalg.norm(r))]
    total = 0
    dU = np.zeros((n, s))
    dR = np.zeros((n, s))

    # s minimal-residual steps to seed the difference spaces
    for i in range(s):
        v = op(r)
        vv = v @ v
        if vv == 0.0:
            break
        om = (v @ r) / vv
        dU[:, i] = om * r
        dR[:, i] = -om * v
        u = u + dU[:, i]
        r = r + dR[:, i]
        total += 1
        residuals.append(float(np.linalg.norm(r)))
        if residuals[-1] <= tol * bnorm:
            x = psolve(u)
            return KrylovResult(x, total, residuals, True)

    oldest = 0
    om = 1.0
    while residuals[-1] > tol * bnorm and total < maxit:
        for k in range(s + 1):
            # least squares: the difference space degenerates once the
            # residual hits the roundoff floor
            c = np.linalg.lstsq(Psh.T @ dR, Psh.T @ r, rcond=None)[0]
            v = r - dR @ c
            if k == 0:
                t = op(v)
                om = (t @ v) / (t @ t)
                dU[:, oldest] = -dU @ c + om * v
                dR[:, oldest] = -dR @ c - om * t
            else:
                dU[:, oldest] = -dU @ c + om * v
                dR[:, oldest] = -op(dU[:, oldest])
            u = u + dU[:, oldest]
            r = r + dR[:, oldest]
            total += 1
            oldest = (oldest + 1) % s
            residuals.append(float(np.linalg.norm(r)))
            if residuals[-1] <= tol * bnorm or total >= maxit:
                break

    x = psolve(u)
    return KrylovResult(x, total, residuals, residuals[-1] <= tol * bnorm)
