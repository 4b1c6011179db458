"""Staggered finite-volume discretization of a long pipe.

A pipe of total length L is cut into m = n-1 cells between n discretization
points.  Unknowns are p_2..p_n and q_1..q_{n-1}; p_1 is the inlet pressure
and q_n the outlet flow, both supplied externally.  Cells never straddle
segment boundaries, so area, diameter and friction factor are constant per
cell.  The semi-discrete system reads

    M_p dp/dt = K_pq q + B_q q_d
    M_q dq/dt = K_qp p + B_p p_s + g(p_s, p, q)

with the quadratic friction term g acting on the momentum rows only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import LongPipe

#: isothermal speed of sound squared (m^2/s^2), configurable per scenario
DEFAULT_C = 340.0**2


class SingularStateError(ValueError):
    """A pressure became nonpositive where the friction term divides by it."""


@dataclass(frozen=True)
class PipeGrid:
    """Cell data of one long pipe: arrays of length n-1 (one entry per cell)."""

    h: np.ndarray
    area: np.ndarray
    diameter: np.ndarray
    friction: np.ndarray

    @property
    def n(self) -> int:
        """Number of discretization points."""
        return len(self.h) + 1

    @property
    def total_length(self) -> float:
        return float(self.h.sum())


@dataclass(frozen=True)
class PipeOperators:
    M_p: sp.csr_array
    M_q: sp.csr_array
    K_pq: sp.csr_array
    K_qp: sp.csr_array
    B_q: np.ndarray
    B_p: np.ndarray
    c: float


@dataclass(frozen=True)
class FrictionEvaluator:
    """Per-cell friction coefficients kappa_i and the g(p_in, p, q) vector.

    g_i = -kappa_i * q_i|q_i| / ptilde_i where ptilde_1 is the inlet pressure
    and ptilde_i = p_i for i >= 2.  q|q| is C^1 with derivative 2|q|, so no
    smoothing is needed at q = 0.
    """

    kappa: np.ndarray

    def _ptilde(self, p_in: float, p: np.ndarray) -> np.ndarray:
        ptil = np.empty_like(self.kappa)
        ptil[0] = p_in
        ptil[1:] = p[: len(self.kappa) - 1]
        if np.any(ptil <= 0.0):
            cell = int(np.argmax(ptil <= 0.0))
            raise SingularStateError(
                f"nonpositive pressure {ptil[cell]:g} in friction cell {cell}"
            )
        return ptil

    def evaluate(self, p_in: float, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        ptil = self._ptilde(p_in, p)
        return -self.kappa * q * np.abs(q) / ptil

    def jacobian(
        self, p_in: float, p: np.ndarray, q: np.ndarray
    ) -> tuple[sp.csr_array, np.ndarray, np.ndarray]:
        """Return (dg/dp sparse, dg/dq diagonal, dg/dp_in vector).

        dg/dp has its nonzeros on the first subdiagonal: row i (i >= 1)
        depends on the (i-1)-th entry of the interior pressure vector.
        """
        m = len(self.kappa)
        ptil = self._ptilde(p_in, p)
        qabs = np.abs(q)
        dg_dq = -2.0 * self.kappa * qabs / ptil
        dptil = self.kappa * q * qabs / ptil**2
        dg_dp = sp.csr_array(
            (dptil[1:], (np.arange(1, m), np.arange(0, m - 1))), shape=(m, m)
        )
        dg_dpin = np.zeros(m)
        dg_dpin[0] = dptil[0]
        return dg_dp, dg_dq, dg_dpin


def build_grid(pipe: LongPipe, target_h: float) -> PipeGrid:
    """Divide each segment into ceil(length / target_h) equal cells."""
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    h, area, diam, lam = [], [], [], []
    for seg in pipe.segments:
        cells = max(1, math.ceil(seg.length / target_h))
        h.extend([seg.length / cells] * cells)
        area.extend([seg.area] * cells)
        diam.extend([seg.diameter] * cells)
        lam.extend([seg.friction] * cells)
    if len(h) < 2:
        raise ValueError(
            f"pipe {pipe.id!r}: target_h={target_h:g} yields fewer than 2 cells"
        )
    return PipeGrid(
        h=np.asarray(h), area=np.asarray(area), diameter=np.asarray(diam),
        friction=np.asarray(lam),
    )


def assemble_operators(grid: PipeGrid, c: float = DEFAULT_C) -> PipeOperators:
    """Assemble the per-pipe mass and stiffness matrices and boundary maps."""
    h, a = grid.h, grid.area
    m = len(h)

    rows, cols, vals = [], [], []

    def put(r, ccol, v):
        rows.append(r)
        cols.append(ccol)
        vals.append(v)

    # M_p: rows for p_2..p_n
    for r in range(m - 1):
        put(r, r, (h[r] + h[r + 1]) / 2.0)
    put(m - 1, m - 2, h[m - 1] / 8.0)
    put(m - 1, m - 1, 3.0 * h[m - 1] / 8.0)
    M_p = sp.csr_array((vals, (rows, cols)), shape=(m, m))

    # M_q: rows for q_1..q_{n-1}
    rows, cols, vals = [], [], []
    put(0, 0, 3.0 * h[0] / 8.0)
    put(0, 1, h[0] / 8.0)
    for r in range(1, m):
        put(r, r, (h[r - 1] + h[r]) / 2.0)
    M_q = sp.csr_array((vals, (rows, cols)), shape=(m, m))

    # K_pq: upper 3-diagonal profile
    rows, cols, vals = [], [], []
    for r in range(m - 1):
        put(r, r, c / (2.0 * a[r]))
        put(r, r + 1, -(c / 2.0) * (1.0 / a[r] - 1.0 / a[r + 1]))
        if r + 2 <= m - 1:
            put(r, r + 2, -c / (2.0 * a[r + 1]))
    put(m - 1, m - 1, c / (2.0 * a[m - 1]))
    K_pq = sp.csr_array((vals, (rows, cols)), shape=(m, m))

    B_q = np.zeros(m)
    B_q[m - 2] = -c / (2.0 * a[m - 1])
    B_q[m - 1] = -c / (2.0 * a[m - 1])

    # K_qp: lower 3-diagonal profile
    rows, cols, vals = [], [], []
    put(0, 0, -a[0] / 2.0)
    for r in range(1, m):
        if r >= 2:
            put(r, r - 2, a[r - 1] / 2.0)
        put(r, r - 1, -(a[r - 1] - a[r]) / 2.0)
        put(r, r, -a[r] / 2.0)
    K_qp = sp.csr_array((vals, (rows, cols)), shape=(m, m))

    B_p = np.zeros(m)
    B_p[0] = a[0] / 2.0
    B_p[1] = a[0] / 2.0

    return PipeOperators(M_p=M_p, M_q=M_q, K_pq=K_pq, K_qp=K_qp, B_q=B_q, B_p=B_p, c=c)


def friction_evaluator(grid: PipeGrid, c: float = DEFAULT_C) -> FrictionEvaluator:
    h, a, d, lam = grid.h, grid.area, grid.diameter, grid.friction
    w = h * lam / (a * d)
    kappa = np.empty(len(h))
    kappa[0] = (c / 4.0) * w[0]
    kappa[1:] = (c / 4.0) * (w[:-1] + w[1:])
    return FrictionEvaluator(kappa=kappa)
