"""Per-pipe finite-volume operators and the friction term."""

import numpy as np
import pytest
import math

from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracle
from gasnet.fvm import (
    DEFAULT_C,
    SingularStateError,
    assemble_operators,
    build_grid,
    friction_evaluator,
)
from gasnet.graph import LongPipe, Segment


def _pipe(segments):
    return LongPipe("p", "a", "b", tuple(segments), "supply")


def test_build_grid_splits_segments_without_straddling():
    p = _pipe([Segment(300.0, 0.5, 0.01), Segment(250.0, 0.6, 0.02)])
    g = build_grid(p, 100.0)
    # 300 -> 3 cells of 100, 250 -> 3 cells of 83.33; cells stay inside segments
    assert g.n == 7
    np.testing.assert_allclose(g.h[:3], 100.0)
    np.testing.assert_allclose(g.h[3:], 250.0 / 3.0)
    assert set(g.diameter[:3]) == {0.5} and set(g.diameter[3:]) == {0.6}
    assert g.total_length == pytest.approx(550.0)


def test_build_grid_rejects_degenerate_meshes():
    p = _pipe([Segment(100.0, 0.5, 0.01)])
    with pytest.raises(ValueError, match="fewer than 2"):
        build_grid(p, 1000.0)
    with pytest.raises(ValueError, match="positive"):
        build_grid(p, -1.0)


segment_lists = st.lists(
    st.tuples(
        st.floats(50.0, 800.0),
        st.floats(0.2, 1.0),
        st.floats(0.005, 0.05),
    ),
    min_size=1,
    max_size=4,
)


@settings(max_examples=60, deadline=None)
@given(segs=segment_lists, target=st.floats(40.0, 300.0))
def test_operators_match_dense_reference(segs, target):
    assume(sum(math.ceil(s[0] / target) for s in segs) >= 2)
    g = build_grid(_pipe([Segment(*s) for s in segs]), target)
    ops = assemble_operators(g)
    M_p, M_q, K_pq, K_qp, B_q, B_p = oracle.pipe_matrices(g.h, g.area, DEFAULT_C)
    np.testing.assert_allclose(ops.M_p.toarray(), M_p, rtol=1e-14)
    np.testing.assert_allclose(ops.M_q.toarray(), M_q, rtol=1e-14)
    np.testing.assert_allclose(ops.K_pq.toarray(), K_pq, rtol=1e-14)
    np.testing.assert_allclose(ops.K_qp.toarray(), K_qp, rtol=1e-14)
    np.testing.assert_allclose(ops.B_q, B_q, rtol=1e-14)
    np.testing.assert_allclose(ops.B_p, B_p, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(segs=segment_lists)
def test_friction_coefficients_match_dense_reference(segs):
    assume(sum(math.ceil(s[0] / 100.0) for s in segs) >= 2)
    g = build_grid(_pipe([Segment(*s) for s in segs]), 100.0)
    fe = friction_evaluator(g)
    kappa = oracle.pipe_kappa(g.h, g.area, g.diameter, g.friction, DEFAULT_C)
    np.testing.assert_allclose(fe.kappa, kappa, rtol=1e-14)
    assert np.all(fe.kappa > 0)


def test_mass_matrices_have_positive_row_sums():
    g = build_grid(_pipe([Segment(500.0, 0.5, 0.01), Segment(400.0, 0.7, 0.02)]), 90.0)
    ops = assemble_operators(g)
    assert np.all(np.asarray(ops.M_p.sum(axis=1)).ravel() > 0)
    assert np.all(np.asarray(ops.M_q.sum(axis=1)).ravel() > 0)


def test_friction_is_odd_in_flow_and_scales_inverse_pressure():
    g = build_grid(_pipe([Segment(1000.0, 0.5, 0.01)]), 100.0)
    fe = friction_evaluator(g)
    p = np.full(g.n - 1, 40e5)
    q = np.linspace(-30, 30, g.n - 1)
    g1 = fe.evaluate(40e5, p, q)
    g2 = fe.evaluate(40e5, p, -q)
    np.testing.assert_allclose(g1, -g2, rtol=1e-14)
    g_half = fe.evaluate(20e5, p / 2, q)
    np.testing.assert_allclose(g_half, 2 * g1, rtol=1e-14)


def test_friction_rejects_nonpositive_pressure():
    g = build_grid(_pipe([Segment(1000.0, 0.5, 0.01)]), 100.0)
    fe = friction_evaluator(g)
    p = np.full(g.n - 1, 40e5)
    p[0] = -1.0
    with pytest.raises(SingularStateError, match="cell 1"):
        fe.evaluate(40e5, p, np.ones(g.n - 1))


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    qscale=st.floats(0.01, 100.0),
)
def test_friction_jacobian_matches_finite_differences(seed, qscale):
    rng = np.random.default_rng(seed)
    g = build_grid(_pipe([Segment(1500.0, 0.5, 0.01), Segment(800.0, 0.4, 0.02)]), 250.0)
    m = g.n - 1
    fe = friction_evaluator(g)
    p_in = float(rng.uniform(20e5, 60e5))
    p = rng.uniform(20e5, 60e5, m)
    q = qscale * rng.standard_normal(m)

    dg_dp, dg_dq, dg_dpin = fe.jacobian(p_in, p, q)
    base = fe.evaluate(p_in, p, q)
    scale = max(1.0, float(np.abs(base).max()))

    hq = 1e-6 * max(1.0, np.abs(q).max())
    for i in range(m):
        dq = np.zeros(m)
        dq[i] = hq
        fd = (fe.evaluate(p_in, p, q + dq) - fe.evaluate(p_in, p, q - dq)) / (2 * hq)
        expect = np.zeros(m)
        expect[i] = dg_dq[i]
        np.testing.assert_allclose(fd / scale, expect / scale, atol=2e-6)

    hp = 1e-4 * p_in
    fd = (fe.evaluate(p_in + hp, p, q) - fe.evaluate(p_in - hp, p, q)) / (2 * hp)
    np.testing.assert_allclose(fd / scale, dg_dpin / scale, atol=2e-6)

    D = dg_dp.toarray()
    for j in range(m):
        dp = np.zeros(m)
        dp[j] = hp
        fd = (fe.evaluate(p_in, p + dp, q) - fe.evaluate(p_in, p - dp, q)) / (2 * hp)
        np.testing.assert_allclose(fd / scale, D[:, j] / scale, atol=2e-6)
