import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from transportkit import ConnectionChart, FiberMetric, PathSpec
from transportkit.bundle import (
    ChartError,
    bound_G,
    bound_R,
    curvature,
    loop_holonomy,
    metric_defect,
    rectangle_grid,
    square_loop,
    transport,
)
from transportkit.kostant import IsothermalMetric, KostantConnection, lemma_matrices
from transportkit.scenarios import magnetic

from corpus import random_connection

J = np.array([[0.0, -1.0], [1.0, 0.0]])
TOL = 1e-10
UNIT_SQUARE = PathSpec.polyline([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])


def test_flat_curvature_and_transport():
    conn = ConnectionChart.flat(3)
    np.testing.assert_array_equal(curvature(conn, (0.3, 0.2)), np.zeros((3, 3)))
    xi = np.array([1.0, -2.0, 0.5])
    res = transport(conn, PathSpec.polyline([(0, 0), (2, 1), (-1, 3)]), xi)
    np.testing.assert_array_equal(res.end_value, xi)


def test_curvature_of_linear_potential():
    conn = ConnectionChart([["0", "0"], ["0", "0"]], [["0", "-x"], ["x", "0"]])
    for p in [(0, 0), (1.5, -2), (-3, 0.25)]:
        np.testing.assert_allclose(curvature(conn, p), J)


def test_magnetic_curvature_is_J():
    np.testing.assert_allclose(curvature(magnetic(1.0), (0.4, -1.3)), J, atol=1e-15)


def test_circle_holonomy_and_zero_curvature():
    conn = ConnectionChart.circle([["1"]])
    np.testing.assert_array_equal(curvature(conn, (1.0, 0.0)), [[0.0]])
    H = loop_holonomy(conn, PathSpec.theta(0, 2 * np.pi), TOL)
    assert H[0, 0] == pytest.approx(np.exp(-2 * np.pi), rel=1e-9)
    assert H[0, 0] == pytest.approx(1.86744e-3, rel=1e-5)


def test_moebius_gluing():
    conn = ConnectionChart.circle([["0"]], gluing=[[-1.0]])
    H = loop_holonomy(conn, PathSpec.theta(0.5, 0.5 + 2 * np.pi), TOL)
    assert H[0, 0] == pytest.approx(-1.0)
    H2 = loop_holonomy(conn, PathSpec.theta(0.5, 0.5 + 4 * np.pi), TOL)
    assert H2[0, 0] == pytest.approx(1.0)


def test_magnetic_unit_square():
    # symmetric gauge: every edge contributes; the closed loop sees the enclosed flux
    H = loop_holonomy(magnetic(1.0), UNIT_SQUARE, TOL)
    np.testing.assert_allclose(H, expm(-J), atol=1e-9)
    res = transport(magnetic(1.0), UNIT_SQUARE, [1.0, 0.0], TOL)
    np.testing.assert_allclose(res.end_value, [np.cos(1), -np.sin(1)], atol=1e-9)
    assert res.est_error <= TOL


def test_landau_gauge_edge_by_edge():
    conn = ConnectionChart([["0", "0"], ["0", "0"]], [["0", "-x"], ["x", "0"]])
    res = transport(conn, UNIT_SQUARE, [1.0, 0.0], TOL)
    np.testing.assert_allclose(res.end_value, expm(-J) @ [1.0, 0.0], atol=1e-9)


def test_chart_violation():
    conn = ConnectionChart.flat(1, chart=(0, 1, 0, 1))
    with pytest.raises(ChartError):
        transport(conn, PathSpec.segment((0.5, 0.5), (2, 0.5)), [1.0])
    with pytest.raises(ValueError):
        ConnectionChart.flat(1, chart=(1, 0, 0, 1))


def test_holonomy_needs_closed_path():
    with pytest.raises(ValueError):
        loop_holonomy(magnetic(), PathSpec.segment((0, 0), (1, 0)))


def test_small_loop_recovers_curvature():
    conn = random_connection(4)
    c = (0.2, -0.1)
    R = curvature(conn, c)
    errs = [np.linalg.norm((np.eye(2) - loop_holonomy(conn, square_loop(c, h), 1e-12)) / h ** 2 - R)
            for h in (0.1, 0.05, 0.025)]
    assert min(np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])) >= 1.7


def test_convention_flip():
    # negating A flips the curvature's linear part but not the commutator
    conn = random_connection(7)
    neg = conn.negated()
    p = (0.3, 0.4)
    ax, ay = (a[0] for a in conn.coefficients(np.array([p])))
    comm = ax @ ay - ay @ ax
    np.testing.assert_allclose(curvature(neg, p), -(curvature(conn, p) - comm) + comm, atol=1e-12)
    path = PathSpec.polyline([(0, 0), (1, 0.5), (0.2, 1)])
    fwd = transport(conn, path, np.eye(2), TOL).end_value
    back = transport(neg, path, np.eye(2), TOL).end_value
    assert not np.allclose(fwd, back)


def test_metric_defect_examples():
    assert metric_defect(random_connection(1, skew=True), FiberMetric.identity(2), (0.2, 0.3), (1, 0)) < 1e-12
    conn = ConnectionChart([["1"]])
    assert metric_defect(conn, FiberMetric.identity(1), (0.0, 0.0), (1, 0)) == pytest.approx(2.0)
    K = rectangle_grid((-1, 1, -1, 1), 8)
    assert bound_G(conn, FiberMetric.identity(1), K) == pytest.approx(2.1)


def test_metric_defect_kostant_matches_finite_difference():
    conn = KostantConnection(IsothermalMetric("exp(x^2+y^2)"))
    g = FiberMetric.identity(3)
    p, v = np.array([0.3, -0.2]), np.array([0.6, 0.8])
    xi = np.array([0.5, -1.0, 0.7])
    h = 1e-4
    ends = [transport(conn, PathSpec.segment(p, p + s * h * v), xi, 1e-13).end_value for s in (1, -1)]
    # along a parallel X, d/dt |X|^2 = -(nabla_v g)(X, X)
    ddt = (ends[0] @ ends[0] - ends[1] @ ends[1]) / (2 * h)
    defect = metric_defect(conn, g, p, v)
    assert defect > 0
    assert abs(ddt) <= defect * (xi @ xi) * (1 + 1e-6)


def test_bounds():
    K = rectangle_grid((-1, 1, -1, 1), 16)
    g = FiberMetric.identity(2)
    assert bound_R(ConnectionChart.flat(2), g, K) == 0.0
    assert bound_R(magnetic(1.0), g, K) == pytest.approx(1.05)
    assert bound_G(magnetic(1.0), g, K) < 1e-10
    assert bound_G(random_connection(3, skew=True), g, K) <= 1e-9


def test_bound_R_kostant_matches_lemma_matrix():
    m = IsothermalMetric("exp(x^2+y^2)")
    K = rectangle_grid((-1, 1, -1, 1), 16)
    got = bound_R(KostantConnection(m), FiberMetric.identity(3), K)
    want = 1.05 * max(np.linalg.norm(lemma_matrices(m, p)["R_K"], 2) for p in K)
    assert got == pytest.approx(want, rel=1e-12)


def test_bounds_monotone_in_sample():
    conn = random_connection(11)
    g = FiberMetric([["2", "0.3"], ["0.3", "1 + x^2"]])
    small = rectangle_grid((-0.5, 0.5, -0.5, 0.5), 5)
    big = np.vstack([small, rectangle_grid((-1, 1, -1, 1), 9)])
    assert bound_R(conn, g, big) >= bound_R(conn, g, small)
    assert bound_G(conn, g, big) >= bound_G(conn, g, small)


points = st.tuples(st.floats(-1, 1), st.floats(-1, 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), points, points, points)
def test_concatenation_and_inversion(seed, a, b, c):
    conn = random_connection(seed)
    g1, g2 = PathSpec.segment(a, b), PathSpec.polyline([b, c, a])
    T1 = transport(conn, g1, np.eye(2), TOL).end_value
    T2 = transport(conn, g2, np.eye(2), TOL).end_value
    T12 = transport(conn, g1 + g2, np.eye(2), TOL).end_value
    scale = max(1.0, np.abs(T2 @ T1).max())
    np.testing.assert_allclose(T12, T2 @ T1, atol=2 * TOL * scale)
    Tr = transport(conn, g1.reversed(), np.eye(2), TOL).end_value
    np.testing.assert_allclose(Tr @ T1, np.eye(2), atol=2 * TOL * max(1.0, np.abs(Tr).max()))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), points, points)
def test_isometry_for_metric_connections(seed, a, b):
    conn = random_connection(seed, rank=3, skew=True)
    xi = np.random.default_rng(seed).normal(size=3)
    end = transport(conn, PathSpec.polyline([a, b, (0, 0)]), xi, TOL).end_value
    assert np.linalg.norm(end) == pytest.approx(np.linalg.norm(xi), rel=10 * TOL)
