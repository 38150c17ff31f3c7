import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transportkit import ConnectionChart, FiberMetric, PathSpec
from transportkit.estimate import (
    CSV_COLUMNS,
    HomotopyGrid,
    curve_lengths,
    gap_csv,
    gronwall_bound,
    gronwall_ode,
    homotopy_area,
    max_curve_length,
    norm_growth_check,
    transport_gap,
    unit_square_sweep,
)
from transportkit.regions import segment_tube_decomposition, shoelace_area
from transportkit.scenarios import magnetic

from corpus import random_connection

ID2 = FiberMetric.identity(2)


def test_gronwall_examples():
    one = lambda s: 1.0  # noqa: E731
    zero = lambda s: 0.0  # noqa: E731
    assert gronwall_bound(1, one, None, 0, 1) == pytest.approx(math.e, rel=1e-12)
    assert gronwall_bound(0, zero, one, 0, 2) == pytest.approx(2.0, rel=1e-12)
    assert gronwall_bound(1, lambda s: s, None, 0, 1) == pytest.approx(math.exp(0.5), rel=1e-12)
    assert gronwall_bound(3.0, one, one, 1.0, 1.0) == 3.0
    with pytest.raises(ValueError):
        gronwall_bound(1, one, None, 1, 0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 3), st.floats(0.1, 2))
def test_gronwall_matches_equality_ode(a, b, u0, t):
    f = lambda s: a * np.cos(s) + b * s  # noqa: E731
    g = lambda s: 1 + s ** 2  # noqa: E731
    assert gronwall_bound(u0, f, g, 0, t) == pytest.approx(gronwall_ode(u0, f, g, 0, t), rel=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 3), st.floats(0.1, 2))
def test_gronwall_without_source(c, u0, t):
    f = lambda s: c * s ** 2  # noqa: E731
    assert gronwall_bound(u0, f, None, 0, t) == pytest.approx(u0 * math.exp(c * t ** 3 / 3), rel=1e-9)


def test_homotopy_grid_needs_odd_nodes():
    with pytest.raises(ValueError):
        HomotopyGrid(lambda t, s: np.stack([t, s], -1), n_t=4)


def test_homotopy_must_fix_endpoints():
    with pytest.raises(ValueError):
        HomotopyGrid(lambda t, s: np.stack([t, s], -1))


def test_area_examples():
    seg = PathSpec.segment((0, 0), (1, 0))
    const = HomotopyGrid.constant(seg)
    assert homotopy_area(const) == 0.0
    assert max_curve_length(const) == pytest.approx(1.0)
    point = HomotopyGrid(lambda t, s: np.zeros(np.shape(t) + (2,)))
    assert max_curve_length(point) == 0.0
    sweep = HomotopyGrid(lambda t, s: np.stack([t, s * t * (1 - t) * 4], -1))
    assert homotopy_area(sweep) == pytest.approx(2 / 3, rel=1e-8)
    assert homotopy_area(unit_square_sweep()) == pytest.approx(1.0, rel=1e-12)
    assert max_curve_length(unit_square_sweep()) == pytest.approx(2.0, rel=1e-12)


def test_interpolated_partials_match_analytic():
    a = PathSpec.arc((0, 0), 1.0, np.pi, 0.0)
    b = PathSpec.segment((-1, 0), (1, 0))
    H = HomotopyGrid.linear(a, b)
    G = HomotopyGrid(H.fn)
    assert homotopy_area(G) == pytest.approx(homotopy_area(H), rel=1e-6)
    assert homotopy_area(H) == pytest.approx(np.pi / 2, rel=1e-6)


def test_tube_homotopy():
    dec = segment_tube_decomposition([(0, 0), (1, 0)], (0.5, 0.5), (0.5, -0.5), 0.1)
    H = dec.items[0].homotopy
    area = homotopy_area(H)
    assert area <= 2 * 0.1 + np.pi * 0.01
    assert area == pytest.approx(0.1 + np.pi * 0.01 / 2, rel=1e-5)
    assert max_curve_length(H) <= 1 + np.pi * 0.1 + 1e-9
    assert np.all(curve_lengths(H) >= 0.2 - 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.floats(0.2, 3), st.floats(-0.9, 0.9))
def test_area_equals_shoelace(m, height, shift):
    M = np.array(m).reshape(2, 2)
    if abs(np.linalg.det(M)) < 0.05:
        M = M + np.eye(2)
    tri = np.array([(0, 0), (shift, height), (1, 0)])
    pts = tri @ M.T
    H = HomotopyGrid.linear(PathSpec.polyline(pts), PathSpec.segment(pts[0], pts[2]))
    assert homotopy_area(H) == pytest.approx(abs(shoelace_area(pts)), rel=1e-4)


def test_flat_gap_is_zero():
    rec = transport_gap(ConnectionChart.flat(2), ID2, unit_square_sweep(), [1.0, 0.0])
    assert rec.lhs == 0.0 and rec.rhs == 0.0 and rec.holds


def test_magnetic_sweep():
    rec = transport_gap(magnetic(1.0), ID2, unit_square_sweep(), [1.0, 0.0], 1e-11)
    assert rec.lhs == pytest.approx(2 * math.sin(0.5), rel=1e-8)  # |(I - exp(-J)) e1|
    assert rec.R == pytest.approx(1.05)
    assert rec.G < 1e-10
    assert rec.area == pytest.approx(1.0)
    assert rec.rhs == pytest.approx(1.05, rel=1e-8)
    assert rec.holds


def test_rank_one_closed_form():
    conn = ConnectionChart([["1"]])
    rec = transport_gap(conn, FiberMetric.identity(1), unit_square_sweep(), [1.0])
    assert rec.lhs <= 1e-12
    assert rec.R == 0.0
    assert rec.holds


def test_norm_growth():
    H = HomotopyGrid.constant(PathSpec.segment((0, 0), (1, 0)))
    g1 = FiberMetric.identity(1)
    grow = ConnectionChart([["-1"]])
    assert norm_growth_check(grow, g1, H, [1.0], 1e-11, G=2.0) == pytest.approx(1.0, rel=1e-9)
    assert norm_growth_check(grow, g1, H, [1.0], 1e-11) <= 1.0
    assert norm_growth_check(grow, g1, H, [0.0]) == 0.0
    assert norm_growth_check(magnetic(), ID2, unit_square_sweep(), [0.6, 0.8], 1e-11) == pytest.approx(1.0, abs=1e-8)


def test_csv():
    rec = transport_gap(magnetic(1.0), ID2, unit_square_sweep(), [1.0, 0.0])
    text = gap_csv([rec.as_row("m")])
    header, row = text.strip().split("\n")
    assert tuple(header.split(",")) == CSV_COLUMNS
    vals = row.split(",")
    assert vals[0] == "m"
    assert float(vals[-1]) == pytest.approx(rec.rhs - rec.lhs, rel=1e-10)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.3, 1.5))
def test_estimate_holds_on_random_connections(seed, bump):
    conn = random_connection(seed)
    top = PathSpec.polyline([(0, 0), (0.5, bump), (1, 0)])
    bottom = PathSpec.arc((0.5, 0), 0.5, np.pi, 2 * np.pi)
    rec = transport_gap(conn, ID2, HomotopyGrid.linear(top, bottom), [1.0, -0.5])
    assert rec.holds
