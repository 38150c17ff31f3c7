import numpy as np
import pytest

from transportkit.bundle import rectangle_grid
from transportkit.conformal import branch, conformal_demo, distance_to_cut, inverse_field_max

GRID = rectangle_grid((-1, 2, -1, 1), 41)


def test_branch_squares_to_the_quadratic():
    z = (GRID[:, 0] + 1j * GRID[:, 1])[distance_to_cut(GRID[:, 0] + 1j * GRID[:, 1], 0, 1) > 1e-9]
    np.testing.assert_allclose(branch(z, 0, 1) ** 2, z * (z - 1), atol=1e-12)


def test_branch_is_continuous_across_the_real_axis_off_the_cut():
    for x in (-0.5, 1.5):
        above, below = branch(x + 1e-9j, 0, 1), branch(x - 1e-9j, 0, 1)
        assert abs(above - below) < 1e-6


def test_demo_unit_cut():
    rep = conformal_demo(0, 1, [(0, 0), (1, 0)], GRID)
    mid = next(j for j in rep.jumps if j["fraction"] == 0.5)
    assert mid["jump"] == pytest.approx(1.0, abs=1e-3)
    assert rep.jump_max_error <= 1e-3
    assert rep.bounded
    assert rep.cr_residual <= 1e-6
    assert rep.skipped_on_cut > 0
    assert rep.grid_points == len(GRID)


def test_demo_oblique_cut():
    r, s = complex(-0.5, -0.5), complex(0.5, 0.7)
    rep = conformal_demo((-0.5, -0.5), (0.5, 0.7), [(-0.5, -0.5), (0.5, 0.7)], rectangle_grid((-1, 1, -1, 1), 30))
    assert rep.jump_max_error <= 1e-3 and rep.bounded and rep.cr_residual <= 1e-6
    assert r != s


def test_demo_rejects_bad_cut():
    with pytest.raises(ValueError):
        conformal_demo(0, 1, [(0, 0), (2, 0)], GRID)
    with pytest.raises(ValueError):
        conformal_demo(0, 0, [(0, 0), (0, 0)], GRID)


def test_inverse_field_blows_up():
    assert inverse_field_max(0.01) == pytest.approx(100.0)
    assert inverse_field_max(0.001) == pytest.approx(1000.0)
