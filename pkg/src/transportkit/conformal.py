"""Branch of ``sqrt((z - r)(z - s))`` cut along ``[r, s]``, and the field ``1/z``.

Both illustrate conformal vector fields on a punctured or slit plane that
admit no extension: the branch is bounded but jumps by ``2 w`` across the
slit, and ``1/z`` blows up at the puncture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CR_STEP = 1e-5
CUT_CLEARANCE = 0.05


def _polar_sqrt(re, im):
    """Principal square root via modulus and argument, ``arg`` in ``(-pi, pi]``."""
    mod = np.sqrt(np.hypot(re, im))
    half = 0.5 * np.arctan2(im, re)
    return mod * np.cos(half), mod * np.sin(half)


def branch(z, r: complex, s: complex) -> np.ndarray:
    """``w1 = (s - r) sqrt(u) sqrt(u - 1)`` with ``u = (z - r)/(s - r)``.

    The two principal roots jump together on ``u < 0`` and cancel, so ``w1``
    is holomorphic off the segment ``[r, s]`` and ``w1^2 = (z - r)(z - s)``.
    """
    z = np.asarray(z, complex)
    u = (z - r) / (s - r)
    a_re, a_im = _polar_sqrt(u.real, u.imag)
    b_re, b_im = _polar_sqrt(u.real - 1.0, u.imag)
    prod = (a_re * b_re - a_im * b_im) + 1j * (a_re * b_im + a_im * b_re)
    return (s - r) * prod


def distance_to_cut(z, r: complex, s: complex) -> np.ndarray:
    z = np.asarray(z, complex)
    d = s - r
    t = np.clip(((z - r) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return np.abs(z - (r + t * d))


@dataclass
class ConformalReport:
    max_abs: float
    sup_bound: float
    bounded: bool
    jump_max_error: float
    jumps: list[dict]
    cr_residual: float
    skipped_on_cut: int
    grid_points: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _as_complex(p) -> complex:
    if isinstance(p, (complex, int, float)):
        return complex(p)
    p = np.asarray(p, float).reshape(2)
    return complex(p[0], p[1])


def conformal_demo(r, s, cut, grid, jump_points=(0.25, 0.5, 0.75), offset: float = 1e-3) -> ConformalReport:
    """Evaluate the branch on ``grid`` (``(n, 2)`` points) and report its three properties.

    ``cut`` must be the segment joining ``r`` and ``s``.  Jumps are measured at
    pairs mirrored across the cut at the given fractions along it.
    """
    r, s = _as_complex(r), _as_complex(s)
    if r == s:
        raise ValueError("r and s must differ")
    ends = {_as_complex(c) for c in np.asarray(cut, float).reshape(2, 2)}
    if ends != {r, s}:
        raise ValueError("the cut must join r and s")
    pts = np.asarray(grid, float).reshape(-1, 2)
    z = pts[:, 0] + 1j * pts[:, 1]
    dist = distance_to_cut(z, r, s)
    on_cut = dist <= 1e-12
    z = z[~on_cut]
    w = branch(z, r, s)
    max_abs = float(np.max(np.abs(w)))
    sup = float(np.max(np.sqrt(np.abs(z - r)) * np.sqrt(np.abs(z - s))))

    normal = 1j * (s - r) / abs(s - r)
    jumps, worst = [], 0.0
    for f in jump_points:
        mid = r + f * (s - r)
        above, below = branch(mid + offset * normal, r, s), branch(mid - offset * normal, r, s)
        jump = abs(above - below)
        expected = 2 * abs(branch(mid + offset * normal, r, s))
        worst = max(worst, abs(jump - expected))
        jumps.append({"fraction": f, "jump": float(jump), "twice_abs_w": float(expected)})

    far = z[distance_to_cut(z, r, s) > CUT_CLEARANCE]
    h = CR_STEP
    wx = (branch(far + h, r, s) - branch(far - h, r, s)) / (2 * h)
    wy = (branch(far + 1j * h, r, s) - branch(far - 1j * h, r, s)) / (2 * h)
    # f holomorphic <=> f_y = i f_x (both Cauchy-Riemann equations at once)
    cr = float(np.max(np.abs(wy - 1j * wx))) if len(far) else 0.0
    return ConformalReport(max_abs, sup, bool(max_abs <= sup * (1 + 1e-12)), float(worst), jumps, cr,
                           int(on_cut.sum()), int(len(pts)))


def inverse_field_max(r_min: float, r_max: float = 1.0, n_r: int = 50, n_theta: int = 64) -> float:
    """Largest ``|1/z|`` on a polar grid of the annulus ``r_min <= |z| <= r_max``."""
    radii = np.geomspace(r_min, r_max, n_r)
    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    z = (radii[:, None] * np.exp(1j * th[None, :])).ravel()
    return float(np.max(np.abs(1.0 / z)))
