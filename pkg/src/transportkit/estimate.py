"""Gronwall-type bounds and the transport-gap estimate over explicit homotopies."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad, simpson, solve_ivp
from scipy.interpolate import RectBivariateSpline

from .bundle import ConnectionChart, FiberMetric, bound_G, bound_R, transport_curves
from .ode import DEFAULT_TOL
from .paths import PathSpec

N_T = 129
N_S = 65
MIN_PANELS = 16  # per smooth piece, so short arcs are still resolved
QUAD_TOL = 1e-10
ENDPOINT_TOL = 1e-12
CSV_COLUMNS = ("scenario", "lhs", "rhs", "R", "G", "L", "area", "margin")


class QuadratureError(RuntimeError):
    pass


def _quad(fn, a, b) -> float:
    value, err = quad(fn, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500)
    if not np.isfinite(value) or err > 1e3 * QUAD_TOL * max(1.0, abs(value)):
        raise QuadratureError(f"quadrature did not converge on [{a}, {b}] (error {err:.3g})")
    return value


def gronwall_bound(u0: float, f, g, a: float, t: float) -> float:
    """``u0 exp(int_a^t f) + int_a^t g(s) exp(int_s^t f) ds``.

    This is the solution of ``u' = f u + g`` with ``u(a) = u0``, hence the
    sharp upper bound for any ``u`` with ``u' <= f u + g``.
    """
    if t < a:
        raise ValueError("need t >= a")
    if t == a:
        return float(u0)
    head = u0 * np.exp(_quad(f, a, t))
    if g is None:
        return float(head)
    tail = _quad(lambda s: g(s) * np.exp(_quad(f, s, t)), a, t)
    return float(head + tail)


def gronwall_ode(u0: float, f, g, a: float, t: float) -> float:
    """Numerical solution of the equality case ``u' = f u + g`` (independent route)."""
    if t == a:
        return float(u0)
    sol = solve_ivp(lambda s, u: f(s) * u + (g(s) if g else 0.0), (a, t), [u0],
                    method="DOP853", rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise QuadratureError(sol.message)
    return float(sol.y[0, -1])


class HomotopyGrid:
    """A homotopy ``gamma(t, s)`` sampled on an ``n_t x n_s`` tensor grid.

    ``t`` runs along each curve and ``s`` across the family; ``gamma(., 0)``
    and ``gamma(., 1)`` are the two curves being compared and every curve
    starts at ``gamma(0, s) = p`` and ends at ``gamma(1, s) = q``.
    """

    def __init__(self, fn, dt_fn=None, ds_fn=None, n_t: int = N_T, n_s: int = N_S,
                 label: str = "custom", breaks=()):
        if n_t < 3 or n_s < 3 or n_t % 2 == 0 or n_s % 2 == 0:
            raise ValueError("Simpson grids need an odd number (>= 3) of nodes per axis")
        self.fn = fn
        self.label = label
        self.breaks: tuple[float, ...] = tuple(sorted(float(b) for b in breaks if 0 < b < 1))
        self.t, self._panels = _piecewise_nodes(self.breaks, n_t)
        self.s = np.linspace(0.0, 1.0, n_s)
        T, S = np.meshgrid(self.t, self.s, indexing="ij")
        self.points = np.asarray(fn(T, S), float)
        if dt_fn is not None and ds_fn is not None:
            self.d_t = np.asarray(dt_fn(T, S), float)
            self.d_s = np.asarray(ds_fn(T, S), float)
            self._interpolated = False
        else:
            splines = [RectBivariateSpline(self.t, self.s, self.points[..., k]) for k in range(2)]
            self.d_t = np.stack([sp(self.t, self.s, dx=1) for sp in splines], -1)
            self.d_s = np.stack([sp(self.t, self.s, dy=1) for sp in splines], -1)
            self._interpolated = True
        self._dt_fn = dt_fn
        self._check()

    def _check(self):
        pts = self.points
        for row, name in ((pts[0], "start"), (pts[-1], "end")):
            spread = float(np.max(np.linalg.norm(row - row[0], axis=-1)))
            if spread > ENDPOINT_TOL * max(1.0, float(np.abs(row).max())):
                raise ValueError(f"homotopy {name} point moves with s (spread {spread:.3g})")

    @classmethod
    def linear(cls, path0: PathSpec, path1: PathSpec, n_t: int = N_T, n_s: int = N_S) -> "HomotopyGrid":
        """``(1 - s) path0(t) + s path1(t)``: straight-line interpolation between two curves."""

        def fn(t, s):
            s = np.asarray(s, float)[..., None]
            return (1 - s) * path0.point(t) + s * path1.point(t)

        def dt(t, s):
            s = np.asarray(s, float)[..., None]
            return (1 - s) * path0.velocity(t) + s * path1.velocity(t)

        def ds(t, s):
            return path1.point(t) - path0.point(t)

        breaks = set(path0._breaks[1:-1]) | set(path1._breaks[1:-1])
        grid = cls(fn, dt, ds, n_t, n_s, label="linear", breaks=breaks)
        grid.paths = (path0, path1)
        return grid

    @classmethod
    def constant(cls, path: PathSpec, n_t: int = N_T, n_s: int = N_S) -> "HomotopyGrid":
        return cls.linear(path, path, n_t, n_s)

    @property
    def start(self) -> np.ndarray:
        return self.points[0, 0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1, 0]

    def curve(self, s: float) -> np.ndarray:
        return np.asarray(self.fn(self.t, np.full_like(self.t, s)), float)

    def row_functions(self, s_values):
        """Point and velocity callables for transporting along the curves ``gamma(., s)``."""
        s_values = np.asarray(s_values, float)

        def point(t):
            return np.asarray(self.fn(np.full_like(s_values, t), s_values), float)

        if self._dt_fn is not None:
            def velocity(t):
                return np.asarray(self._dt_fn(np.full_like(s_values, t), s_values), float)
        else:
            splines = [RectBivariateSpline(self.t, self.s, self.points[..., k]) for k in range(2)]

            def velocity(t):
                tt = np.full_like(s_values, t)
                return np.stack([sp.ev(tt, s_values, dx=1) for sp in splines], -1)

        return point, velocity

    def sample(self) -> np.ndarray:
        return self.points.reshape(-1, 2)

    def integrate_t(self, values: np.ndarray) -> np.ndarray:
        """Simpson integral over ``t`` (axis 0), panel by panel between kinks."""
        return sum(simpson(values[a:b + 1], x=self.t[a:b + 1], axis=0) for a, b in self._panels)


def _piecewise_nodes(breaks, n_t: int):
    """Nodes on ``[0, 1]``: every break is a node, each piece gets an even panel count (about ``n_t`` in total)."""
    edges = np.r_[0.0, breaks, 1.0]
    widths = np.diff(edges)
    panels = np.maximum(MIN_PANELS, 2 * np.round(widths * (n_t - 1) / 2)).astype(int)
    nodes, spans, start = [0.0], [], 0
    for lo, hi, k in zip(edges[:-1], edges[1:], panels):
        nodes.extend(np.linspace(lo, hi, k + 1)[1:])
        spans.append((start, start + k))
        start += k
    nodes = np.array(nodes)
    nodes[-1] = 1.0
    return nodes, spans


def homotopy_area(H: HomotopyGrid) -> float:
    """``int int |det(d_t gamma, d_s gamma)| dt ds`` by tensor Simpson."""
    det = np.abs(H.d_t[..., 0] * H.d_s[..., 1] - H.d_t[..., 1] * H.d_s[..., 0])
    return float(H.integrate_t(simpson(det, x=H.s, axis=1)))


def curve_lengths(H: HomotopyGrid) -> np.ndarray:
    return H.integrate_t(np.linalg.norm(H.d_t, axis=-1))


def max_curve_length(H: HomotopyGrid) -> float:
    return float(np.max(curve_lengths(H)))


def _g_norm(g: FiberMetric, points, vectors) -> np.ndarray:
    return np.asarray(g.norm(points, vectors), float)


@dataclass
class GapRecord:
    lhs: float
    rhs: float
    R: float
    G: float
    L: float
    area: float
    lhs_error: float = 0.0  # integrator error estimate carried by lhs

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs - self.lhs_error <= self.rhs * (1 + 1e-6)

    def as_row(self, scenario: str) -> dict:
        row = asdict(self)
        del row["lhs_error"]
        return {"scenario": scenario, **row, "margin": self.margin}


def _transport_rows(conn: ConnectionChart, H: HomotopyGrid, s_values, xi0, tol: float, t_eval=None):
    point, velocity = H.row_functions(s_values)
    X0 = np.broadcast_to(np.asarray(xi0, float)[:, None], (len(s_values), conn.rank, 1)).copy()
    return transport_curves(conn, point, velocity, X0, tol=tol, t_eval=t_eval, breaks=H.breaks)


def transport_gap(conn: ConnectionChart, g: FiberMetric, H: HomotopyGrid, xi0,
                  tol: float = DEFAULT_TOL) -> GapRecord:
    """Compare transports along the two boundary curves of ``H`` with the area estimate.

    ``lhs = |tau_0 xi0 - tau_1 xi0|_g`` at the common end point and
    ``rhs = |xi0|_g R exp(G L) area``.
    """
    xi0 = np.asarray(xi0, float)
    sol = _transport_rows(conn, H, [0.0, 1.0], xi0, tol)
    ends = sol.y[:, :, 0]
    lhs = float(_g_norm(g, H.end, ends[0] - ends[1]))
    # est_error is relative to each member's size; convert to an absolute bar
    lhs_error = sol.est_error * float(np.sum(_g_norm(g, H.end, ends)))
    K = H.sample()
    R = bound_R(conn, g, K)
    G = bound_G(conn, g, K)
    L = max_curve_length(H)
    area = homotopy_area(H)
    rhs = float(_g_norm(g, H.start, xi0)) * R * np.exp(G * L) * area
    return GapRecord(lhs, float(rhs), R, G, L, area, lhs_error)


def norm_growth_check(conn: ConnectionChart, g: FiberMetric, H: HomotopyGrid, xi0,
                      tol: float = DEFAULT_TOL, G: float | None = None) -> float:
    """Worst ``|X(t, s)|_g / (|xi0|_g exp(G L / 2))`` over the grid (0 for ``xi0 = 0``)."""
    xi0 = np.asarray(xi0, float)
    base = float(_g_norm(g, H.start, xi0))
    if base == 0.0:
        return 0.0
    if G is None:
        G = bound_G(conn, g, H.sample())
    L = max_curve_length(H)
    sol = _transport_rows(conn, H, H.s, xi0, tol, t_eval=H.t)
    X = np.swapaxes(sol.ys[..., 0], 0, 1)  # (n_s, n_t, r)
    pts = np.swapaxes(H.points, 0, 1)
    norms = _g_norm(g, pts, X)
    return float(np.max(norms) / (base * np.exp(G * L / 2)))


def gap_csv(rows) -> str:
    """CSV text with one estimate row per scenario."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def unit_square_sweep(n_t: int = N_T, n_s: int = N_S) -> HomotopyGrid:
    """Linear homotopy from the lower-right to the upper-left boundary path of ``[0,1]^2``."""
    right = PathSpec.polyline([(0, 0), (1, 0), (1, 1)])
    left = PathSpec.polyline([(0, 0), (0, 1), (1, 1)])
    return HomotopyGrid.linear(right, left, n_t, n_s)
