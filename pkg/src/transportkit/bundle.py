"""Vector bundles with a linear connection over a planar chart.

Sign convention, used everywhere in the package: a connection is
``nabla_v s = ds(v) + A(v) s`` with ``A = A_x dx + A_y dy``.  Parallel
transport along ``gamma`` therefore solves ``X' = -A(gamma') X`` and the
curvature is ``R(dx, dy) = d_x A_y - d_y A_x + [A_x, A_y]``.  With this
convention the holonomy of a small counterclockwise loop of area ``a`` is
``I - a R + ...``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exprfield import ScalarField, as_field
from .jets import Jet
from .ode import DEFAULT_TOL, TransportError, integrate
from .paths import PathSpec, Segment

SAFETY = 1.05
DEFAULT_GRID = 64
N_DIRECTIONS = 16


class ChartError(TransportError):
    """A path or sample point left the chart of the connection."""


def _field_matrix(entries, rank: int | None = None) -> tuple[tuple[ScalarField, ...], ...]:
    rows = tuple(tuple(as_field(e) for e in row) for row in entries)
    n = len(rows)
    if n == 0 or any(len(row) != n for row in rows):
        raise ValueError("coefficient matrix must be square and non-empty")
    if rank is not None and n != rank:
        raise ValueError(f"expected a {rank}x{rank} matrix")
    return rows


def _eval_matrix(fields, x, y, env=None) -> np.ndarray:
    shape = np.broadcast(x, y).shape
    r = len(fields)
    out = np.empty(shape + (r, r))
    for i, row in enumerate(fields):
        for j, f in enumerate(row):
            out[..., i, j] = f(x, y, env)
    return out


def jet_partial(matrix, i: int, j: int) -> np.ndarray:
    """Stack the ``(i, j)`` partial of every jet in a nested matrix of jets."""
    r = len(matrix)
    first = np.asarray(matrix[0][0].partial(i, j))
    out = np.empty(first.shape + (r, r))
    for a in range(r):
        for b in range(r):
            out[..., a, b] = matrix[a][b].partial(i, j)
    return out


class ConnectionChart:
    """Rank-``r`` connection ``d + A`` on a rectangle (or all of the plane).

    ``chart`` is ``(x0, x1, y0, y1)`` or ``None`` for the whole plane.  With
    ``periodic_theta`` the base is the circle: ``x`` is the angle, ``A_y`` is
    ignored and crossing the cut at ``theta_cut + 2 pi k`` applies ``gluing``.
    """

    def __init__(self, A_x, A_y=None, chart=None, periodic_theta: bool = False,
                 gluing=None, theta_cut: float = 0.0, env=None):
        self.A_x = _field_matrix(A_x)
        self.rank = len(self.A_x)
        if A_y is None:
            A_y = [["0"] * self.rank for _ in range(self.rank)]
        self.A_y = _field_matrix(A_y, self.rank)
        if chart is not None:
            chart = tuple(float(c) for c in chart)
            if len(chart) != 4 or not (chart[0] < chart[1] and chart[2] < chart[3]):
                raise ValueError("chart must be (x0, x1, y0, y1) with x0 < x1, y0 < y1")
        self.chart = chart
        self.periodic_theta = periodic_theta
        self.gluing = np.eye(self.rank) if gluing is None else np.asarray(gluing, float)
        if self.gluing.shape != (self.rank, self.rank):
            raise ValueError("gluing must be an r x r matrix")
        self.theta_cut = float(theta_cut)
        self.env = dict(env or {})

    @classmethod
    def flat(cls, rank: int, chart=None) -> "ConnectionChart":
        zero = [["0"] * rank for _ in range(rank)]
        return cls(zero, zero, chart=chart)

    @classmethod
    def circle(cls, A_theta, gluing=None, theta_cut: float = 0.0) -> "ConnectionChart":
        return cls(A_theta, None, periodic_theta=True, gluing=gluing, theta_cut=theta_cut)

    def negated(self) -> "ConnectionChart":
        """The connection ``d - A`` (flips the sign convention)."""
        return _NegatedConnection(self)

    def contains(self, points) -> np.ndarray:
        points = np.asarray(points, float)
        if self.chart is None or self.periodic_theta:
            return np.isfinite(points).all(axis=-1)
        x0, x1, y0, y1 = self.chart
        x, y = points[..., 0], points[..., 1]
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)

    def check_points(self, points):
        if not np.all(self.contains(points)):
            raise ChartError("point outside the chart of the connection")

    def coefficients(self, points) -> tuple[np.ndarray, np.ndarray]:
        """``(A_x, A_y)`` at ``points``; shapes ``points.shape[:-1] + (r, r)``."""
        points = np.asarray(points, float)
        x, y = points[..., 0], points[..., 1]
        if self.periodic_theta:
            y = np.zeros_like(y)
        ax = _eval_matrix(self.A_x, x, y, self.env)
        ay = np.zeros_like(ax) if self.periodic_theta else _eval_matrix(self.A_y, x, y, self.env)
        return ax, ay

    def jets(self, p, order: int):
        """Jets of every coefficient entry: ``(A_x, A_y)`` as nested lists."""
        jx = [[f.jet(p, order, self.env) for f in row] for row in self.A_x]
        jy = [[f.jet(p, order, self.env) for f in row] for row in self.A_y]
        if self.periodic_theta:
            jy = [[Jet.constant(np.zeros_like(np.asarray(jx[0][0].value)), order)
                   for _ in row] for row in self.A_y]
        return jx, jy

    def __repr__(self) -> str:
        return f"{type(self).__name__}(rank={self.rank}, chart={self.chart})"


class _NegatedConnection(ConnectionChart):
    def __init__(self, base: ConnectionChart):
        self.base = base
        self.rank = base.rank
        self.chart = base.chart
        self.periodic_theta = base.periodic_theta
        self.gluing = base.gluing
        self.theta_cut = base.theta_cut
        self.env = base.env

    def coefficients(self, points):
        ax, ay = self.base.coefficients(points)
        return -ax, -ay

    def jets(self, p, order):
        jx, jy = self.base.jets(p, order)
        return [[-j for j in row] for row in jx], [[-j for j in row] for row in jy]

    def negated(self):
        return self.base


class FiberMetric:
    """Fiber metric ``g``: an ``r x r`` symmetric matrix of fields."""

    def __init__(self, g, env=None):
        self.g = _field_matrix(g)
        self.rank = len(self.g)
        self.env = dict(env or {})

    @classmethod
    def identity(cls, rank: int) -> "FiberMetric":
        return cls([["1" if i == j else "0" for j in range(rank)] for i in range(rank)])

    def matrix(self, points) -> np.ndarray:
        points = np.asarray(points, float)
        return _eval_matrix(self.g, points[..., 0], points[..., 1], self.env)

    def jets(self, p, order: int):
        return [[f.jet(p, order, self.env) for f in row] for row in self.g]

    def cholesky(self, points) -> np.ndarray:
        g = self.matrix(points)
        if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-12):
            raise ValueError("fiber metric is not symmetric")
        try:
            return np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise ValueError("fiber metric is not positive definite") from None

    def norm(self, points, vectors) -> np.ndarray:
        g = self.matrix(points)
        v = np.asarray(vectors, float)
        return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, g, v), 0.0))


@dataclass
class TransportResult:
    end_value: np.ndarray
    steps: int
    est_error: float


# ---------------------------------------------------------------------------
# curvature


def curvature_field(conn: ConnectionChart, points) -> np.ndarray:
    """``R(d_x, d_y)`` at each point, shape ``points.shape[:-1] + (r, r)``."""
    points = np.asarray(points, float)
    conn.check_points(points)
    if conn.periodic_theta:
        return np.zeros(points.shape[:-1] + (conn.rank, conn.rank))
    jx, jy = conn.jets(points, 1)
    ax, ay = jet_partial(jx, 0, 0), jet_partial(jy, 0, 0)
    return jet_partial(jy, 1, 0) - jet_partial(jx, 0, 1) + ax @ ay - ay @ ax


def curvature(conn: ConnectionChart, p) -> np.ndarray:
    return curvature_field(conn, np.asarray(p, float).reshape(2))


# ---------------------------------------------------------------------------
# transport


def transport_curves(conn: ConnectionChart, point_fn, velocity_fn, X0, tol: float = DEFAULT_TOL,
                     t_eval=None, span: float = 1.0, breaks=()):
    """Transport a batch of fiber frames along a batch of curves on ``[0, 1]``.

    ``point_fn(t)`` / ``velocity_fn(t)`` return ``(B, 2)`` arrays; ``X0`` has
    shape ``(B, r, m)``.  ``breaks`` lists parameters where the curves have
    corners.  Returns an :class:`~transportkit.ode.Solution`.
    """
    X0 = np.asarray(X0, float)

    def rhs(t, X):
        pts = point_fn(t)
        if not np.all(conn.contains(pts)):
            raise ChartError(f"path leaves the chart at t={t:.6g}")
        ax, ay = conn.coefficients(pts)
        vel = velocity_fn(t)
        M = ax * vel[:, 0, None, None] + ay * vel[:, 1, None, None]
        return -np.einsum("bij,bjm->bim", M, X)

    return integrate(rhs, X0, 0.0, 1.0, tol=tol, t_eval=t_eval, span=span, breaks=breaks)


def _circle_splits(piece: Segment, cut: float):
    """Split a theta-interval at the cut; yields (sub-segment, crossing sign)."""
    a, b = float(piece.a[0]), float(piece.b[0])
    if a == b:
        return [(piece, 0)]
    two_pi = 2 * np.pi
    if b > a:
        ks = np.arange(np.floor((a - cut) / two_pi) + 1, np.floor((b - cut) / two_pi) + 1)
        marks = [cut + two_pi * k for k in ks]
        sign = 1
    else:
        ks = np.arange(np.ceil((a - cut) / two_pi) - 1, np.ceil((b - cut) / two_pi) - 1, -1)
        marks = [cut + two_pi * k for k in ks]
        sign = -1
    out, start = [], a
    for m in marks:
        out.append((Segment((start, 0.0), (m, 0.0)), sign))
        start = m
    if start != b or not out:
        out.append((Segment((start, 0.0), (b, 0.0)), 0))
    return out


def _transport_matrix(conn: ConnectionChart, path: PathSpec, X0: np.ndarray, tol: float):
    """Transport an ``(r, m)`` block of fiber vectors along ``path``."""
    X = np.asarray(X0, float)[None]
    pieces = []
    for piece in path.pieces:
        if conn.periodic_theta:
            if not isinstance(piece, Segment) or piece.a[1] != 0 or piece.b[1] != 0:
                raise ValueError("paths on the circle chart are theta intervals")
            pieces.extend(_circle_splits(piece, conn.theta_cut))
        else:
            pieces.append((piece, 0))
    conn.check_points(np.vstack([path.start, path.end]))
    steps, est = 0, 0.0
    glue_inv = None
    for piece, crossing in pieces:
        if piece.length > 0:
            sol = transport_curves(
                conn,
                lambda t, pc=piece: pc.point(np.atleast_1d(t))[:1],
                lambda t, pc=piece: pc.velocity(np.atleast_1d(t))[:1],
                X, tol=tol, span=len(pieces),
            )
            X, steps, est = sol.y, steps + sol.steps, est + sol.est_error
        if crossing > 0:
            X = conn.gluing @ X
        elif crossing < 0:
            if glue_inv is None:
                glue_inv = np.linalg.inv(conn.gluing)
            X = glue_inv @ X
    return X[0], steps, est


def transport(conn: ConnectionChart, path: PathSpec, xi0, tol: float = DEFAULT_TOL) -> TransportResult:
    """Parallel transport of ``xi0`` (a fiber vector or an ``r x m`` block) along ``path``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    xi0 = np.asarray(xi0, float)
    vector = xi0.ndim == 1
    block = xi0[:, None] if vector else xi0
    if block.shape[0] != conn.rank:
        raise ValueError(f"fiber vector must have {conn.rank} components")
    X, steps, est = _transport_matrix(conn, path, block, tol)
    return TransportResult(X[:, 0] if vector else X, steps, est)


def loop_holonomy(conn: ConnectionChart, closed_path: PathSpec, tol: float = DEFAULT_TOL) -> np.ndarray:
    if conn.periodic_theta:
        closed = abs((closed_path.end[0] - closed_path.start[0]) / (2 * np.pi)
                     - round((closed_path.end[0] - closed_path.start[0]) / (2 * np.pi))) < 1e-12
    else:
        closed = closed_path.is_closed()
    if not closed:
        raise ValueError("holonomy needs a closed path")
    return transport(conn, closed_path, np.eye(conn.rank), tol).end_value


def square_loop(center, side: float) -> PathSpec:
    """Counterclockwise square of the given side, based at its center by a lasso."""
    c = np.asarray(center, float)
    h = side / 2
    corner = c + (-h, -h)
    square = PathSpec.polyline([corner, c + (h, -h), c + (h, h), c + (-h, h), corner])
    tail = PathSpec.segment(c, corner)
    return tail + square + tail.reversed()


# ---------------------------------------------------------------------------
# metric compatibility and sup-constants


def _defect_forms(conn: ConnectionChart, g: FiberMetric, points):
    """``(nabla_{d_x} g, nabla_{d_y} g)`` as matrices, plus ``g`` itself."""
    gj = g.jets(points, 1)
    gm = jet_partial(gj, 0, 0)
    ax, ay = conn.coefficients(points)
    bx = jet_partial(gj, 1, 0) - np.swapaxes(ax, -1, -2) @ gm - gm @ ax
    by = jet_partial(gj, 0, 1) - np.swapaxes(ay, -1, -2) @ gm - gm @ ay
    return bx, by, gm


def _g_operator_norm(form: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """sup |b(u, w)| over g-unit u, w for a bilinear form with matrix ``form``."""
    linv = np.linalg.inv(chol)
    return np.linalg.norm(linv @ form @ np.swapaxes(linv, -1, -2), ord=2, axis=(-2, -1))


def metric_defect(conn: ConnectionChart, g: FiberMetric, p, v) -> float:
    """Operator norm of ``(nabla_v g)`` at ``p`` over g-unit fiber vectors."""
    p = np.asarray(p, float).reshape(2)
    conn.check_points(p)
    v = np.asarray(v, float).reshape(2)
    bx, by, gm = _defect_forms(conn, g, p)
    return float(_g_operator_norm(v[0] * bx + v[1] * by, np.linalg.cholesky(gm)))


def rectangle_grid(bounds, n: int = DEFAULT_GRID) -> np.ndarray:
    x0, x1, y0, y1 = bounds
    xs, ys = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=-1)


def disk_grid(center, radius: float, n: int = DEFAULT_GRID) -> np.ndarray:
    c = np.asarray(center, float)
    pts = rectangle_grid((c[0] - radius, c[0] + radius, c[1] - radius, c[1] + radius), n)
    return pts[np.linalg.norm(pts - c, axis=1) <= radius * (1 + 1e-12)]


def _sample(K) -> np.ndarray:
    K = np.asarray(K, float).reshape(-1, 2)
    if len(K) == 0:
        raise ValueError("sample set is empty")
    return K


def bound_R(conn: ConnectionChart, g: FiberMetric, K) -> float:
    """Safety-inflated sup over ``K`` of the g-operator norm of ``R(d_x ^ d_y)``."""
    K = _sample(K)
    R = curvature_field(conn, K)
    chol = g.cholesky(K)
    # g(R eta, xi) = xi^T g R eta; in g-orthonormal coordinates this is L^T R L^-T
    form = chol @ np.swapaxes(chol, -1, -2) @ R
    return SAFETY * float(np.max(_g_operator_norm(form, chol)))


def bound_G(conn: ConnectionChart, g: FiberMetric, K, n_directions: int = N_DIRECTIONS) -> float:
    """Safety-inflated sup over ``K`` and unit directions of ``|nabla_v g|``."""
    K = _sample(K)
    conn.check_points(K)
    bx, by, gm = _defect_forms(conn, g, K)
    chol = np.linalg.cholesky(gm)
    best = 0.0
    for th in np.arange(n_directions) * (2 * np.pi / n_directions):
        norms = _g_operator_norm(np.cos(th) * bx + np.sin(th) * by, chol)
        best = max(best, float(np.max(norms)))
    return SAFETY * best
