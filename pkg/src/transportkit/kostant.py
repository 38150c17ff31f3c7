"""The Kostant connection of a conformally flat surface ``(R^2, lam (dx^2 + dy^2))``.

The bundle ``TM + so(TM)`` is trivialised by the frame ``xi1 = (d_x, 0)``,
``xi2 = (d_y, 0)``, ``xi3 = (0, J)`` with ``J d_x = d_y``.  Sections are
coefficient triples ``(c1, c2, c3)``; a Killing field ``X`` corresponds to
the parallel section ``(X, nabla X)`` whose third coefficient is the
``J``-component of ``nabla X``.

With ``l = log lam`` every connection coefficient is a derivative of ``l``::

    A_x = [[ l_x/2,  l_y/2,  0],      A_y = [[ l_y/2, -l_x/2, 1],
           [-l_y/2,  l_x/2, -1],             [ l_x/2,  l_y/2, 0],
           [ 0,      k lam,  0]]             [-k lam,  0,     0]]

where ``k lam = -(l_xx + l_yy)/2`` and ``k`` is the Gaussian curvature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .bundle import ConnectionChart, FiberMetric, jet_partial
from .exprfield import DomainError, ScalarField, as_field
from .extend import SectionOracle, agreement_defect, radial_extension
from .jets import Jet
from .ode import DEFAULT_TOL

# entries of the lemma matrices that the closed form does not provide
JET_ENTRIES = ((2, 0), (2, 1))
RANK_GAP = 1e-6
RANK_NULL = 1e-9
# below this the stencil error is rounding noise and has no convergence order
ORDER_FLOOR = 1e-8


class RankDeficiencyError(ValueError):
    """The derivative of the curvature does not have rank two here."""


class IsothermalMetric:
    """Conformal factor ``lam`` of ``lam (dx^2 + dy^2)``."""

    def __init__(self, lam, env=None):
        self.lam = as_field(lam)
        self.env = dict(env or {})

    def log_jet(self, p, order: int) -> Jet:
        lam = self.lam.jet(p, order, self.env)
        if np.any(lam.coeffs[0] <= 0):
            raise DomainError("conformal factor must be positive")
        return J.log(lam)

    def kappa_jet(self, p, order: int) -> Jet:
        """Jet of the Gaussian curvature ``-(Laplacian log lam) / (2 lam)``."""
        ell = self.log_jet(p, order + 2)
        lap = ell.diff(0).diff(0) + ell.diff(1).diff(1)
        return -0.5 * lap / self.lam.jet(p, order, self.env)

    def check_positive(self, points):
        pts = np.asarray(points, float)
        if np.any(self.lam(pts[..., 0], pts[..., 1], self.env) <= 0):
            raise DomainError("conformal factor must be positive")

    def __repr__(self) -> str:
        return f"IsothermalMetric({self.lam.text!r})"


def gaussian_curvature(m: IsothermalMetric, p) -> float:
    return float(m.kappa_jet(np.asarray(p, float).reshape(2), 0).value)


def _coefficient_jets(ell: Jet, order: int):
    """The Kostant coefficient matrices as jets of ``order`` from ``l``'s jet."""
    lx, ly = ell.diff(0), ell.diff(1)
    a = (0.5 * lx).truncate(order)
    b = (0.5 * ly).truncate(order)
    c = (-0.5 * (lx.diff(0) + ly.diff(1))).truncate(order)
    zero = Jet.constant(np.zeros(ell.batch_shape), order)
    one = Jet.constant(np.ones(ell.batch_shape), order)
    ax = [[a, b, zero], [-b, a, -one], [zero, c, zero]]
    ay = [[b, -a, one], [a, b, zero], [-c, zero, zero]]
    return ax, ay


class KostantConnection(ConnectionChart):
    """Rank-3 connection on ``TM + so(TM)`` in the frame ``(xi1, xi2, xi3)``."""

    def __init__(self, metric: IsothermalMetric, chart=None):
        self.metric = metric
        self.rank = 3
        if chart is not None:
            chart = tuple(float(c) for c in chart)
        self.chart = chart
        self.periodic_theta = False
        self.gluing = np.eye(3)
        self.theta_cut = 0.0
        self.env = metric.env

    def coefficients(self, points):
        points = np.asarray(points, float)
        ax, ay = _coefficient_jets(self.metric.log_jet(points, 2), 0)
        return jet_partial(ax, 0, 0), jet_partial(ay, 0, 0)

    def jets(self, p, order: int):
        return _coefficient_jets(self.metric.log_jet(p, order + 2), order)

    def __repr__(self) -> str:
        return f"KostantConnection({self.metric.lam.text!r}, chart={self.chart})"


def kostant_connection(m: IsothermalMetric, chart=None) -> KostantConnection:
    return KostantConnection(m, chart)


def frame_metric() -> FiberMetric:
    """Auxiliary fiber metric making ``(xi1, xi2, xi3)`` orthonormal."""
    return FiberMetric.identity(3)


# ---------------------------------------------------------------------------
# curvature of the Kostant connection


def _curvature_jet(ax, ay):
    """``R(d_x, d_y)`` as a 3x3 matrix of jets (order drops by one)."""
    out = []
    for i in range(3):
        row = []
        for j in range(3):
            entry = ay[i][j].diff(0) - ax[i][j].diff(1)
            for k in range(3):
                entry = entry + ax[i][k] * ay[k][j] - ay[i][k] * ax[k][j]
            row.append(entry)
        out.append(row)
    return out


def _covariant_derivatives(m: IsothermalMetric, p):
    """``R^K`` and its covariant derivatives along ``d_x``, ``d_y`` by exact jets."""
    p = np.asarray(p, float).reshape(2)
    ell = m.log_jet(p, 4)
    ax, ay = _coefficient_jets(ell, 2)
    R = _curvature_jet(ax, ay)
    r0 = jet_partial(R, 0, 0)
    a0x, a0y = jet_partial(ax, 0, 0), jet_partial(ay, 0, 0)
    lx, ly = ell.partial(1, 0), ell.partial(0, 1)
    # the 2-form slot d_x ^ d_y contributes -(div of the Levi-Civita frame) = -l_k
    dx = jet_partial(R, 1, 0) + a0x @ r0 - r0 @ a0x - lx * r0
    dy = jet_partial(R, 0, 1) + a0y @ r0 - r0 @ a0y - ly * r0
    return r0, dx, dy


def lemma_matrices(m: IsothermalMetric, p) -> dict[str, np.ndarray]:
    """Closed-form frame matrices of ``R^K``, ``nabla_x R^K`` and ``nabla_y R^K``.

    Two entries of ``nabla_y R^K`` (row 3, columns 1-2) have no
    closed form here and are filled in by exact jet differentiation.
    """
    p = np.asarray(p, float).reshape(2)
    kap = m.kappa_jet(p, 2)
    lam = m.lam.jet(p, 1, m.env)
    lv, lx, ly = float(lam.value), float(lam.partial(1, 0)), float(lam.partial(0, 1))
    kx, ky = float(kap.partial(1, 0)), float(kap.partial(0, 1))
    kxx, kxy = float(kap.partial(2, 0)), float(kap.partial(1, 1))

    R = np.zeros((3, 3))
    R[2] = (-kx * lv, -ky * lv, 0.0)

    DxR = np.zeros((3, 3))
    DxR[1] = (kx * lv, ky * lv, 0.0)
    DxR[2] = ((lx * kx - ky * ly) / 2 - kxx * lv,
              -kxy * lv + (ly * kx + lx * ky) / 2,
              -ky * lv)

    DyR = np.zeros((3, 3))
    DyR[0] = (-kx * lv, -ky * lv, 0.0)
    DyR[2, 2] = kx * lv
    _, _, dy_exact = _covariant_derivatives(m, p)
    for i, j in JET_ENTRIES:
        DyR[i, j] = dy_exact[i, j]
    return {"R_K": R, "DxR_K": DxR, "DyR_K": DyR}


def _fd_matrices(m: IsothermalMetric, p, h: float):
    """``R^K`` and its covariant derivatives by nested central differences."""
    conn = KostantConnection(m)
    p = np.asarray(p, float).reshape(2)
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])

    def curv(q):
        pts = np.stack([q + ex, q - ex, q + ey, q - ey, q])
        ax, ay = conn.coefficients(pts)
        return (ay[0] - ay[1]) / (2 * h) - (ax[2] - ax[3]) / (2 * h) + ax[4] @ ay[4] - ay[4] @ ax[4]

    r0 = curv(p)
    ax0, ay0 = (a[0] for a in conn.coefficients(p[None]))
    lam = lambda q: float(m.lam(q[0], q[1], m.env))  # noqa: E731
    lx = (np.log(lam(p + ex)) - np.log(lam(p - ex))) / (2 * h)
    ly = (np.log(lam(p + ey)) - np.log(lam(p - ey))) / (2 * h)
    dx = (curv(p + ex) - curv(p - ex)) / (2 * h) + ax0 @ r0 - r0 @ ax0 - lx * r0
    dy = (curv(p + ey) - curv(p - ey)) / (2 * h) + ay0 @ r0 - r0 @ ay0 - ly * r0
    return {"R_K": r0, "DxR_K": dx, "DyR_K": dy}


def _closed_form_mask(name: str) -> np.ndarray:
    mask = np.ones((3, 3), dtype=bool)
    if name == "DyR_K":
        for i, j in JET_ENTRIES:
            mask[i, j] = False
    return mask


def lemma_check(m: IsothermalMetric, p, h: float = 1e-3, detail: bool = False):
    """Max deviation between finite-difference curvature data and :func:`lemma_matrices`.

    Only closed-form entries are compared (not ``JET_ENTRIES``).
    """
    closed = lemma_matrices(m, p)
    fd = _fd_matrices(m, p, h)
    per = {
        name: float(np.max(np.abs(fd[name] - closed[name])[_closed_form_mask(name)]))
        for name in closed
    }
    worst = max(per.values())
    return (worst, per) if detail else worst


def jet_entries_fd(m: IsothermalMetric, p, h: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """``JET_ENTRIES`` by finite differences: two Richardson-extrapolated stencils (h, h/2) and (h/2, h/4)."""
    d = [np.array([_fd_matrices(m, p, s)["DyR_K"][i, j] for i, j in JET_ENTRIES])
         for s in (h, h / 2, h / 4)]
    return (4 * d[1] - d[0]) / 3, (4 * d[2] - d[1]) / 3


def kernel_line(m: IsothermalMetric, p, return_info: bool = False):
    """Unit frame vector spanning the kernel of ``nabla_x R^K`` or ``nabla_y R^K``.

    The matrix with the larger second singular value is used; its rank must
    be exactly two (``s2/s1 > 1e-6``, ``s3/s1 < 1e-9``) and ``s1`` must clear
    the rounding floor ``1e-9 max(1, lambda |kappa|)``.
    """
    mats = lemma_matrices(m, p)
    # entries are built from d kappa; below this they are rounding noise
    lam = float(m.lam(*np.asarray(p, float).reshape(2), m.env))
    floor = RANK_NULL * max(1.0, lam * abs(gaussian_curvature(m, p)))
    candidates = []
    for name in ("DxR_K", "DyR_K"):
        _, s, vt = np.linalg.svd(mats[name])
        candidates.append((s[1], name, s, vt))
    candidates.sort(key=lambda c: -c[0])
    for _, name, s, vt in candidates:
        if s[0] > floor and s[1] / s[0] > RANK_GAP and s[2] / s[0] < RANK_NULL:
            vec = vt[2].copy()
            lead = np.flatnonzero(np.abs(vec) > 1e-12)
            if len(lead) and vec[lead[0]] < 0:
                vec = -vec
            if return_info:
                return vec, {"matrix": name, "singular_values": s.tolist()}
            return vec
    raise RankDeficiencyError(
        f"neither curvature derivative has rank 2 at {np.asarray(p).tolist()} (d kappa ~ 0?)"
    )


def line_bundle_check(m: IsothermalMetric, p, h: float = 1e-4) -> dict[str, float]:
    """Numerical parallelism and curvature of the kernel line bundle near ``p``.

    ``wedge_defect`` is ``|xi ^ nabla xi|`` (zero iff the line is parallel) and
    ``curvature`` is ``d alpha`` for the induced connection form ``alpha``.
    """
    conn = KostantConnection(m)
    p = np.asarray(p, float).reshape(2)
    steps = (np.array([h, 0.0]), np.array([0.0, h]))

    def aligned(q, ref):
        v = kernel_line(m, q)
        return v if v @ ref >= 0 else -v

    def form(q):
        xi = kernel_line(m, q)
        ax, ay = (a[0] for a in conn.coefficients(q[None]))
        alpha, wedge = [], 0.0
        for e, A in zip(steps, (ax, ay)):
            d = (aligned(q + e, xi) - aligned(q - e, xi)) / (2 * h) + A @ xi
            a = float(d @ xi)
            alpha.append(a)
            wedge = max(wedge, float(np.linalg.norm(d - a * xi)))
        return np.array(alpha), wedge

    alpha0, wedge = form(p)
    ax_p, _ = form(p + steps[0])
    ax_m, _ = form(p - steps[0])
    ay_p, _ = form(p + steps[1])
    ay_m, _ = form(p - steps[1])
    curv = (ax_p[1] - ax_m[1]) / (2 * h) - (ay_p[0] - ay_m[0]) / (2 * h)
    return {"wedge_defect": wedge, "curvature": float(curv)}


# ---------------------------------------------------------------------------
# Killing fields as parallel sections


class DerivedField:
    """Field defined by a jet-valued rule ``rule(p, order) -> Jet``."""

    def __init__(self, rule, label: str = "derived"):
        self.rule = rule
        self.label = label

    def jet(self, p, order: int, env=None) -> Jet:
        return self.rule(np.asarray(p, float), order)

    def __call__(self, x, y, env=None):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        value = self.rule(np.stack([x, y], axis=-1), 0).value
        return float(value) if np.ndim(value) == 0 else value

    def __repr__(self) -> str:
        return f"DerivedField({self.label})"


@dataclass
class KostantSection:
    """Section ``c1 xi1 + c2 xi2 + c3 xi3`` of the Kostant bundle."""

    c1: object
    c2: object
    c3: object
    skew_defect: float | None = field(default=None)

    @property
    def coefficients(self):
        return (self.c1, self.c2, self.c3)

    def values(self, points) -> np.ndarray:
        pts = np.asarray(points, float)
        return np.stack(
            [np.broadcast_to(c(pts[..., 0], pts[..., 1]), pts.shape[:-1]) for c in self.coefficients],
            axis=-1,
        )

    def jets(self, p, order: int) -> list[Jet]:
        return [c.jet(p, order) for c in self.coefficients]


def _nabla_matrix(X, m: IsothermalMetric, p, order: int):
    """Levi-Civita ``nabla X`` (matrix ``M[i][j] = (nabla_{d_j} X)^i``) as jets."""
    x1, x2 = (as_field(c).jet(p, order + 1) for c in X)
    ell = m.log_jet(p, order + 1)
    a = (0.5 * ell.diff(0)).truncate(order)
    b = (0.5 * ell.diff(1)).truncate(order)
    u, v = x1.truncate(order), x2.truncate(order)
    return [
        [x1.diff(0) + a * u + b * v, x1.diff(1) + b * u - a * v],
        [x2.diff(0) - b * u + a * v, x2.diff(1) + a * u + b * v],
    ]


def killing_to_section(X, m: IsothermalMetric, sample=None) -> KostantSection:
    """``(X, nabla X)`` in the Kostant frame.

    ``skew_defect`` is the largest spectral norm of the symmetric part of
    ``nabla X`` over ``sample`` (default: a 9x9 grid on ``[-1, 1]^2``); it
    vanishes exactly when ``X`` is Killing there.
    """
    X = tuple(as_field(c) for c in X)

    def c3_rule(p, order):
        M = _nabla_matrix(X, m, p, order)
        return 0.5 * (M[1][0] - M[0][1])

    if sample is None:
        g = np.linspace(-1, 1, 9)
        sample = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    M = _nabla_matrix(X, m, np.asarray(sample, float), 0)
    mat = np.stack([np.stack([np.asarray(M[i][j].value) for j in range(2)], -1) for i in range(2)], -2)
    sym = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    defect = float(np.max(np.linalg.norm(sym, ord=2, axis=(-2, -1))))
    return KostantSection(X[0], X[1], DerivedField(c3_rule, "J-part of nabla X"), defect)


def section_to_TM(sigma: KostantSection):
    """The vector-field part ``(c1, c2)`` of a section."""
    return sigma.c1, sigma.c2


def parallel_defect(sigma: KostantSection, m: IsothermalMetric, sample) -> float:
    """Max over ``sample`` and both coordinate directions of ``|nabla_d sigma|``."""
    pts = np.asarray(sample, float).reshape(-1, 2)
    cj = sigma.jets(pts, 1)
    c = np.stack([np.broadcast_to(np.asarray(j.value), pts.shape[:1]) for j in cj], -1)
    ax, ay = KostantConnection(m).coefficients(pts)
    worst = 0.0
    for axis, A in ((0, ax), (1, ay)):
        dc = np.stack(
            [np.broadcast_to(np.asarray(j.partial(1 - axis, axis)), pts.shape[:1]) for j in cj], -1
        )
        res = dc + np.einsum("bij,bj->bi", A, c)
        worst = max(worst, float(np.max(np.linalg.norm(res, axis=-1))))
    return worst


def section_oracle(sigma: KostantSection, in_domain, margin: float = 0.0) -> SectionOracle:
    """Oracle for ``sigma`` restricted to the region accepted by ``in_domain``."""
    return SectionOracle(in_domain=in_domain, value=sigma.values, margin=margin)


@dataclass
class KillingExtension:
    points: np.ndarray
    field: np.ndarray  # (n, 2) reconstructed vector field
    sections: np.ndarray  # (n, 3) full frame coefficients
    agreement_defect: float
    parallel_defect: float

    @property
    def extended(self) -> bool:
        return self.agreement_defect <= 1e-6


def extend_killing(m: IsothermalMetric, oracle: SectionOracle, p0, grid, tol: float = DEFAULT_TOL,
                   fd_step: float = 1e-4) -> KillingExtension:
    """Radially extend the Kostant section of a Killing field from ``p0``.

    Agreement is measured on the grid points inside the oracle's domain; the
    parallel defect is a central-difference check of the extension itself.
    """
    conn = KostantConnection(m)
    grid = np.asarray(grid, float).reshape(-1, 2)
    p0 = np.asarray(p0, float).reshape(2)
    xi0 = np.asarray(oracle.value(p0), float)
    vals = radial_extension(conn, p0, xi0, grid, tol)
    inside = np.array([bool(oracle.in_domain(q)) for q in grid])
    defect = 0.0
    if inside.any():
        defect = agreement_defect(conn, frame_metric(), oracle, p0, grid[inside], tol)

    offsets = np.array([[fd_step, 0], [-fd_step, 0], [0, fd_step], [0, -fd_step]])
    shifted = (grid[:, None, :] + offsets[None]).reshape(-1, 2)
    near = radial_extension(conn, p0, xi0, shifted, tol).reshape(len(grid), 4, 3)
    ax, ay = conn.coefficients(grid)
    dx = (near[:, 0] - near[:, 1]) / (2 * fd_step) + np.einsum("bij,bj->bi", ax, vals)
    dy = (near[:, 2] - near[:, 3]) / (2 * fd_step) + np.einsum("bij,bj->bi", ay, vals)
    pdef = float(max(np.linalg.norm(dx, axis=1).max(), np.linalg.norm(dy, axis=1).max()))
    return KillingExtension(grid, vals[:, :2], vals, float(defect), pdef)
