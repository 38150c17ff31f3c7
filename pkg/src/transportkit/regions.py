"""Detour decompositions of a segment around a removed set.

A decomposition of the segment ``p0 -> p`` is a list of sub-segments ``J_i``
together with detour curves ``gamma_i`` that avoid the removed set ``F``;
``J_i`` followed by ``gamma_i`` reversed bounds a region ``S_i``.  Two
constructions are provided: a tube of width ``delta`` around a single
segment, and a cover of a finite union of points and segments by disks and
stadiums (a stadium is the set of points within ``rho`` of a segment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .estimate import HomotopyGrid
from .paths import Arc, PathSpec, Segment

DELTA_RESOLUTION = 1e-6
F_MARGIN = 1e-9
CLOSE_TOL = 1e-10
K_INFLATE = 1.5
TANGENCY_PAD = 1e-9


def _pt(p) -> np.ndarray:
    return np.asarray(p, float).reshape(2)


def _cross(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def point_segment_distance(q, a, b) -> float:
    q, a, b = _pt(q), _pt(a), _pt(b)
    d = b - a
    dd = float(d @ d)
    t = 0.0 if dd == 0 else min(1.0, max(0.0, float((q - a) @ d) / dd))
    return float(np.linalg.norm(q - (a + t * d)))


def segments_intersect(a, b, c, d, tol: float = 0.0) -> bool:
    """Closed segments ``ab`` and ``cd`` meet (within ``tol``)."""
    return segment_distance(a, b, c, d) <= tol


def segment_distance(a, b, c, d) -> float:
    a, b, c, d = map(_pt, (a, b, c, d))
    r, s = b - a, d - c
    denom = _cross(r, s)
    if denom != 0:
        t = _cross(c - a, s) / denom
        u = _cross(c - a, r) / denom
        if 0 <= t <= 1 and 0 <= u <= 1:
            return 0.0
    return min(point_segment_distance(a, c, d), point_segment_distance(b, c, d),
               point_segment_distance(c, a, b), point_segment_distance(d, a, b))


# ---------------------------------------------------------------------------
# removed sets


class RemovedSet:
    """Finite union of points and pairwise disjoint closed segments.

    Each component is stored as a segment ``(a, b)``; points have ``a == b``.
    """

    def __init__(self, components):
        comps = []
        for comp in components:
            arr = np.asarray(comp, float)
            if arr.shape == (2,):
                arr = np.stack([arr, arr])
            if arr.shape != (2, 2) or not np.all(np.isfinite(arr)):
                raise ValueError("components are points or segments given by two finite points")
            comps.append(arr)
        if not comps:
            raise ValueError("removed set is empty")
        for i in range(len(comps)):
            for j in range(i):
                if segment_distance(*comps[i], *comps[j]) == 0:
                    raise ValueError("components of the removed set must be disjoint")
        self.components = comps

    @classmethod
    def points(cls, pts) -> "RemovedSet":
        return cls([np.asarray(p, float) for p in pts])

    @classmethod
    def segment(cls, a, b) -> "RemovedSet":
        return cls([np.stack([_pt(a), _pt(b)])])

    @classmethod
    def segments(cls, segs) -> "RemovedSet":
        return cls([np.asarray(s, float) for s in segs])

    @property
    def variant(self) -> str:
        if all(np.array_equal(c[0], c[1]) for c in self.components):
            return "points"
        return "segment" if len(self.components) == 1 else "segments"

    def distance(self, q) -> float:
        return min(point_segment_distance(q, c[0], c[1]) for c in self.components)

    def segment_distance(self, a, b) -> float:
        return min(segment_distance(a, b, c[0], c[1]) for c in self.components)

    def extreme_points(self) -> np.ndarray:
        return np.vstack(self.components)

    def to_json(self) -> list:
        out = []
        for c in self.components:
            out.append(c[0].tolist() if np.array_equal(c[0], c[1]) else c.tolist())
        return out

    @classmethod
    def from_json(cls, data) -> "RemovedSet":
        return cls(data)

    def __repr__(self) -> str:
        return f"RemovedSet({self.variant}, {len(self.components)} components)"


# ---------------------------------------------------------------------------
# stadium geometry


class Stadium:
    """Closed ``rho``-neighbourhood of the segment ``ab`` (a disk when ``a == b``).

    The boundary is parametrised counterclockwise by arclength ``s`` in
    ``[0, perimeter)``.
    """

    def __init__(self, a, b, rho: float):
        if rho <= 0:
            raise ValueError("stadium radius must be positive")
        self.a, self.b, self.rho = _pt(a), _pt(b), float(rho)
        span = self.b - self.a
        self.core = float(np.linalg.norm(span))
        if self.core == 0:
            self.pieces = [Arc(self.a, rho, 0.0, 2 * np.pi)]
        else:
            d = span / self.core
            n = np.array([-d[1], d[0]])
            phi_n = math.atan2(n[1], n[0])
            self.pieces = [
                Segment(self.a - rho * n, self.b - rho * n),
                Arc(self.b, rho, phi_n - np.pi, phi_n),
                Segment(self.b + rho * n, self.a + rho * n),
                Arc(self.a, rho, phi_n, phi_n + np.pi),
            ]
            self._d, self._n = d, n
        self._breaks = np.r_[0.0, np.cumsum([p.length for p in self.pieces])]

    @property
    def is_disk(self) -> bool:
        return self.core == 0

    @property
    def perimeter(self) -> float:
        return float(self._breaks[-1])

    @property
    def area(self) -> float:
        return 2 * self.rho * self.core + np.pi * self.rho ** 2

    def distance_to_core(self, q) -> float:
        return point_segment_distance(q, self.a, self.b)

    def contains(self, q) -> bool:
        return self.distance_to_core(q) <= self.rho

    def boundary_param(self, q) -> float:
        """Arclength position of a boundary point ``q``."""
        q = _pt(q)
        if self.is_disk:
            th = math.atan2(q[1] - self.a[1], q[0] - self.a[0]) % (2 * np.pi)
            return self.rho * th
        tau = float((q - self.a) @ self._d)
        side = float((q - self.a) @ self._n)
        if 0 <= tau <= self.core:
            return tau if side < 0 else self._breaks[2] + (self.core - tau)
        if tau > self.core:
            arc, base = self.pieces[1], self._breaks[1]
            c = self.b
        else:
            arc, base = self.pieces[3], self._breaks[3]
            c = self.a
        th = math.atan2(q[1] - c[1], q[0] - c[0])
        off = (th - arc.theta0) % (2 * np.pi)
        if off > 1.5 * np.pi:  # rounding just before the arc start
            off = 0.0
        return base + self.rho * min(off, np.pi)

    def point_at(self, s: float) -> np.ndarray:
        s = s % self.perimeter
        k = int(min(np.searchsorted(self._breaks, s, side="right") - 1, len(self.pieces) - 1))
        piece = self.pieces[k]
        return piece.point((s - self._breaks[k]) / piece.length)

    def _sub_piece(self, k: int, s0: float, s1: float):
        piece = self.pieces[k]
        u0 = (s0 - self._breaks[k]) / piece.length
        u1 = (s1 - self._breaks[k]) / piece.length
        if isinstance(piece, Segment):
            return Segment(piece.point(u0), piece.point(u1))
        th0 = piece.theta0 + u0 * (piece.theta1 - piece.theta0)
        th1 = piece.theta0 + u1 * (piece.theta1 - piece.theta0)
        return Arc(piece.center, piece.radius, th0, th1)

    def boundary_path(self, s0: float, s1: float, ccw: bool = True) -> PathSpec:
        """Boundary curve from position ``s0`` to ``s1`` in the given sense."""
        if not ccw:
            return self.boundary_path(s1, s0, True).reversed()
        P = self.perimeter
        s0 %= P
        s1 %= P
        stop = s1 if s1 > s0 else s1 + P
        out = []
        s = s0
        while s < stop - 1e-15 * P:
            wrapped = s % P
            k = int(min(np.searchsorted(self._breaks, wrapped, side="right") - 1, len(self.pieces) - 1))
            lap = s - wrapped
            end = min(stop, lap + self._breaks[k + 1])
            if end - s > 1e-14 * P:
                out.append(self._sub_piece(k, wrapped, end - lap))
            s = end
        # snap consecutive joins that differ by rounding
        fixed = [out[0]]
        for piece in out[1:]:
            prev = fixed[-1]
            if isinstance(piece, Segment):
                piece = Segment(prev.end, piece.b)
            fixed.append(piece)
        return PathSpec(fixed)

    def chord(self, p0, p):
        """Parameters ``(t_in, t_out)`` where ``p0 + t (p - p0)`` crosses the boundary, or ``None``."""
        p0, p = _pt(p0), _pt(p)
        v = p - p0

        def gap(t):
            return self.distance_to_core(p0 + t * v) - self.rho

        if gap(0.0) <= 0 or gap(1.0) <= 0:
            raise ValueError("segment endpoint lies inside the cover")
        best = minimize_scalar(gap, bounds=(0.0, 1.0), method="bounded",
                               options={"xatol": 1e-13})
        t_min = float(best.x)
        if gap(t_min) >= 0:
            return None
        t_in = brentq(gap, 0.0, t_min, xtol=1e-15, rtol=1e-15)
        t_out = brentq(gap, t_min, 1.0, xtol=1e-15, rtol=1e-15)
        return t_in, t_out

    def to_json(self) -> dict:
        return {"core": [self.a.tolist(), self.b.tolist()], "radius": self.rho}


# ---------------------------------------------------------------------------
# closed curves


def _arc_signed_area(arc: Arc) -> float:
    cx, cy = arc.center
    r, t0, t1 = arc.radius, arc.theta0, arc.theta1
    return 0.5 * (r * cx * (math.sin(t1) - math.sin(t0)) - r * cy * (math.cos(t1) - math.cos(t0))
                  + r * r * (t1 - t0))


def signed_area(pieces) -> float:
    """Signed area enclosed by a closed chain of segments and arcs (Green's theorem)."""
    total = 0.0
    for piece in pieces:
        if isinstance(piece, Segment):
            total += 0.5 * _cross(piece.a, piece.b)
        elif isinstance(piece, Arc):
            total += _arc_signed_area(piece)
        else:
            raise TypeError(f"unsupported piece {type(piece).__name__}")
    return total


def shoelace_area(points) -> float:
    pts = np.asarray(points, float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _circle_hits(center, radius, a, b):
    """Parameters along ``a -> b`` where the segment meets the circle."""
    d = b - a
    f = a - center
    A = float(d @ d)
    B = 2 * float(f @ d)
    C = float(f @ f) - radius ** 2
    disc = B * B - 4 * A * C
    if A == 0 or disc < 0:
        return []
    root = math.sqrt(disc)
    return [t for t in ((-B - root) / (2 * A), (-B + root) / (2 * A)) if -1e-12 <= t <= 1 + 1e-12]


def _on_arc(arc: Arc, q) -> bool:
    lo, hi = sorted((arc.theta0, arc.theta1))
    th = math.atan2(q[1] - arc.center[1], q[0] - arc.center[0])
    k = math.ceil((lo - th) / (2 * np.pi))
    th += 2 * np.pi * k
    return th <= hi + 1e-12


def _piece_points_in_common(p, q) -> list[np.ndarray]:
    """Intersection points of two pieces (finite sample of a possible overlap)."""
    if isinstance(p, Segment) and isinstance(q, Segment):
        if segment_distance(p.a, p.b, q.a, q.b) > 1e-12:
            return []
        r, s = p.b - p.a, q.b - q.a
        denom = _cross(r, s)
        if abs(denom) > 1e-15:
            t = _cross(q.a - p.a, s) / denom
            return [p.a + t * r]
        return [x for x in (p.a, p.b, q.a, q.b)
                if point_segment_distance(x, p.a, p.b) <= 1e-12
                and point_segment_distance(x, q.a, q.b) <= 1e-12] + [np.full(2, np.nan)]
    if isinstance(p, Arc) and isinstance(q, Segment):
        p, q = q, p
    if isinstance(p, Segment) and isinstance(q, Arc):
        pts = [p.a + t * (p.b - p.a) for t in _circle_hits(q.center, q.radius, p.a, p.b)]
        return [x for x in pts if _on_arc(q, x)]
    # arc against arc
    d = float(np.linalg.norm(q.center - p.center))
    if d < 1e-14 and abs(p.radius - q.radius) < 1e-14:
        lo1, hi1 = sorted((p.theta0, p.theta1))
        lo2, hi2 = sorted((q.theta0, q.theta1))
        for k in (-1, 0, 1):
            if min(hi1, hi2 + 2 * np.pi * k) - max(lo1, lo2 + 2 * np.pi * k) > 1e-12:
                return [np.full(2, np.nan)]
        return [x for x in (p.start, p.end) if _on_arc(q, x)]
    if d == 0 or d > p.radius + q.radius or d < abs(p.radius - q.radius):
        return []
    a = (p.radius ** 2 - q.radius ** 2 + d * d) / (2 * d)
    h = math.sqrt(max(p.radius ** 2 - a * a, 0.0))
    u = (q.center - p.center) / d
    mid = p.center + a * u
    perp = np.array([-u[1], u[0]])
    pts = [mid + h * perp, mid - h * perp]
    return [x for x in pts if _on_arc(p, x) and _on_arc(q, x)]


def is_simple_closed(pieces, tol: float = 1e-9) -> bool:
    """True if the closed chain of pieces has no self-intersections."""
    pieces = [pc for pc in pieces if pc.length > 0]
    n = len(pieces)
    if n < 2:
        return n == 1 and isinstance(pieces[0], Arc) and abs(abs(pieces[0].theta1 - pieces[0].theta0) - 2 * np.pi) < 1e-12
    if np.linalg.norm(pieces[-1].end - pieces[0].start) > CLOSE_TOL:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            shared = []
            if j == i + 1:
                shared.append(pieces[i].end)
            if i == 0 and j == n - 1:
                shared.append(pieces[0].start)
            for x in _piece_points_in_common(pieces[i], pieces[j]):
                if np.any(np.isnan(x)):
                    return False
                if not any(np.linalg.norm(x - s) <= tol for s in shared):
                    return False
    return True


# ---------------------------------------------------------------------------
# decompositions


@dataclass
class RegionItem:
    """One detour: sub-segment ``J = [a, b]``, detour ``gamma`` from ``a`` to ``b``."""

    a: np.ndarray
    b: np.ndarray
    t_in: float
    t_out: float
    gamma: PathSpec
    mu: float
    L: float
    cover: Stadium
    homotopy_kind: str = "linear"
    _homotopy: HomotopyGrid | None = field(default=None, repr=False)

    @property
    def J(self) -> PathSpec:
        return PathSpec.segment(self.a, self.b)

    @property
    def boundary(self) -> list:
        """``J`` followed by ``gamma`` reversed: the closed boundary of ``S_i``."""
        return list(self.J.pieces) + list(self.gamma.reversed().pieces)

    @property
    def homotopy(self) -> HomotopyGrid:
        if self._homotopy is None:
            self._homotopy = HomotopyGrid.linear(self.J, self.gamma)
        return self._homotopy

    def to_json(self) -> dict:
        return {
            "J": [self.a.tolist(), self.b.tolist()],
            "gamma": self.gamma.to_json(),
            "mu": self.mu,
            "L": self.L,
            "homotopy": self.homotopy_kind,
            "cover": self.cover.to_json(),
        }


@dataclass
class RegionDecomposition:
    p0: np.ndarray
    p: np.ndarray
    K_center: np.ndarray
    K_radius: float
    items: list[RegionItem]
    removed: RemovedSet
    kind: str
    radius: float  # tube width or disk radius

    def straight_pieces(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Parts of ``p0 -> p`` outside every ``J_i``."""
        out, cur = [], self.p0
        for item in self.items:
            out.append((cur, item.a))
            cur = item.b
        out.append((cur, self.p))
        return out

    def detour_path(self) -> PathSpec:
        """``p0 -> p`` with every ``J_i`` replaced by ``gamma_i``."""
        pieces = []
        for (u, v), item in zip(self.straight_pieces(), self.items + [None]):
            if np.linalg.norm(v - u) > 0:
                pieces.append(Segment(u, v))
            if item is not None:
                pieces.extend(item.gamma.pieces)
        if not pieces:
            pieces.append(Segment(self.p0, self.p))
        return PathSpec(pieces)

    @property
    def L_gamma(self) -> float:
        if not self.items:
            return float(np.linalg.norm(self.p - self.p0))
        return self.detour_path().length

    def validate(self) -> dict[str, bool]:
        checks = {}
        ts = [(it.t_in, it.t_out) for it in self.items]
        checks["ordered_disjoint"] = all(a < b for a, b in ts) and all(
            ts[i][1] < ts[i + 1][0] for i in range(len(ts) - 1))
        checks["closed"] = all(
            np.linalg.norm(it.gamma.start - it.a) <= CLOSE_TOL
            and np.linalg.norm(it.gamma.end - it.b) <= CLOSE_TOL for it in self.items)
        checks["avoids_F"] = all(
            self.removed.segment_distance(u, v) >= F_MARGIN for u, v in self.straight_pieces())
        checks["inside_K"] = all(
            np.max(np.linalg.norm(it.gamma.sample(256) - self.K_center, axis=1)) <= self.K_radius
            for it in self.items)
        checks["simple"] = all(is_simple_closed(it.boundary) for it in self.items)
        return checks

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "p0": self.p0.tolist(),
            "p": self.p.tolist(),
            "K": {"center": self.K_center.tolist(), "radius": self.K_radius},
            "radius": self.radius,
            "removed": self.removed.to_json(),
            "items": [it.to_json() for it in self.items],
            "L_gamma": self.L_gamma,
            "r_budget": r_budget(self),
        }


def _K_disk(p0, p, covers, removed: RemovedSet):
    center = 0.5 * (p0 + p)
    need = max(float(np.linalg.norm(p0 - center)), float(np.linalg.norm(p - center)),
               float(np.max(np.linalg.norm(removed.extreme_points() - center, axis=1))))
    for c in covers:
        far = max(np.linalg.norm(c.a - center), np.linalg.norm(c.b - center)) + c.rho
        need = max(need, float(far))
    return center, K_INFLATE * need


def _make_item(cover: Stadium, p0, p, t_in, t_out, L_rule: str) -> RegionItem:
    v = p - p0
    a, b = p0 + t_in * v, p0 + t_out * v
    s_a, s_b = cover.boundary_param(a), cover.boundary_param(b)
    P = cover.perimeter
    ccw_len = (s_b - s_a) % P
    ccw = ccw_len <= P - ccw_len + 1e-12 * P
    gamma = cover.boundary_path(s_a, s_b, ccw)
    # pin the ends exactly on the segment
    first, last = gamma.pieces[0], gamma.pieces[-1]
    pieces = list(gamma.pieces)
    if isinstance(first, Segment):
        pieces[0] = Segment(a, first.b)
    if isinstance(pieces[-1], Segment):
        pieces[-1] = Segment(pieces[-1].a, b)
    gamma = PathSpec(pieces)
    item_pieces = [Segment(a, b)] + list(gamma.reversed().pieces)
    mu = abs(signed_area(item_pieces))
    L = np.pi * cover.rho if L_rule == "half-circle" else gamma.length
    return RegionItem(a, b, t_in, t_out, gamma, float(mu), float(L), cover)


def tube_cap(I, p0, p) -> float:
    """Upper limit for the tube width: the tube must not reach ``p0`` or ``p``."""
    I = np.asarray(I, float)
    return min(point_segment_distance(p0, *I), point_segment_distance(p, *I))


def segment_tube_decomposition(I, p0, p, delta: float) -> RegionDecomposition:
    """Detour around the ``delta``-tube of the segment ``I`` along its boundary."""
    I = np.asarray(I, float).reshape(2, 2)
    p0, p = _pt(p0), _pt(p)
    removed = RemovedSet.segment(*I)
    if delta <= 0:
        raise ValueError("delta must be positive")
    cap = tube_cap(I, p0, p)
    if delta >= cap:
        raise ValueError(f"delta={delta} too large: the tube reaches p0 or p (cap {cap:.6g})")
    tube = Stadium(I[0], I[1], delta)
    items = []
    if segment_distance(p0, p, I[0], I[1]) < F_MARGIN:  # near misses too, so validate() agrees
        t_in, t_out = tube.chord(p0, p)
        items.append(_make_item(tube, p0, p, t_in, t_out, "gamma-length"))
    center, radius = _K_disk(p0, p, [tube], removed)
    return RegionDecomposition(p0, p, center, radius, items, removed, "tube", float(delta))


def r_budget(dec: RegionDecomposition) -> float:
    return float(sum(it.mu for it in dec.items))


def rplus_budget(dec: RegionDecomposition, G: float) -> float:
    """``exp(G L_gamma / 2) sum exp(G L_i) mu_i`` with ``L_gamma`` the detoured path length."""
    if not dec.items:
        return 0.0
    if G == 0:
        return r_budget(dec)
    weighted = sum(math.exp(G * it.L) * it.mu for it in dec.items)
    return float(math.exp(0.5 * G * dec.L_gamma) * weighted)


def choose_delta(I, p0, p, G: float, eps: float) -> float:
    """Largest tube width on a ``1e-6`` grid whose R+ budget stays below ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cap = tube_cap(np.asarray(I, float).reshape(2, 2), _pt(p0), _pt(p))
    kmax = int(math.ceil(cap / DELTA_RESOLUTION)) - 1
    if kmax < 1:
        raise ValueError("tube cap is below the delta resolution")

    def budget(k: int) -> float:
        return rplus_budget(segment_tube_decomposition(I, p0, p, k * DELTA_RESOLUTION), G)

    if budget(1) >= eps:
        raise ValueError(f"eps={eps} not reachable at delta resolution {DELTA_RESOLUTION}")
    lo, hi = 1, kmax
    if budget(hi) < eps:
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if budget(mid) < eps:
            lo = mid
        else:
            hi = mid
    delta = lo * DELTA_RESOLUTION
    assert budget(lo) < eps
    assert lo == kmax or budget(lo + 1) >= eps
    return delta


def cover_radius(removed: RemovedSet, p0, p, eps: float) -> float:
    """Common radius whose covers have total area ``eps``, capped to keep covers disjoint."""
    lengths = sum(float(np.linalg.norm(c[1] - c[0])) for c in removed.components)
    n = len(removed.components)
    # n pi rho^2 + 2 rho sum|I_k| = eps
    rho = (-2 * lengths + math.sqrt(4 * lengths ** 2 + 4 * n * np.pi * eps)) / (2 * n * np.pi)
    caps = [removed.distance(p0), removed.distance(p)]
    comps = removed.components
    for i in range(n):
        for j in range(i):
            caps.append(0.5 * segment_distance(*comps[i], *comps[j]))
    cap = min(caps) * (1 - 1e-6)
    return float(min(rho, cap))


def disk_cover_decomposition(F: RemovedSet, p0, p, eps: float) -> RegionDecomposition:
    """Walk ``p0 -> p`` around disk/stadium covers of ``F`` of total area at most ``eps``.

    Each detour follows the shorter boundary arc of the cover it meets
    (counterclockwise on ties).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    p0, p = _pt(p0), _pt(p)
    if F.distance(p0) == 0 or F.distance(p) == 0:
        raise ValueError("p0 and p must lie outside the removed set")
    rho = cover_radius(F, p0, p, eps)
    covers, hits = [], []
    for comp in F.components:
        r = rho
        gap = segment_distance(p0, p, comp[0], comp[1]) - r
        if abs(gap) < TANGENCY_PAD:
            r = r + 2 * TANGENCY_PAD
        cover = Stadium(comp[0], comp[1], r)
        covers.append(cover)
        chord = cover.chord(p0, p)
        if chord is not None:
            hits.append((chord[0], chord[1], cover))
    hits.sort(key=lambda h: h[0])
    items = [
        _make_item(c, p0, p, t_in, t_out, "half-circle" if c.is_disk else "gamma-length")
        for t_in, t_out, c in hits
    ]
    center, radius = _K_disk(p0, p, covers, F)
    return RegionDecomposition(p0, p, center, radius, items, F, "disk-cover", rho)
