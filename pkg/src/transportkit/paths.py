"""Piecewise-smooth planar curves.

Every piece is parametrised on ``u in [0, 1]`` and exposes vectorised
``point(u)`` / ``velocity(u)``.  A :class:`PathSpec` chains pieces and maps a
global parameter ``t in [0, 1]`` onto them in proportion to piece length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

GAP_TOL = 1e-12


def _pt(p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(2)


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _pt(self.a))
        object.__setattr__(self, "b", _pt(self.b))

    def point(self, u):
        u = np.asarray(u, float)[..., None]
        return self.a + u * (self.b - self.a)

    def velocity(self, u):
        u = np.asarray(u, float)
        return np.broadcast_to(self.b - self.a, u.shape + (2,)).copy()

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @property
    def start(self):
        return self.a

    @property
    def end(self):
        return self.b

    def reversed(self) -> "Segment":
        return Segment(self.b, self.a)

    def to_json(self) -> dict:
        return {"segment": [self.a.tolist(), self.b.tolist()]}


@dataclass(frozen=True)
class Arc:
    """Circular arc from angle ``theta0`` to ``theta1`` (CCW when increasing)."""

    center: np.ndarray
    radius: float
    theta0: float
    theta1: float

    def __post_init__(self):
        object.__setattr__(self, "center", _pt(self.center))
        if self.radius <= 0:
            raise ValueError("arc radius must be positive")

    def _angle(self, u):
        return self.theta0 + np.asarray(u, float) * (self.theta1 - self.theta0)

    def point(self, u):
        th = self._angle(u)
        return self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def velocity(self, u):
        th = self._angle(u)
        w = self.radius * (self.theta1 - self.theta0)
        return w * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    @property
    def length(self) -> float:
        return abs(self.theta1 - self.theta0) * self.radius

    @property
    def start(self):
        return self.point(0.0)

    @property
    def end(self):
        return self.point(1.0)

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.theta1, self.theta0)

    def to_json(self) -> dict:
        return {
            "arc": {
                "center": self.center.tolist(),
                "radius": self.radius,
                "angles": [self.theta0, self.theta1],
            }
        }


@dataclass(frozen=True)
class SampledCurve:
    """C^1 (cubic spline) interpolation of sample points, chord-length parametrised."""

    points: np.ndarray
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("sampled curve needs at least two 2-D points")
        chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
        if np.any(np.diff(chord) <= 0):
            raise ValueError("sampled curve has repeated points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_spline", CubicSpline(chord / chord[-1], pts))

    def point(self, u):
        return self._spline(np.asarray(u, float))

    def velocity(self, u):
        return self._spline(np.asarray(u, float), 1)

    @property
    def length(self) -> float:
        from scipy.integrate import quad

        return quad(lambda u: float(np.linalg.norm(self.velocity(u))), 0, 1, limit=200)[0]

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def reversed(self) -> "SampledCurve":
        return SampledCurve(self.points[::-1].copy())

    def to_json(self) -> dict:
        return {"sampled": self.points.tolist()}


def theta_interval(theta0: float, theta1: float) -> Segment:
    """A path on the circle chart: the angle runs from ``theta0`` to ``theta1``."""
    return Segment((theta0, 0.0), (theta1, 0.0))


class PathSpec:
    """Concatenation of curve pieces with matching endpoints."""

    def __init__(self, pieces):
        pieces = list(pieces)
        if not pieces:
            raise ValueError("a path needs at least one piece")
        for prev, nxt in zip(pieces, pieces[1:]):
            gap = float(np.linalg.norm(prev.end - nxt.start))
            if gap > GAP_TOL * max(1.0, float(np.abs(prev.end).max())):
                raise ValueError(f"path pieces do not join (gap {gap:.3g})")
        self.pieces = tuple(pieces)
        lengths = np.array([p.length for p in self.pieces])
        weights = lengths if lengths.sum() > 0 else np.ones(len(lengths))
        self._breaks = np.r_[0.0, np.cumsum(weights) / weights.sum()]

    @classmethod
    def segment(cls, a, b) -> "PathSpec":
        return cls([Segment(a, b)])

    @classmethod
    def polyline(cls, points) -> "PathSpec":
        pts = np.asarray(points, float)
        return cls([Segment(a, b) for a, b in zip(pts[:-1], pts[1:])])

    @classmethod
    def arc(cls, center, radius, theta0, theta1) -> "PathSpec":
        return cls([Arc(center, radius, theta0, theta1)])

    @classmethod
    def sampled(cls, points) -> "PathSpec":
        return cls([SampledCurve(points)])

    @classmethod
    def theta(cls, theta0, theta1) -> "PathSpec":
        return cls([theta_interval(theta0, theta1)])

    @property
    def start(self) -> np.ndarray:
        return self.pieces[0].start

    @property
    def end(self) -> np.ndarray:
        return self.pieces[-1].end

    @property
    def length(self) -> float:
        return float(sum(p.length for p in self.pieces))

    def is_closed(self, tol: float = 1e-10) -> bool:
        return bool(np.linalg.norm(self.start - self.end) <= tol)

    def __add__(self, other: "PathSpec") -> "PathSpec":
        return PathSpec(self.pieces + other.pieces)

    def reversed(self) -> "PathSpec":
        return PathSpec([p.reversed() for p in reversed(self.pieces)])

    def _locate(self, t):
        t = np.clip(np.asarray(t, float), 0.0, 1.0)
        k = np.clip(np.searchsorted(self._breaks, t, side="right") - 1, 0, len(self.pieces) - 1)
        lo, hi = self._breaks[k], self._breaks[k + 1]
        return t, k, (t - lo) / (hi - lo), hi - lo

    def point(self, t):
        t, k, u, _ = self._locate(t)
        out = np.empty(t.shape + (2,))
        for n, piece in enumerate(self.pieces):
            mask = k == n
            if np.any(mask):
                out[mask] = piece.point(u[mask])
        return out

    def velocity(self, t):
        t, k, u, width = self._locate(t)
        out = np.empty(t.shape + (2,))
        for n, piece in enumerate(self.pieces):
            mask = k == n
            if np.any(mask):
                out[mask] = piece.velocity(u[mask]) / np.asarray(width)[mask][..., None]
        return out

    def sample(self, n: int = 256) -> np.ndarray:
        """Points along the path including every piece boundary."""
        per = max(2, n // len(self.pieces))
        chunks = [p.point(np.linspace(0, 1, per)[:-1]) for p in self.pieces]
        return np.vstack(chunks + [self.end[None]])

    def to_json(self) -> list:
        return [p.to_json() for p in self.pieces]

    @classmethod
    def from_json(cls, data) -> "PathSpec":
        pieces = []
        for item in data:
            if "segment" in item:
                pieces.append(Segment(*item["segment"]))
            elif "polyline" in item:
                pts = np.asarray(item["polyline"], float)
                pieces.extend(Segment(a, b) for a, b in zip(pts[:-1], pts[1:]))
            elif "arc" in item:
                arc = item["arc"]
                pieces.append(Arc(arc["center"], arc["radius"], *arc["angles"]))
            elif "sampled" in item:
                pieces.append(SampledCurve(item["sampled"]))
            elif "theta" in item:
                pieces.append(theta_interval(*item["theta"]))
            else:
                raise ValueError(f"unknown path piece {sorted(item)}")
        return cls(pieces)

    def __repr__(self) -> str:
        return f"PathSpec({len(self.pieces)} pieces, {self.start.tolist()} -> {self.end.tolist()})"
