"""Radial extension of parallel sections and checks against partial sections."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bundle import (
    ConnectionChart,
    FiberMetric,
    bound_G,
    bound_R,
    disk_grid,
    loop_holonomy,
    transport,
    transport_curves,
)
from .ode import DEFAULT_TOL
from .paths import PathSpec
from .regions import RegionDecomposition, RemovedSet, rplus_budget

N_RAYS = 32
RAY_ANGLE_MARGIN = 1e-6
Q_OFFSET_CAP = 0.1
AGREEMENT_THRESHOLD = 1e-6
BOUND_SLACK = 1e-6


class DomainViolation(ValueError):
    """A section oracle was queried outside its domain."""


@dataclass
class SectionOracle:
    """A section known only on an open set ``U``.

    ``margin`` is the distance to the removed set that callers keep when
    sampling ``U``.
    """

    in_domain: Callable
    value: Callable
    margin: float = 0.0

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, float)
        if not self.in_domain(q):
            raise DomainViolation(f"section queried outside its domain at {q.tolist()}")
        return np.asarray(self.value(q), float)

    def values(self, points) -> np.ndarray:
        return np.stack([self(q) for q in np.asarray(points, float).reshape(-1, 2)])


def complement_oracle(value, removed: RemovedSet, margin: float = 1e-9) -> SectionOracle:
    """Restriction of a global section ``value`` to the complement of ``removed``."""
    return SectionOracle(lambda q: removed.distance(q) > margin, value, margin)


def radial_extension(conn: ConnectionChart, p0, xi0, targets, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Transport ``xi0`` along the straight segments ``p0 -> target`` (batched)."""
    p0 = np.asarray(p0, float).reshape(2)
    targets = np.asarray(targets, float).reshape(-1, 2)
    xi0 = np.asarray(xi0, float)
    if len(targets) == 0:
        return np.zeros((0, conn.rank))
    conn.check_points(np.vstack([p0[None], targets]))
    step = targets - p0

    def point(t):
        return p0 + t * step

    def velocity(t):
        return step

    X0 = np.broadcast_to(xi0[:, None], (len(targets), conn.rank, 1)).copy()
    return transport_curves(conn, point, velocity, X0, tol=tol).y[..., 0]


def agreement_defect(conn: ConnectionChart, g: FiberMetric, oracle: SectionOracle, p0, sample,
                     tol: float = DEFAULT_TOL) -> float:
    """Largest g-distance between the radial extension from ``p0`` and the oracle on ``sample``."""
    sample = np.asarray(sample, float).reshape(-1, 2)
    for q in sample:
        if not oracle.in_domain(q):
            raise DomainViolation(f"sample point {q.tolist()} lies outside the oracle's domain")
    ext = radial_extension(conn, p0, oracle(p0), sample, tol)
    return float(np.max(g.norm(sample, ext - oracle.values(sample))))


@dataclass
class Codim2Result:
    value: np.ndarray
    q: np.ndarray
    eps: float
    defect: float
    rays_used: int
    rays_skipped: int

    @property
    def verified(self) -> bool:
        return self.defect <= AGREEMENT_THRESHOLD


def codim2_extension(conn: ConnectionChart, oracle: SectionOracle, F, p, tol: float = DEFAULT_TOL,
                     g: FiberMetric | None = None, n_rays: int = N_RAYS) -> Codim2Result:
    """Value at a removed point ``p`` by radial transport from a nearby base point ``q``.

    ``q = p + (eps, 0)`` with ``eps`` half the distance from ``p`` to the rest of
    ``F`` (at most 0.1).  The extension is checked against the oracle at points
    of the ball of radius ``1.5 eps`` about ``q`` along ``n_rays`` rays, skipping
    rays that run into ``F``.
    """
    pts = np.asarray(F.extreme_points() if isinstance(F, RemovedSet) else F, float).reshape(-1, 2)
    p = np.asarray(p, float).reshape(2)
    if not np.any(np.all(pts == p, axis=1)):
        raise ValueError("p must be one of the removed points")
    others = pts[np.any(pts != p, axis=1)]
    eps = Q_OFFSET_CAP if len(others) == 0 else min(
        Q_OFFSET_CAP, 0.5 * float(np.min(np.linalg.norm(others - p, axis=1))))
    q = p + np.array([eps, 0.0])
    if not oracle.in_domain(q):
        raise ValueError("auxiliary base point is not in the oracle's domain")
    g = g or FiberMetric.identity(conn.rank)
    xi_q = oracle(q)

    radius = 1.5 * eps
    f_dirs = [np.arctan2(*(f - q)[::-1]) for f in pts if np.linalg.norm(f - q) <= radius]
    targets, skipped = [], 0
    for th in 2 * np.pi * np.arange(n_rays) / n_rays:
        gap = [abs((th - fd + np.pi) % (2 * np.pi) - np.pi) for fd in f_dirs]
        if gap and min(gap) <= RAY_ANGLE_MARGIN:
            skipped += 1
            continue
        u = np.array([np.cos(th), np.sin(th)])
        for frac in (1 / 3, 2 / 3, 1.0):
            x = q + frac * radius * u
            if oracle.in_domain(x) and (oracle.margin == 0 or
                                        np.min(np.linalg.norm(pts - x, axis=1)) >= oracle.margin):
                targets.append(x)
    targets = np.array(targets)
    ext = radial_extension(conn, q, xi_q, np.vstack([p[None], targets]), tol)
    defect = float(np.max(g.norm(targets, ext[1:] - oracle.values(targets)))) if len(targets) else 0.0
    return Codim2Result(ext[0], q, eps, defect, n_rays - skipped, skipped)


@dataclass
class ObstructionRecord:
    holonomy: np.ndarray
    obstructed: bool
    fixed_vector: bool  # 1 is an eigenvalue: some nonzero section survives the loop


def holonomy_obstruction(conn: ConnectionChart, loop: PathSpec, tol: float = DEFAULT_TOL) -> ObstructionRecord:
    H = loop_holonomy(conn, loop, tol)
    gap = float(np.linalg.norm(H - np.eye(conn.rank), ord=2))
    eig = np.linalg.eigvals(H)
    fixed = bool(np.min(np.abs(eig - 1.0)) <= 100 * tol)
    return ObstructionRecord(H, gap > 100 * tol, fixed)


@dataclass
class TelescopingRecord:
    gap: float
    bound: float
    chain: list[float] = field(default_factory=list)  # gap at each b_i, then at p
    R: float = 0.0
    G: float = 0.0
    budget: float = 0.0
    oracle_mismatch: float | None = None

    @property
    def holds(self) -> bool:
        return self.gap <= self.bound * (1 + BOUND_SLACK) + 1e-300


def telescoping_gap(conn: ConnectionChart, g: FiberMetric, dec: RegionDecomposition, oracle,
                    xi0, tol: float = DEFAULT_TOL, K_samples: int = 64) -> TelescopingRecord:
    """Gap between straight and detour transports of ``xi0`` along a decomposition.

    At each exit point ``b_i`` (and at ``p``) the straight radial transport is
    compared with the transport along the detour path, which is what a
    parallel section on ``U`` would give.  The final gap is bounded by
    ``R exp(G |p - p0| / 2) |xi0|_g rplus_budget(dec, G)`` with ``R`` and ``G``
    taken over the compact disk ``K_p``.
    """
    xi0 = np.asarray(xi0, float)
    if oracle is not None:
        sigma0 = oracle(dec.p0)
        if np.linalg.norm(sigma0 - xi0) > 1e-12 * max(1.0, np.linalg.norm(xi0)):
            raise ValueError("xi0 does not match the oracle at p0")
    K = disk_grid(dec.K_center, dec.K_radius, K_samples)
    R = bound_R(conn, g, K)
    G = bound_G(conn, g, K)
    budget = rplus_budget(dec, G)
    base = float(g.norm(dec.p0, xi0))
    bound = R * np.exp(0.5 * G * np.linalg.norm(dec.p - dec.p0)) * base * budget

    checkpoints = [it.b for it in dec.items] + [dec.p]
    straight = radial_extension(conn, dec.p0, xi0, np.array(checkpoints), tol)
    chain, sigma, cur = [], xi0, dec.p0
    for k, item in enumerate(dec.items):
        if np.linalg.norm(item.a - cur) > 0:
            sigma = transport(conn, PathSpec.segment(cur, item.a), sigma, tol).end_value
        sigma = transport(conn, item.gamma, sigma, tol).end_value
        cur = item.b
        chain.append(float(g.norm(cur, straight[k] - sigma)))
    if np.linalg.norm(dec.p - cur) > 0:
        sigma = transport(conn, PathSpec.segment(cur, dec.p), sigma, tol).end_value
    final = float(g.norm(dec.p, straight[-1] - sigma))
    chain.append(final)
    mismatch = None
    if oracle is not None and oracle.in_domain(dec.p):
        mismatch = float(g.norm(dec.p, oracle(dec.p) - sigma))
    return TelescopingRecord(final, float(bound), chain, R, G, budget, mismatch)
