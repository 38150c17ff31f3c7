"""Adaptive Dormand-Prince 5(4) integration for batches of linear ODEs.

The transport equations solved here are linear, so the local error of each
batch member is measured relative to that member's own size.  A step of
length ``h`` is accepted when the worst relative error over the batch is at
most ``tol * h / span``; the accumulated estimate therefore stays below
``tol`` over the whole interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

DEFAULT_TOL = 1e-9
MAX_STEPS = 1_000_000


class TransportError(RuntimeError):
    """Numerical transport failed."""


class StepUnderflowError(TransportError):
    pass


@dataclass
class Solution:
    y: np.ndarray  # state at the final time
    steps: int
    est_error: float
    ys: np.ndarray | None = None  # states at the requested output times


def _member_norm(y: np.ndarray) -> np.ndarray:
    if y.ndim == 1:
        return np.abs(y)
    return np.abs(y).reshape(y.shape[0], -1).max(axis=1)


def integrate(fun, y0, t0: float = 0.0, t1: float = 1.0, tol: float = DEFAULT_TOL,
              t_eval=None, max_steps: int = MAX_STEPS, span: float | None = None,
              breaks=()) -> Solution:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1``.

    ``y0`` has shape ``(batch, ...)``; errors are normalised per batch member.
    ``t_eval`` (increasing, inside ``[t0, t1]``) requests states at extra
    times; steps are clipped to land on them exactly.  ``breaks`` are times
    where ``fun`` may be discontinuous (kinks of a path); steps stop there too.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.array(y0, dtype=float)
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0) if span is None else span
    if span == 0:
        ys = None if t_eval is None else np.repeat(y[None], len(t_eval), axis=0)
        return Solution(y, 0, 0.0, ys)

    stops = {t1} if t_eval is None else set(float(t) for t in t_eval) | {t1}
    kinks = {float(b) for b in breaks if direction * (b - t0) > 0 and direction * (t1 - b) > 0}
    stops |= kinks
    stops = sorted(stops, reverse=direction < 0)
    outputs = {}
    if t_eval is not None and t0 in set(float(t) for t in t_eval):
        outputs[t0] = y.copy()

    h = span / 16
    t = t0
    steps = 0
    est = 0.0
    k1 = fun(t, y)
    floor = np.finfo(float).tiny
    for stop in stops:
        while direction * (stop - t) > 1e-15 * span:
            h = min(h, abs(stop - t))
            if h < 1e-14 * span:
                raise StepUnderflowError(f"step size underflow at t={t:.6g}")
            if steps >= max_steps:
                raise TransportError(f"exceeded {max_steps} steps")
            dt = direction * h
            times = t + _C * dt
            if stop in kinks:
                # evaluate on the near side of a kink only
                times = np.where(direction * (times - stop) >= 0, np.nextafter(stop, t), times)
            ks = [k1]
            for i in range(1, 7):
                incr = sum(a * k for a, k in zip(_A[i], ks))
                ks.append(fun(times[i], y + dt * incr))
            y_new = y + dt * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
            err_vec = dt * sum(e * k for e, k in zip(_E, ks))
            if not np.all(np.isfinite(y_new)):
                raise TransportError("non-finite state during transport")
            scale = np.maximum(np.maximum(_member_norm(y), _member_norm(y_new)), floor)
            err = float(np.max(_member_norm(err_vec) / scale))
            allowed = tol * h / span
            if err <= allowed:
                t = stop if h == abs(stop - t) else t + dt
                y = y_new
                k1 = ks[6]
                est += err
                steps += 1
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * (allowed / err) ** 0.2))
            h *= factor
        outputs[stop] = y.copy()
        if stop in kinks:
            k1 = fun(t, y)
    ys = None
    if t_eval is not None:
        ys = np.stack([outputs[float(te)] for te in t_eval])
    return Solution(y, steps, est, ys)
