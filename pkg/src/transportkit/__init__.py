"""Parallel transport, curvature estimates and extension of parallel sections on planar charts."""

from .bundle import (
    ConnectionChart,
    FiberMetric,
    bound_G,
    bound_R,
    curvature,
    loop_holonomy,
    metric_defect,
    square_loop,
    transport,
)
from .exprfield import ParseError, ScalarField, parse
from .paths import PathSpec

__all__ = [
    "ConnectionChart",
    "FiberMetric",
    "ParseError",
    "PathSpec",
    "ScalarField",
    "bound_G",
    "bound_R",
    "curvature",
    "loop_holonomy",
    "metric_defect",
    "parse",
    "square_loop",
    "transport",
]
