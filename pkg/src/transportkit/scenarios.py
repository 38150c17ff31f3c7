"""Declarative scenarios: JSON files that bind fields, geometry and checks.

A scenario has an ``id``, a ``kind`` and kind-specific bindings.  Running it
produces a dictionary of named quantities; each entry of ``checks`` compares
one quantity against a threshold and names the property it guards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import conformal, estimate, extend, kostant, regions
from .bundle import (
    ConnectionChart,
    FiberMetric,
    curvature,
    loop_holonomy,
    rectangle_grid,
    square_loop,
    transport,
)
from .exprfield import ParseError, ScalarField, parse
from .ode import DEFAULT_TOL
from .paths import PathSpec

KINDS = ("transport", "holonomy", "estimate", "region", "extend", "kostant", "conformal-demo")
DEFAULT_SEED = 20240101

_expr_matrix = {"type": "array", "items": {"type": "array", "items": {"type": ["string", "number"]}}}
_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["id", "kind"],
    "properties": {
        "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "kind": {"enum": list(KINDS)},
        "description": {"type": "string"},
        "seed": {"type": "integer"},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "connection": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["matrix", "flat", "circle", "magnetic", "kostant"]},
                "A_x": _expr_matrix,
                "A_y": _expr_matrix,
                "A_theta": _expr_matrix,
                "gluing": {"type": "array"},
                "theta_cut": {"type": "number"},
                "rank": {"type": "integer", "minimum": 1},
                "B": {"type": "number"},
                "lambda": {"type": "string"},
                "chart": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
            },
        },
        "metric": {"type": "object"},
        "path": {"type": "array"},
        "xi0": {"type": "array", "items": {"type": "number"}},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "quantity", "op"],
                "properties": {
                    "name": {"type": "string"},
                    "quantity": {"type": "string"},
                    "op": {"enum": ["le", "ge", "close", "true", "false"]},
                    "value": {"type": "number"},
                    "tol": {"type": "number", "exclusiveMinimum": 0},
                    "rtol": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}


class ScenarioError(ValueError):
    """The scenario file is malformed or references something undefined."""


@dataclass
class Scenario:
    data: dict
    source: str | None = None

    @property
    def id(self) -> str:
        return self.data["id"]

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def checks(self) -> list[dict]:
        return self.data.get("checks", [])


@dataclass
class Report:
    scenario: str
    kind: str
    seed: int
    tol: float
    quantities: dict
    checks: list[dict]
    artifacts: dict = field(default_factory=dict)  # file name -> text

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [c["name"] for c in self.checks if not c["passed"]]

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "seed": self.seed,
            "tol": self.tol,
            "quantities": self.quantities,
            "checks": self.checks,
            "artifacts": sorted(self.artifacts),
            "status": "pass" if self.passed else "fail",
        }


def load(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from None
    return validate(data, str(path))


def validate(data: dict, source: str | None = None) -> Scenario:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {where}: {exc.message}") from None
    scenario = Scenario(data, source)
    # build every expression once so bad input fails validation, not the run
    _Bindings(scenario, seed=DEFAULT_SEED, tol=DEFAULT_TOL).prepare()
    return scenario


# ---------------------------------------------------------------------------
# bindings


class _Bindings:
    def __init__(self, scenario: Scenario, seed: int, tol: float):
        self.s = scenario
        self.d = scenario.data
        self.params = dict(self.d.get("params", {}))
        self.seed = seed
        self.tol = tol

    def expr(self, text, where: str) -> ScalarField:
        if isinstance(text, (int, float)):
            text = repr(float(text))
        try:
            return parse(text, parameters=self.params.keys(), env=self.params)
        except ParseError as exc:
            raise ScenarioError(f"{where}: {exc}: {text!r}") from None

    def matrix(self, rows, where: str):
        return [[self.expr(e, f"{where}[{i}][{j}]") for j, e in enumerate(row)] for i, row in enumerate(rows)]

    def need(self, key: str):
        if key not in self.d:
            raise ScenarioError(f"scenario {self.s.id!r} of kind {self.s.kind!r} needs {key!r}")
        return self.d[key]

    def connection(self, spec=None) -> ConnectionChart:
        spec = spec or self.need("connection")
        kind = spec["type"]
        chart = spec.get("chart")
        try:
            if kind == "flat":
                return ConnectionChart.flat(spec.get("rank", 1), chart)
            if kind == "matrix":
                ax = self.matrix(spec["A_x"], "connection.A_x")
                ay = self.matrix(spec["A_y"], "connection.A_y") if "A_y" in spec else None
                return ConnectionChart(ax, ay, chart=chart, env=self.params)
            if kind == "circle":
                a = self.matrix(spec["A_theta"], "connection.A_theta")
                return ConnectionChart.circle(a, spec.get("gluing"), spec.get("theta_cut", 0.0))
            if kind == "magnetic":
                return magnetic(spec.get("B", 1.0), chart)
            if kind == "kostant":
                return kostant.KostantConnection(self.metric_lambda(spec), chart)
        except KeyError as exc:
            raise ScenarioError(f"connection of type {kind!r} needs {exc}") from None
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"connection: {exc}") from None
        raise ScenarioError(f"unknown connection type {kind!r}")

    def metric_lambda(self, spec=None) -> kostant.IsothermalMetric:
        spec = spec or self.d.get("connection", {})
        text = spec.get("lambda", self.d.get("lambda"))
        if text is None:
            raise ScenarioError("a conformal factor 'lambda' is required")
        return kostant.IsothermalMetric(self.expr(text, "lambda"), self.params)

    def fiber_metric(self, rank: int) -> FiberMetric:
        spec = self.d.get("metric")
        if spec is None or spec.get("identity"):
            return FiberMetric.identity(rank)
        return FiberMetric(self.matrix(spec["g"], "metric.g"), self.params)

    def path(self, data, where: str = "path") -> PathSpec:
        try:
            return PathSpec.from_json(data)
        except (ValueError, TypeError, KeyError) as exc:
            raise ScenarioError(f"{where}: {exc}") from None

    def removed(self, data) -> regions.RemovedSet:
        try:
            return regions.RemovedSet.from_json(data)
        except ValueError as exc:
            raise ScenarioError(f"removed set: {exc}") from None

    def prepare(self):
        """Resolve every binding the kind uses (raises ScenarioError on bad input)."""
        kind = self.s.kind
        if "connection" in self.d:
            self.connection()
        if "metric" in self.d and "connection" in self.d:
            self.fiber_metric(self.connection().rank)
        if "path" in self.d:
            self.path(self.d["path"])
        if kind == "kostant" or self.d.get("connection", {}).get("type") == "kostant":
            self.metric_lambda()
        oracle = self.d.get("oracle")
        if oracle:
            for i, piece in enumerate(oracle.get("pieces", [])):
                self.expr(piece["positive"], f"oracle.pieces[{i}].positive")
                for j, e in enumerate(piece["section"]):
                    self.expr(e, f"oracle.pieces[{i}].section[{j}]")
            for j, e in enumerate(oracle.get("field", [])):
                self.expr(e, f"oracle.field[{j}]")
        for key in ("removed", "F"):
            if key in self.d:
                self.removed(self.d[key])
        for c in self.s.checks:
            if c["op"] in ("le", "ge", "close") and "value" not in c:
                raise ScenarioError(f"check {c['name']!r} needs a 'value'")


def magnetic(B: float = 1.0, chart=None) -> ConnectionChart:
    """Rank-2 connection with constant curvature ``B J``, ``J`` the quarter turn."""
    b = float(B) / 2
    ax = [["0", repr(b) + "*y"], [repr(-b) + "*y", "0"]]
    ay = [["0", repr(-b) + "*x"], [repr(b) + "*x", "0"]]
    return ConnectionChart(ax, ay, chart=chart)


# ---------------------------------------------------------------------------
# runners


def _matrix_quantities(name: str, M) -> dict:
    M = np.atleast_2d(np.asarray(M, float))
    return {f"{name}_{i}{j}": float(M[i, j]) for i in range(M.shape[0]) for j in range(M.shape[1])}


def _run_transport(b: _Bindings) -> tuple[dict, dict]:
    conn = b.connection()
    path = b.path(b.need("path"))
    res = transport(conn, path, b.need("xi0"), b.tol)
    q = {f"end_{i}": float(v) for i, v in enumerate(res.end_value)}
    q.update(steps=res.steps, est_error=res.est_error)
    if "expected" in b.d:
        q["error"] = float(np.max(np.abs(res.end_value - np.asarray(b.d["expected"], float))))
    return q, {}


def _run_holonomy(b: _Bindings) -> tuple[dict, dict]:
    conn = b.connection()
    rec = extend.holonomy_obstruction(conn, b.path(b.need("path")), b.tol)
    q = _matrix_quantities("holonomy", rec.holonomy)
    q.update(obstructed=rec.obstructed, fixed_vector=rec.fixed_vector)
    if "expected" in b.d:
        exp = np.atleast_2d(np.asarray(b.d["expected"], float))
        q["relative_error"] = float(np.linalg.norm(rec.holonomy - exp) / np.linalg.norm(exp))
    loops = b.d.get("small_loops")
    if loops:
        center = loops["center"]
        R = curvature(conn, center)
        errs = []
        for h in loops["sides"]:
            H = loop_holonomy(conn, square_loop(center, h), b.tol)
            errs.append(float(np.linalg.norm((np.eye(conn.rank) - H) / h ** 2 - R)))
        orders = [float(np.log2(e0 / e1)) for e0, e1 in zip(errs, errs[1:])]
        q["curvature_errors"] = errs
        q["observed_order"] = min(orders)
    return q, {}


def _homotopy(b: _Bindings) -> estimate.HomotopyGrid:
    spec = b.need("homotopy")
    kind = spec.get("type")
    if kind == "unit-square-sweep":
        return estimate.unit_square_sweep()
    if kind == "linear":
        return estimate.HomotopyGrid.linear(b.path(spec["path0"], "path0"), b.path(spec["path1"], "path1"))
    if kind == "tube":
        dec = regions.segment_tube_decomposition(spec["I"], spec["p0"], spec["p"], spec["delta"])
        if not dec.items:
            raise ScenarioError("tube homotopy: the segment misses I")
        return dec.items[0].homotopy
    raise ScenarioError(f"unknown homotopy type {kind!r}")


def _run_estimate(b: _Bindings) -> tuple[dict, dict]:
    conn = b.connection()
    g = b.fiber_metric(conn.rank)
    H = _homotopy(b)
    rec = estimate.transport_gap(conn, g, H, b.need("xi0"), b.tol)
    q = {k: v for k, v in rec.as_row(b.s.id).items() if k != "scenario"}
    q["holds"] = rec.holds
    if b.d.get("norm_growth"):
        q["norm_ratio"] = estimate.norm_growth_check(conn, g, H, b.need("xi0"), b.tol)
    return q, {f"{b.s.id}.csv": estimate.gap_csv([rec.as_row(b.s.id)])}


def _decomposition(b: _Bindings):
    spec = b.need("region")
    if spec["construction"] == "tube":
        return regions.segment_tube_decomposition(spec["I"], spec["p0"], spec["p"], spec["delta"])
    if spec["construction"] == "disk-cover":
        F = b.removed(spec["F"])
        return regions.disk_cover_decomposition(F, spec["p0"], spec["p"], spec["eps"])
    raise ScenarioError(f"unknown region construction {spec['construction']!r}")


def _run_region(b: _Bindings) -> tuple[dict, dict]:
    spec = b.need("region")
    G = float(spec.get("G", 0.0))
    if spec["construction"] == "choose-delta":
        delta = regions.choose_delta(spec["I"], spec["p0"], spec["p"], G, spec["eps"])
        dec = regions.segment_tube_decomposition(spec["I"], spec["p0"], spec["p"], delta)
        q = {"delta": delta, "budget": regions.rplus_budget(dec, G), "eps": float(spec["eps"])}
    else:
        dec = _decomposition(b)
        q = {}
    q.update(items=len(dec.items), r_budget=regions.r_budget(dec), rplus_budget=regions.rplus_budget(dec, G),
             L_gamma=dec.L_gamma, cover_radius=dec.radius)
    for name, ok in dec.validate().items():
        q[f"valid_{name}"] = ok
    return q, {f"{b.s.id}.decomposition.json": dumps(dec.to_json())}


def _oracle(b: _Bindings, conn) -> extend.SectionOracle:
    spec = b.need("oracle")
    margin = float(spec.get("margin", 1e-9))
    if spec["type"] == "killing":
        m = b.metric_lambda()
        X = [b.expr(e, "oracle.field") for e in spec["field"]]
        sigma = kostant.killing_to_section(X, m)
        removed = b.removed(spec["removed"])
        return extend.SectionOracle(lambda q: removed.distance(q) > margin, sigma.values, margin)
    if spec["type"] == "piecewise":
        pieces = [(b.expr(p["positive"], "oracle.positive"),
                   [b.expr(e, "oracle.section") for e in p["section"]]) for p in spec["pieces"]]

        def which(q):
            for cond, sec in pieces:
                if cond(q[0], q[1]) > margin:
                    return sec
            return None

        return extend.SectionOracle(
            lambda q: which(np.asarray(q, float)) is not None,
            lambda q: np.array([f(q[0], q[1]) for f in which(np.asarray(q, float))]),
            margin,
        )
    raise ScenarioError(f"unknown oracle type {spec['type']!r}")


def _run_extend(b: _Bindings) -> tuple[dict, dict]:
    conn = b.connection()
    g = b.fiber_metric(conn.rank)
    oracle = _oracle(b, conn)
    p0 = np.asarray(b.need("p0"), float)
    gspec = b.need("grid")
    grid = rectangle_grid(gspec["bounds"], gspec["n"])
    inside = np.array([oracle.in_domain(q) for q in grid])
    values = extend.radial_extension(conn, p0, oracle(p0), grid, b.tol)
    q = {"agreement_defect": extend.agreement_defect(conn, g, oracle, p0, grid[inside], b.tol),
         "grid_points": int(len(grid)), "samples_in_U": int(inside.sum())}
    if "expected_field" in b.d:
        X = [b.expr(e, "expected_field") for e in b.d["expected_field"]]
        want = np.stack([f(grid[:, 0], grid[:, 1]) for f in X], -1)
        q["field_error"] = float(np.max(np.abs(values[:, :len(X)] - want)))
    if "codim2" in b.d:
        spec = b.d["codim2"]
        F = b.removed(spec["F"])
        res = extend.codim2_extension(conn, oracle, F, spec["p"], b.tol)
        q["codim2_defect"] = res.defect
        if "expected" in spec:
            q["codim2_error"] = float(np.max(np.abs(res.value - np.asarray(spec["expected"], float))))
    rows = [",".join(["x", "y"] + [f"c{i + 1}" for i in range(conn.rank)] + ["defect"])]
    for pt, val, ok in zip(grid, values, inside):
        d = float(g.norm(pt, val - oracle(pt))) if ok else float("nan")
        rows.append(",".join(f"{v:.12g}" for v in (*pt, *val, d)))
    artifacts = {f"{b.s.id}.grid.csv": "\n".join(rows) + "\n"}
    artifacts[f"{b.s.id}.svg"] = quiver_svg(grid, values[:, :2], title=b.s.id)
    return q, artifacts


def _random_points(b: _Bindings, spec) -> np.ndarray:
    rng = np.random.default_rng(b.seed)
    n = spec.get("count", 10)
    if "annulus" in spec:
        r0, r1 = spec["annulus"]
        r = np.sqrt(rng.uniform(r0 ** 2, r1 ** 2, n))
        th = rng.uniform(0, 2 * np.pi, n)
        return np.stack([r * np.cos(th), r * np.sin(th)], -1)
    x0, x1, y0, y1 = spec.get("box", [-1, 1, -1, 1])
    return np.stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)], -1)


def _run_kostant(b: _Bindings) -> tuple[dict, dict]:
    m = b.metric_lambda()
    pts = _random_points(b, b.d.get("points", {}))
    h = float(b.d.get("h", 1e-3))
    devs = np.array([kostant.lemma_check(m, p, h) for p in pts])
    half = np.array([kostant.lemma_check(m, p, h / 2) for p in pts])
    q = {"max_deviation": float(devs.max()), "points": int(len(pts))}
    resolved = devs > kostant.ORDER_FLOOR
    q["observed_order"] = float(np.min(np.log2(devs[resolved] / half[resolved]))) if resolved.any() else None
    if "killing" in b.d:
        sigma = kostant.killing_to_section([b.expr(e, "killing") for e in b.d["killing"]], m, pts)
        q["skew_defect"] = sigma.skew_defect
        q["parallel_defect"] = kostant.parallel_defect(sigma, m, pts)
        if b.d.get("kernel_line"):
            cos = []
            for p in pts:
                v = sigma.values(p)
                cos.append(abs(float(v @ kostant.kernel_line(m, p))) / float(np.linalg.norm(v)))
            q["min_abs_cos"] = min(cos)
    return q, {}


def _run_conformal(b: _Bindings) -> tuple[dict, dict]:
    r, s = b.need("r"), b.need("s")
    gspec = b.need("grid")
    rep = conformal.conformal_demo(r, s, b.d.get("cut", [r, s]), rectangle_grid(gspec["bounds"], gspec["n"]),
                                   offset=b.d.get("offset", 1e-3))
    q = {k: v for k, v in rep.to_json().items() if k != "jumps"}
    q["jumps"] = rep.jumps
    if "annulus_inner" in b.d:
        q["inverse_max"] = conformal.inverse_field_max(b.d["annulus_inner"])
    return q, {}


RUNNERS = {
    "transport": _run_transport,
    "holonomy": _run_holonomy,
    "estimate": _run_estimate,
    "region": _run_region,
    "extend": _run_extend,
    "kostant": _run_kostant,
    "conformal-demo": _run_conformal,
}


def _evaluate(check: dict, quantities: dict) -> dict:
    name, key, op = check["name"], check["quantity"], check["op"]
    out = {"name": name, "quantity": key, "op": op}
    if key not in quantities:
        out.update(passed=False, detail=f"quantity {key!r} was not produced")
        return out
    value = quantities[key]
    out["observed"] = value
    if op in ("true", "false"):
        ok = bool(value) is (op == "true")
    elif value is None:
        ok = False
    else:
        target = float(check["value"])
        out["value"] = target
        if op == "le":
            ok = value <= target
        elif op == "ge":
            ok = value >= target
        else:
            tol = check.get("tol", 0.0) + check.get("rtol", 0.0) * abs(target)
            ok = abs(value - target) <= tol
    out["passed"] = bool(ok)
    return out


def run_scenario(scenario: Scenario, seed: int | None = None, tol: float | None = None) -> Report:
    """Run one validated scenario; deterministic for a given seed and tolerance."""
    data = scenario.data
    seed = seed if seed is not None else data.get("seed", DEFAULT_SEED)
    tol = tol if tol is not None else data.get("tol", DEFAULT_TOL)
    b = _Bindings(scenario, seed, tol)
    quantities, artifacts = RUNNERS[scenario.kind](b)
    quantities = _plain(quantities)
    checks = [_evaluate(c, quantities) for c in scenario.checks]
    return Report(scenario.id, scenario.kind, seed, tol, quantities, checks, artifacts)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    return value


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# bundled corpus


def bundled_dir():
    return resources.files("transportkit") / "scenario_files"


def bundled() -> dict[str, Path]:
    out = {}
    for entry in sorted(bundled_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = entry
    return out


def load_bundled(name: str) -> Scenario:
    files = bundled()
    if name not in files:
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return load(files[name])


# ---------------------------------------------------------------------------
# SVG


def quiver_svg(points, vectors, title: str = "", size: int = 480) -> str:
    """Static SVG arrow plot; arrows are scaled so the longest spans one grid cell."""
    pts = np.asarray(points, float)
    vec = np.asarray(vectors, float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pad = 20
    scale = (size - 2 * pad) / span
    cell = float(np.min(span)) / max(np.sqrt(len(pts)) - 1, 1)
    longest = float(np.max(np.linalg.norm(vec, axis=1))) or 1.0
    k = 0.9 * cell / longest

    def screen(p):
        return pad + (p[0] - lo[0]) * scale[0], size - pad - (p[1] - lo[1]) * scale[1]

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f"<title>{title}</title>",
             '<g stroke="black" stroke-width="1" fill="none">']
    for p, v in zip(pts, vec):
        if not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0:
            continue
        x0, y0 = screen(p)
        x1, y1 = screen(p + k * v)
        lines.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}"/>')
        ang = np.arctan2(y1 - y0, x1 - x0)
        for da in (2.6, -2.6):
            hx, hy = x1 + 4 * np.cos(ang + da), y1 + 4 * np.sin(ang + da)
            lines.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{hx:.2f}" y2="{hy:.2f}"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)
