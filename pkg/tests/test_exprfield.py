import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from transportkit.exprfield import ParseError, UnresolvedParameterError, as_field, parse
from transportkit.jets import DomainError, Jet, multi_indices

X, Y = sp.symbols("x y")

EXPRESSIONS = [
    "x^2 + 3*x*y - y",
    "exp(x^2 + y^2)",
    "4/(1 + x^2 + y^2)^2",
    "exp(x)*(2 + sin(y))",
    "log(2 + x^2) - cos(x*y)",
    "sqrt(1 + x^2 + y^4)",
    "atan(x - 2*y) / (3 + y^2)",
    "-x^2",
    "(x - y)^-2",
]


def _sympy(text):
    return sp.sympify(text.replace("^", "**"), locals={"x": X, "y": Y})


@pytest.mark.parametrize("text", EXPRESSIONS)
def test_jet_matches_symbolic_derivatives(text):
    f = parse(text)
    g = _sympy(text)
    p = (0.3, -0.7)
    jet = f.jet(p, 4)
    for i, j in multi_indices(4):
        want = float(sp.diff(g, X, i, Y, j).subs({X: p[0], Y: p[1]}))
        assert jet.partial(i, j) == pytest.approx(want, rel=1e-11, abs=1e-11)


@pytest.mark.parametrize("text", EXPRESSIONS)
def test_float_evaluation_is_vectorised(text):
    f = parse(text)
    g = sp.lambdify((X, Y), _sympy(text), "numpy")
    xs = np.linspace(-0.4, 0.9, 7)
    ys = np.linspace(0.2, -0.5, 7)
    np.testing.assert_allclose(f(xs, ys), g(xs, ys), rtol=1e-13)


def test_precedence_and_associativity():
    assert parse("2^3^2")(0, 0) == 2 ** 9
    assert parse("-2^2")(0, 0) == -4
    assert parse("8/4/2")(0, 0) == 1
    assert parse("1 - 2 - 3")(0, 0) == -4
    assert parse("2*pi")(0, 0) == pytest.approx(2 * math.pi)
    assert parse("1.5e-3*x")(2, 0) == pytest.approx(3e-3)


@pytest.mark.parametrize(
    "text, offset",
    [("exp(x*+y)", 5), ("x + ", 2), ("(x + y", 6), ("x $ y", 2), ("foo(x)", 0), ("x^y", 1),
     ("sin", 0), ("x y", 2)],
)
def test_parse_errors_report_byte_offset(text, offset):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert info.value.offset == offset
    assert f"byte offset {offset}" in str(info.value)


def test_offset_counts_bytes_not_characters():
    with pytest.raises(ParseError) as info:
        parse("x + é")
    assert info.value.offset == 4


def test_parameters():
    f = parse("b*x", parameters={"b"})
    assert f(2.0, 0.0, env={"b": 3.0}) == 6.0
    assert f.bind(b=0.5)(2.0, 0.0) == 1.0
    with pytest.raises(UnresolvedParameterError):
        f(1.0, 0.0)
    with pytest.raises(ParseError):
        parse("c*x", parameters={"b"})


def test_domain_errors():
    with pytest.raises(DomainError):
        parse("log(x)").jet((-1.0, 0.0), 2)
    with pytest.raises(DomainError):
        parse("sqrt(x)").jet((0.0, 0.0), 1)
    with pytest.raises(DomainError):
        parse("1/x").jet((0.0, 0.0), 0)


def test_field_arithmetic():
    f = as_field("x") * 2 + as_field(1.0) - parse("y") / 2
    assert f(1.0, 4.0) == pytest.approx(1.0)
    assert (-f)(1.0, 4.0) == pytest.approx(-1.0)


def test_jet_product_rule():
    x = Jet.variable(0.4, 0, 3)
    y = Jet.variable(-1.1, 1, 3)
    u, v = x * x * y, y + 2 * x
    lhs = (u * v).diff(0)
    rhs = u.diff(0) * v.truncate(2) + u.truncate(2) * v.diff(0)
    for i, j in multi_indices(2):
        assert lhs.partial(i, j) == pytest.approx(rhs.partial(i, j))


small = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(small, small)
def test_jet_taylor_predicts_nearby_values(x0, y0):
    f = parse("exp(x)*(2 + sin(y)) + x^3*y")
    jet = f.jet((x0, y0), 5)
    h = np.array([1e-2, -7e-3])
    taylor = sum(jet.taylor(i, j) * h[0] ** i * h[1] ** j for i, j in multi_indices(5))
    assert taylor == pytest.approx(f(x0 + h[0], y0 + h[1]), rel=1e-11, abs=1e-11)
