"""Truncated bivariate Taylor jets.

A :class:`Jet` carries every partial derivative of a scalar function of
``(x, y)`` up to a fixed total order, as Taylor coefficients
``c[i, j] = (d^{i+j} f / dx^i dy^j) / (i! j!)``.  Arithmetic on jets is
forward-mode differentiation: products are truncated convolutions and
elementary functions are applied by composing their univariate Taylor
expansion with the jet's non-constant part.

Coefficients may carry trailing batch dimensions, so one jet can describe the
same field at many points at once.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

MAX_ORDER = 6


class DomainError(ValueError):
    """An elementary function was evaluated outside its domain."""


@lru_cache(maxsize=None)
def multi_indices(order: int) -> tuple[tuple[int, int], ...]:
    """Multi-indices ``(i, j)`` with ``i + j <= order`` in graded order."""
    return tuple((k - j, j) for k in range(order + 1) for j in range(k + 1))


@lru_cache(maxsize=None)
def _position(order: int) -> dict[tuple[int, int], int]:
    return {ij: n for n, ij in enumerate(multi_indices(order))}


@lru_cache(maxsize=None)
def _product_pairs(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = _position(order)
    left, right, out = [], [], []
    for (i, j), a in pos.items():
        for (k, l), b in pos.items():
            if i + j + k + l <= order:
                left.append(a)
                right.append(b)
                out.append(pos[(i + k, j + l)])
    return np.array(left), np.array(right), np.array(out)


def _as_batch(value) -> np.ndarray:
    return np.asarray(value, dtype=float)


class Jet:
    """Taylor jet of total order ``order`` with optional batch shape."""

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs: np.ndarray, order: int):
        self.coeffs = coeffs
        self.order = order

    # construction -----------------------------------------------------------

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = _as_batch(value)
        coeffs = np.zeros((len(multi_indices(order)),) + value.shape)
        coeffs[0] = value
        return cls(coeffs, order)

    @classmethod
    def variable(cls, value, axis: int, order: int) -> "Jet":
        """Jet of the coordinate function ``x`` (axis 0) or ``y`` (axis 1)."""
        jet = cls.constant(value, order)
        if order >= 1:
            jet.coeffs[_position(order)[(1, 0) if axis == 0 else (0, 1)]] = 1.0
        return jet

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    # access -----------------------------------------------------------------

    @property
    def value(self):
        return self.partial(0, 0)

    def taylor(self, i: int, j: int) -> np.ndarray:
        return self.coeffs[_position(self.order)[(i, j)]]

    def partial(self, i: int, j: int):
        """The partial derivative d^{i+j}/dx^i dy^j at the expansion point."""
        if i + j > self.order:
            raise ValueError(f"partial ({i},{j}) exceeds jet order {self.order}")
        out = self.taylor(i, j) * (factorial(i) * factorial(j))
        return out[()] if out.ndim == 0 else out

    @property
    def partials(self) -> dict[tuple[int, int], float]:
        return {ij: self.partial(*ij) for ij in multi_indices(self.order)}

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise the order of a jet")
        return Jet(self.coeffs[: len(multi_indices(order))].copy(), order)

    def diff(self, axis: int) -> "Jet":
        """Differentiate along x (0) or y (1); the result has order - 1."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        new_order = self.order - 1
        pos = _position(self.order)
        coeffs = np.empty((len(multi_indices(new_order)),) + self.batch_shape)
        for n, (i, j) in enumerate(multi_indices(new_order)):
            if axis == 0:
                coeffs[n] = (i + 1) * self.coeffs[pos[(i + 1, j)]]
            else:
                coeffs[n] = (j + 1) * self.coeffs[pos[(i, j + 1)]]
        return Jet(coeffs, new_order)

    # arithmetic ---------------------------------------------------------------

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.order != self.order:
                order = min(self.order, other.order)
                return other.truncate(order) if other.order > order else other
            return other
        return Jet.constant(other, self.order)

    def _match(self, other) -> tuple["Jet", "Jet"]:
        other = self._lift(other)
        me = self if self.order == other.order else self.truncate(other.order)
        return me, other

    def __add__(self, other):
        a, b = self._match(other)
        return Jet(a.coeffs + b.coeffs, a.order)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._match(other)
        return Jet(a.coeffs - b.coeffs, a.order)

    def __rsub__(self, other):
        a, b = self._match(other)
        return Jet(b.coeffs - a.coeffs, a.order)

    def __neg__(self):
        return Jet(-self.coeffs, self.order)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * _as_batch(other), self.order)
        a, b = self._match(other)
        left, right, out = _product_pairs(a.order)
        terms = a.coeffs[left] * b.coeffs[right]
        coeffs = np.zeros(a.coeffs.shape[:1] + terms.shape[1:])
        np.add.at(coeffs, out, terms)
        return Jet(coeffs, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = _as_batch(other)
            if np.any(other == 0):
                raise DomainError("division by zero")
            return Jet(self.coeffs / other, self.order)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, n: int):
        return integer_power(self, n)

    def __repr__(self) -> str:
        if not self.batch_shape:
            return f"Jet(order={self.order}, partials={self.partials})"
        return f"Jet(order={self.order}, batch_shape={self.batch_shape})"


# elementary functions ---------------------------------------------------------


def compose(u: Jet, coefficients: list) -> Jet:
    """Evaluate ``sum_k a_k (u - u0)^k`` by Horner's rule.

    ``coefficients[k]`` is the k-th univariate Taylor coefficient of the outer
    function at ``u0``; entries may be arrays matching the batch shape.
    """
    delta = Jet(u.coeffs.copy(), u.order)
    delta.coeffs[0] = 0.0
    result = Jet.constant(coefficients[u.order], u.order)
    for k in range(u.order - 1, -1, -1):
        result = result * delta
        result.coeffs[0] = result.coeffs[0] + coefficients[k]
    return result


def _base(u: Jet) -> np.ndarray:
    return u.coeffs[0]


def reciprocal(u: Jet) -> Jet:
    u0 = _base(u)
    if np.any(u0 == 0):
        raise DomainError("division by zero")
    return compose(u, [(-1.0) ** k / u0 ** (k + 1) for k in range(u.order + 1)])


def integer_power(u: Jet, n: int) -> Jet:
    if n < 0:
        return reciprocal(integer_power(u, -n))
    result = Jet.constant(np.ones(u.batch_shape), u.order)
    base = u
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


def exp(u: Jet) -> Jet:
    e = np.exp(_base(u))
    return compose(u, [e / factorial(k) for k in range(u.order + 1)])


def log(u: Jet) -> Jet:
    u0 = _base(u)
    if np.any(u0 <= 0):
        raise DomainError("log of a non-positive number")
    coeffs = [np.log(u0)]
    coeffs += [(-1.0) ** (k + 1) / (k * u0**k) for k in range(1, u.order + 1)]
    return compose(u, coeffs)


def sin(u: Jet) -> Jet:
    u0 = _base(u)
    return compose(
        u, [np.sin(u0 + k * np.pi / 2) / factorial(k) for k in range(u.order + 1)]
    )


def cos(u: Jet) -> Jet:
    u0 = _base(u)
    return compose(
        u, [np.cos(u0 + k * np.pi / 2) / factorial(k) for k in range(u.order + 1)]
    )


def sqrt(u: Jet) -> Jet:
    u0 = _base(u)
    if np.any(u0 < 0) or (u.order > 0 and np.any(u0 == 0)):
        raise DomainError("sqrt of a negative number (or derivative at 0)")
    coeffs = []
    binom = 1.0
    for k in range(u.order + 1):
        coeffs.append(binom * u0 ** (0.5 - k))
        binom *= (0.5 - k) / (k + 1)
    return compose(u, coeffs)


def atan(u: Jet) -> Jet:
    u0 = _base(u)
    # series of 1 / (1 + (u0 + e)^2), then integrate termwise
    d0, d1 = 1.0 + u0 * u0, 2.0 * u0
    b = [1.0 / d0]
    for k in range(1, u.order):
        prev2 = b[k - 2] if k >= 2 else 0.0
        b.append(-(d1 * b[k - 1] + prev2) / d0)
    coeffs = [np.arctan(u0)] + [b[k - 1] / k for k in range(1, u.order + 1)]
    return compose(u, coeffs)


FUNCTIONS = {
    "exp": exp,
    "log": log,
    "sin": sin,
    "cos": cos,
    "sqrt": sqrt,
    "atan": atan,
}
