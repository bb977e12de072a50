"""Nonnegative functions on [0, inf) used as limiting drift terms and hazards.

Every function here supports vectorized evaluation, the running integral
``int_0^x``, and (for nondecreasing functions) the generalized inverse.  The
``kernel_repr`` tuple is what the compiled SDE kernel evaluates.
"""

from __future__ import annotations

import numpy as np

from .quadrature import CumulativeIntegral, monotone_inverse

POLY, TABLE = 0, 1


class LimitFunction:
    """Base class; subclasses implement ``__call__`` and ``integral``."""

    def __call__(self, x):
        raise NotImplementedError

    def integral(self, x):
        raise NotImplementedError

    def inverse(self, y):
        """``inf{x >= 0 : H(x) >= y}``; ``+inf`` where H never reaches ``y``."""
        return monotone_inverse(self, y)

    def kernel_repr(self, x_hi: float = 100.0):
        xs = np.linspace(0.0, x_hi, 2**14 + 1)
        return TABLE, xs, np.asarray(self(xs), dtype=float)

    def to_config(self) -> dict:
        raise TypeError(f"{type(self).__name__} has no config representation")


class Polynomial(LimitFunction):
    """``sum_k coeffs[k] * x**k`` with coefficients in ascending order."""

    def __init__(self, coeffs):
        c = np.trim_zeros(np.atleast_1d(np.asarray(coeffs, dtype=float)), "b")
        self.coeffs = c if c.size else np.zeros(1)
        self._poly = np.polynomial.Polynomial(self.coeffs)
        self._antideriv = self._poly.integ(lbnd=0.0)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, x):
        with np.errstate(over="ignore", invalid="ignore"):
            return self._poly(np.asarray(x, dtype=float))

    def integral(self, x):
        with np.errstate(over="ignore", invalid="ignore"):
            return self._antideriv(np.asarray(x, dtype=float))

    def antiderivative(self) -> "Polynomial":
        return Polynomial(self._antideriv.coef)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_zero:
            return np.where(y <= 0.0, 0.0, np.inf)
        c = self.coeffs
        if c.size == 2 and c[0] == 0.0 and c[1] > 0.0:
            return np.maximum(y, 0.0) / c[1]
        return monotone_inverse(self, y)

    def kernel_repr(self, x_hi: float = 100.0):
        return POLY, self.coeffs.copy(), np.zeros(1)

    def to_config(self) -> dict:
        return {"poly": self.coeffs.tolist()}


class Tabulated(LimitFunction):
    """Piecewise-linear interpolant through ``(x, y)``; the last segment's slope
    is continued past the table."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("table needs matching 1-d x and y with at least 2 rows")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table x values must be strictly increasing")
        if x[0] != 0.0:
            raise ValueError("table must start at x = 0")
        self.x, self.y = x, y
        self._slope_end = (y[-1] - y[-2]) / (x[-1] - x[-2])
        seg = 0.5 * (y[1:] + y[:-1]) * np.diff(x)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.interp(x, self.x, self.y)
        return np.where(x > self.x[-1], self.y[-1] + self._slope_end * (x - self.x[-1]), inside)

    def integral(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, self.x.size - 1)
        x0 = self.x[k]
        y0 = self.y[k]
        y1 = self(x)
        return self._cum[k] + 0.5 * (y0 + y1) * (x - x0)

    def kernel_repr(self, x_hi: float = 100.0):
        return TABLE, self.x.copy(), self.y.copy()

    def to_config(self) -> dict:
        return {"table": {"x": self.x.tolist(), "y": self.y.tolist()}}


class Generic(LimitFunction):
    """Wraps a vectorized callable.  Without a closed-form ``integral`` the
    running integral is memoized by :class:`CumulativeIntegral`."""

    def __init__(self, fn, integral=None, inverse=None, step: float = 0.25):
        self._fn = fn
        self._integral = integral if integral is not None else CumulativeIntegral(fn, step=step)
        self._inverse = inverse

    def __call__(self, x):
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    def integral(self, x):
        return np.asarray(self._integral(np.asarray(x, dtype=float)), dtype=float)

    def inverse(self, y):
        if self._inverse is not None:
            return np.asarray(self._inverse(np.asarray(y, dtype=float)), dtype=float)
        return monotone_inverse(self, y)


class Integrated(LimitFunction):
    """``x -> int_0^x g(s) ds`` for another limit function ``g``."""

    def __init__(self, g: LimitFunction):
        self.g = g
        self._outer = CumulativeIntegral(g.integral)

    def __call__(self, x):
        return self.g.integral(x)

    def integral(self, x):
        return self._outer(x)


def integrate_function(g: LimitFunction) -> LimitFunction:
    """Antiderivative vanishing at 0, in closed form when ``g`` is polynomial."""
    if isinstance(g, Polynomial):
        return g.antiderivative()
    return Integrated(g)


def from_config(obj) -> LimitFunction:
    """Parse ``{"poly": [...]}`` or ``{"table": {"x": [...], "y": [...]}}``."""
    if isinstance(obj, LimitFunction):
        return obj
    if "poly" in obj:
        return Polynomial(obj["poly"])
    if "table" in obj:
        return Tabulated(obj["table"]["x"], obj["table"]["y"])
    raise ValueError(f"unrecognised function spec: {obj!r}")
