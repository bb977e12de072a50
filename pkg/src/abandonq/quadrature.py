"""Small numerical helpers: adaptive Simpson, memoized cumulative integrals and
vectorized inversion of nondecreasing functions."""

from __future__ import annotations

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when adaptive integration fails to reach its tolerance."""


def adaptive_simpson(fn, a: float, b: float, tol: float = 1e-10,
                     max_subdivisions: int = 1_000_000) -> float:
    """Integrate a scalar function over [a, b] by adaptive Simpson.

    ``tol`` is an absolute tolerance on the whole interval; it is split
    between halves at each refinement.  Raises QuadratureError once more than
    ``max_subdivisions`` panels would be needed.
    """
    if b == a:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0

    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0

    total = 0.0
    comp = 0.0
    panels = 1
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = fn(lm), fn(rm)
        left = (mid - lo) * (flo + 4.0 * flm + fmid) / 6.0
        right = (hi - mid) * (fmid + 4.0 * frm + fhi) / 6.0
        delta = left + right - est
        if abs(delta) <= 15.0 * eps or depth >= 60 or hi - lo <= 1e-14 * max(1.0, abs(lo)):
            if depth >= 60 and abs(delta) > 15.0 * eps:
                raise QuadratureError(f"no convergence on [{lo}, {hi}]")
            piece = left + right + delta / 15.0
            # Kahan summation keeps the running total exact to ~1 ulp
            y = piece - comp
            t = total + y
            comp = (t - total) - y
            total = t
            continue
        panels += 1
        if panels > max_subdivisions:
            raise QuadratureError(
                f"adaptive Simpson exceeded {max_subdivisions} subdivisions on [{a}, {b}]")
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return sign * total


# 16-point Gauss-Legendre rule on [0, 1] for the within-panel remainder.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class CumulativeIntegral:
    """Memoized ``x -> int_0^x g(s) ds`` for a vectorized integrand ``g``.

    Breakpoints ``0, step, 2*step, ...`` carry cached cumulative values, each
    panel computed once by adaptive Simpson.  An evaluation at ``x`` costs one
    cached lookup plus a 16-point Gauss-Legendre sweep over the partial panel.
    """

    def __init__(self, g, step: float = 0.25, tol: float = 1e-10):
        self._g = g
        self.step = float(step)
        self.tol = tol
        self._cum = [0.0]

    def _scalar(self, s: float) -> float:
        return float(np.asarray(self._g(np.asarray([s], dtype=float)))[0])

    def _extend(self, k: int) -> None:
        while len(self._cum) <= k:
            j = len(self._cum) - 1
            a, b = j * self.step, (j + 1) * self.step
            self._cum.append(self._cum[-1] + adaptive_simpson(self._scalar, a, b, self.tol))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("cumulative integral is defined for x >= 0")
        finite = np.isfinite(x)
        xf = np.where(finite, x, 0.0)
        k = np.floor(xf / self.step).astype(np.int64)
        if k.size:
            self._extend(int(k.max()))
        cum = np.asarray(self._cum)[k]
        lo = k * self.step
        width = xf - lo
        nodes = lo[..., None] + width[..., None] * _GL_X
        vals = np.asarray(self._g(nodes), dtype=float)
        out = cum + width * (vals @ _GL_W)
        return np.where(finite, out, np.inf)


def monotone_inverse(fn, y, lo: float = 0.0, tol: float = 1e-13,
                     x_limit: float = 1e15, initial_hi: float = 1.0):
    """Vectorized ``inf{x >= lo : fn(x) >= y}`` for nondecreasing ``fn``.

    Targets that ``fn`` does not reach below ``x_limit`` map to ``+inf``;
    targets with ``fn(lo) >= y`` map to ``lo``.  The returned point always
    satisfies ``fn(x) >= y`` (it is the upper end of the final bracket).
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape
    y = y.ravel()
    out = np.full(y.shape, np.inf)
    at_lo = np.asarray(fn(np.full(y.shape, lo)), dtype=float) >= y
    out[at_lo] = lo
    idx = np.flatnonzero(~at_lo & ~np.isnan(y))
    if idx.size == 0:
        return out.reshape(shape)

    target = y[idx]
    a = np.full(idx.size, lo)
    b = np.full(idx.size, lo + initial_hi)
    active = np.ones(idx.size, dtype=bool)
    # grow the bracket until fn(b) >= target
    while True:
        fb = np.asarray(fn(b), dtype=float)
        short = active & (fb < target)
        if not short.any():
            break
        a = np.where(short, b, a)
        b = np.where(short, lo + 2.0 * (b - lo), b)
        over = short & (b > x_limit)
        if over.any():
            active &= ~over
            b = np.where(over, lo, b)
    for _ in range(200):
        width = b - a
        todo = active & (width > tol * np.maximum(1.0, np.abs(b)))
        if not todo.any():
            break
        mid = a + 0.5 * width
        fm = np.asarray(fn(mid), dtype=float)
        up = fm >= target
        b = np.where(todo & up, mid, b)
        a = np.where(todo & ~up, mid, a)
    out[idx] = np.where(active, b, np.inf)
    return out.reshape(shape)

