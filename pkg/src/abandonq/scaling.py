"""Dominating patience systems and growth checks.

A dominating system shares arrivals and service times with the original queue
but draws its patience from the capped law

    sqrt(n) F*^n(x / sqrt(n)) = min(sqrt(n) F^n(x / sqrt(n)), cap_level),

coupled by inverse transform to the original draws, so every customer is at
least as patient as its counterpart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .primitives import PatienceFamily, check_A4


class DominatingFamily:
    """Capped version of ``base`` with ``cap_level = theta/lam + sigma_bar``.

    ``sigma_bar`` defaults to half the finite-horizon stability margin
    ``H(x_max) - theta/lam``; a nonpositive margin raises ValueError.
    """

    def __init__(self, base: PatienceFamily, lam: float, theta: float,
                 sigma_bar: float | None = None, x_max: float = 100.0):
        self.base = base
        self.drift = theta / lam
        if sigma_bar is None:
            res = check_A4(base.H, (lam, theta), x_max)
            if not res.ok:
                raise ValueError(f"stability margin {res.margin:g} <= 0; no valid cap level")
            sigma_bar = 0.5 * res.margin
        if not sigma_bar > 0:
            raise ValueError("sigma_bar must be positive")
        self.sigma_bar = float(sigma_bar)
        self.cap_level = self.drift + self.sigma_bar
        self.H = base.H
        self.name = f"dominating({base.name}, cap={self.cap_level:g})"

    def __repr__(self):
        return f"DominatingFamily({self.base!r}, cap_level={self.cap_level:g})"

    def cap(self, n: int) -> float:
        """Ceiling of ``F*^n`` in probability units, ``cap_level / sqrt(n)``."""
        return self.cap_level / math.sqrt(n)

    def cdf(self, n: int, x):
        return np.minimum(self.base.cdf(n, x), self.cap(n))

    def scaled(self, n: int, x):
        return np.minimum(self.base.scaled(n, x), self.cap_level)

    def sup(self, n: int) -> float:
        return min(self.base.sup(n), self.cap(n))

    def couple(self, d, n: int):
        """Dominating patience for original draws ``d`` at scale ``n``.

        The level set ``{x : F*^n(x) = F^n(d)}`` is empty when ``F^n(d)``
        exceeds the cap (the customer never abandons, ``+inf``); otherwise it
        contains ``d`` and ``d`` itself is returned, which keeps ``d* >= d``
        on every sample.
        """
        d = np.asarray(d, dtype=float)
        level = self.base.cdf(n, d)
        return np.where(level <= self.cap(n), d, np.inf)

    def sample(self, n: int, rng, size=None):
        return self.couple(self.base.sample(n, rng, size), n)


def couple_patience(d, n: int, dom: DominatingFamily):
    return dom.couple(d, n)


@dataclass
class GrowthReport:
    ok: bool
    worst_margin: float
    witness: tuple | None
    C: float
    m: float

    def __bool__(self):
        return self.ok


def check_growth(fam, C: float, m: float, n_list, x_max: float = 50.0,
                 grid: int = 2001) -> GrowthReport:
    """Check ``sqrt(n) F^n(x / sqrt(n)) <= C (1 + x**m)`` on ``[0, x_max]``.

    ``worst_margin`` is the smallest ``C (1 + x**m) - sqrt(n) F^n(x/sqrt(n))``
    seen; ``witness`` is the ``(n, x)`` attaining it when the bound fails.
    """
    if not C > 0 or not m > 0:
        raise ValueError("need C > 0 and m > 0")
    xs = np.linspace(0.0, x_max, grid)
    bound = C * (1.0 + xs**m)
    worst, where = np.inf, None
    for n in n_list:
        margin = bound - fam.scaled(n, xs)
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst, where = float(margin[i]), (n, float(xs[i]))
    ok = worst >= -1e-12
    return GrowthReport(ok, worst, None if ok else where, C, m)
