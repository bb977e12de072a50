"""Input distributions for the GI/GI/1+GI queue.

Inter-arrival and service times are unit-mean laws (:class:`PrimitiveSpec`),
rescaled by the heavy-traffic rates of :class:`HeavyTrafficParams`.  Patience
times come from a :class:`PatienceFamily`, an n-indexed family of CDFs whose
diffusion-scaled versions ``sqrt(n) F^n(x / sqrt(n))`` approach a limiting
function ``H``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .limits import LimitFunction, Polynomial, Tabulated, from_config, integrate_function
from .quadrature import monotone_inverse

KINDS = ("exponential", "gamma", "lognormal", "deterministic", "hyperexponential", "uniform")


class AssumptionWarning(UserWarning):
    """A modelling assumption is not met but the computation is still defined."""


@dataclass(frozen=True)
class PrimitiveSpec:
    """A unit-mean nonnegative distribution.

    Only shape parameters are supplied; the scale is always fixed so that the
    mean is one.  Use the classmethod constructors rather than the raw fields.
    """

    kind: str
    shape: float | None = None
    sigma: float | None = None
    width: float | None = None
    weights: tuple = ()
    rates: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gamma" and not (self.shape and self.shape > 0):
            raise ValueError("gamma needs shape > 0")
        if self.kind == "lognormal" and not (self.sigma is not None and self.sigma > 0):
            raise ValueError("lognormal needs sigma > 0")
        if self.kind == "uniform" and not (self.width is not None and 0 <= self.width <= 2):
            raise ValueError("uniform width must lie in [0, 2] to keep support in [0, inf)")
        if self.kind == "hyperexponential":
            w = np.asarray(self.weights, dtype=float)
            r = np.asarray(self.rates, dtype=float)
            if w.size == 0 or w.shape != r.shape or np.any(w <= 0) or np.any(r <= 0):
                raise ValueError("hyperexponential needs matching positive weights and rates")
            w = w / w.sum()
            r = r * float(np.sum(w / r))
            object.__setattr__(self, "weights", tuple(w.tolist()))
            object.__setattr__(self, "rates", tuple(r.tolist()))

    @classmethod
    def exponential(cls):
        return cls("exponential")

    @classmethod
    def gamma(cls, shape: float):
        return cls("gamma", shape=float(shape))

    @classmethod
    def lognormal(cls, sigma: float):
        return cls("lognormal", sigma=float(sigma))

    @classmethod
    def deterministic(cls):
        return cls("deterministic")

    @classmethod
    def hyperexponential(cls, weights, rates):
        return cls("hyperexponential", weights=tuple(weights), rates=tuple(rates))

    @classmethod
    def uniform(cls, width: float):
        return cls("uniform", width=float(width))

    @classmethod
    def from_config(cls, obj: dict) -> "PrimitiveSpec":
        obj = dict(obj)
        kind = obj.pop("kind")
        if kind == "hyperexponential":
            return cls.hyperexponential(obj["weights"], obj["rates"])
        return cls(kind, **obj)

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        for key in ("shape", "sigma", "width"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.kind == "hyperexponential":
            out["weights"] = list(self.weights)
            out["rates"] = list(self.rates)
        return out

    def mean(self) -> float:
        return self.moment(1.0)

    def variance(self) -> float:
        k = self.kind
        if k == "exponential":
            return 1.0
        if k == "gamma":
            return 1.0 / self.shape
        if k == "lognormal":
            return math.expm1(self.sigma**2)
        if k == "deterministic":
            return 0.0
        if k == "hyperexponential":
            w, r = np.asarray(self.weights), np.asarray(self.rates)
            return float(2.0 * np.sum(w / r**2) - 1.0)
        return self.width**2 / 12.0

    def moment(self, p: float) -> float:
        """Analytic raw moment ``E[X**p]`` for ``p >= 0``."""
        k = self.kind
        if k == "exponential":
            return math.gamma(p + 1.0)
        if k == "gamma":
            a = self.shape
            return math.exp(special.gammaln(a + p) - special.gammaln(a) - p * math.log(a))
        if k == "lognormal":
            return math.exp(0.5 * self.sigma**2 * p * (p - 1.0))
        if k == "deterministic":
            return 1.0
        if k == "hyperexponential":
            w, r = np.asarray(self.weights), np.asarray(self.rates)
            return float(math.gamma(p + 1.0) * np.sum(w / r**p))
        a, b = 1.0 - 0.5 * self.width, 1.0 + 0.5 * self.width
        if b == a:
            return 1.0
        return (b ** (p + 1.0) - a ** (p + 1.0)) / ((p + 1.0) * (b - a))

    @property
    def unbounded(self) -> bool:
        return self.kind not in ("deterministic", "uniform")

    def sample(self, rng: np.random.Generator, size=None):
        k = self.kind
        if k == "exponential":
            return rng.standard_exponential(size)
        if k == "gamma":
            return rng.standard_gamma(self.shape, size) / self.shape
        if k == "lognormal":
            s = self.sigma
            return rng.lognormal(-0.5 * s * s, s, size)
        if k == "deterministic":
            return np.ones(size) if size is not None else 1.0
        if k == "hyperexponential":
            w, r = np.asarray(self.weights), np.asarray(self.rates)
            comp = rng.choice(w.size, size=size, p=w)
            return rng.standard_exponential(size) / r[comp]
        return rng.uniform(1.0 - 0.5 * self.width, 1.0 + 0.5 * self.width, size)


def sample(spec: PrimitiveSpec, rng: np.random.Generator, size=None):
    """Draw from ``spec``; deterministic given the generator state."""
    return spec.sample(rng, size)


def check_A1(spec: PrimitiveSpec, p: float) -> bool:
    """True when ``p > 2`` and the p-th moment of ``spec`` is finite."""
    if not p > 2:
        raise ValueError(f"moment order p must exceed 2, got {p}")
    return math.isfinite(spec.moment(p))


def check_A5(u_spec: PrimitiveSpec, waive: bool = False) -> bool:
    """Whether inter-arrival times are unbounded; warns unless waived."""
    ok = u_spec.unbounded
    if not ok and not waive:
        warnings.warn(f"inter-arrival kind {u_spec.kind!r} is bounded; the stationary "
                      "existence result does not cover it", AssumptionWarning, stacklevel=2)
    return ok


@dataclass(frozen=True)
class HeavyTrafficParams:
    """Base arrival rate ``lam``, drift offset ``theta`` and scale index ``n``.

    ``service_rate = n*lam - sqrt(n)*theta`` so that
    ``sqrt(n) * (lam - service_rate / n) == theta`` for every ``n``.
    """

    lam: float
    theta: float
    n: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.service_rate > 0:
            raise ValueError(f"service rate {self.service_rate} is not positive for n={self.n}")

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n)

    @property
    def arrival_rate(self) -> float:
        return self.n * self.lam

    @property
    def service_rate(self) -> float:
        return self.n * self.lam - math.sqrt(self.n) * self.theta

    @property
    def drift(self) -> float:
        return self.theta / self.lam


class PatienceFamily:
    """A family ``{F^n}`` of patience CDFs with limiting function ``H``.

    Variants
    --------
    ``unscaled``
        ``F^n = F`` for every n, ``H(x) = F'(0) x``.
    ``hazard_scaled``
        ``F^n(x) = 1 - exp(-int_0^x h(sqrt(n) u) du)``, ``H = int_0^x h``.
    ``capped_h``
        ``F^n(x) = min(H(sqrt(n) x), sqrt(n)) / sqrt(n)``.
    ``external_table``
        ``F^n = F`` from a monotone table, piecewise-linear, clamped at the
        last entry; ``H(x) = F'(0) x`` from the first segment unless given.
    """

    def __init__(self, variant, H, *, cdf=None, inverse=None, hazard=None,
                 table=None, growth=None, name=None, config=None):
        self.variant = variant
        self.H = H
        self.growth = growth
        self.name = name or variant
        self._cdf = cdf
        self._inverse = inverse
        self.hazard = hazard
        self.table = table
        self._config = config
        if growth is not None:
            C, m = growth
            if not (C > 0 and m > 0):
                raise ValueError("growth constants need C > 0 and m > 0")
        self.validate()

    def __repr__(self):
        return f"PatienceFamily({self.name!r}, variant={self.variant!r})"

    # constructors -------------------------------------------------------

    @classmethod
    def unscaled(cls, cdf, slope: float, inverse=None, name="unscaled", growth=None):
        return cls("unscaled", Polynomial([0.0, slope]), cdf=cdf, inverse=inverse,
                   name=name, growth=growth)

    @classmethod
    def unscaled_exponential(cls, rate: float = 1.0, growth=None):
        rate = float(rate)
        return cls.unscaled(lambda x: -np.expm1(-rate * np.asarray(x, dtype=float)), rate,
                            inverse=lambda u: -np.log1p(-np.asarray(u, dtype=float)) / rate,
                            name=f"unscaled_exponential({rate:g})", growth=growth)._with_config(
            {"variant": "unscaled", "dist": "exponential", "rate": rate})

    @classmethod
    def unscaled_scipy(cls, dist, name="unscaled_scipy", growth=None):
        """Wrap a frozen ``scipy.stats`` distribution supported on [0, inf)."""
        slope = float(dist.pdf(0.0))
        if not math.isfinite(slope):
            raise ValueError("F'(0) is infinite; the family has no linear limit")
        return cls.unscaled(dist.cdf, slope, inverse=dist.ppf, name=name, growth=growth)

    @classmethod
    def hazard_scaled(cls, hazard, name="hazard_scaled", growth=None):
        h = hazard if isinstance(hazard, LimitFunction) else Polynomial(hazard)
        fam = cls("hazard_scaled", integrate_function(h), hazard=h, name=name, growth=growth)
        try:
            fam._config = {"variant": "hazard_scaled", "hazard": h.to_config()}
        except TypeError:
            pass
        return fam

    @classmethod
    def constant_hazard(cls, beta: float, growth=None):
        return cls.hazard_scaled(Polynomial([float(beta)]),
                                 name=f"constant_hazard({beta:g})", growth=growth)

    @classmethod
    def no_abandonment(cls):
        """Infinite patience: ``F^n = 0`` and ``H = 0``."""
        return cls.hazard_scaled(Polynomial([0.0]), name="no_abandonment")

    @classmethod
    def capped(cls, H, name="capped_h", growth=None):
        H = H if isinstance(H, LimitFunction) else Polynomial(H)
        fam = cls("capped_h", H, name=name, growth=growth)
        try:
            fam._config = {"variant": "capped_h", "H": H.to_config()}
        except TypeError:
            pass
        return fam

    @classmethod
    def external_table(cls, x, F, H=None, name="external_table", growth=None):
        x = np.asarray(x, dtype=float)
        F = np.asarray(F, dtype=float)
        if x.ndim != 1 or x.shape != F.shape or x.size < 2:
            raise ValueError("table needs matching 1-d columns with at least 2 rows")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table x must be strictly increasing")
        if x[0] < 0:
            raise ValueError("table x must be nonnegative")
        if x[0] > 0:
            x = np.concatenate([[0.0], x])
            F = np.concatenate([[0.0], F])
        if F[0] != 0.0:
            raise ValueError("table must have F(0) = 0")
        if np.any(np.diff(F) < 0) or F[-1] > 1.0:
            raise ValueError("table F must be non-decreasing in [0, 1]")
        if H is None:
            H = Polynomial([0.0, (F[1] - F[0]) / (x[1] - x[0])])
        return cls("external_table", H, table=(x, F), name=name, growth=growth)

    @classmethod
    def from_csv(cls, path, H=None, name=None, growth=None):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        data = np.array([[float(a), float(b)] for a, b, *_ in rows])
        fam = cls.external_table(data[:, 0], data[:, 1], H=H, name=name or str(path),
                                 growth=growth)
        fam._config = {"variant": "external_table", "path": str(path)}
        return fam

    @classmethod
    def from_config(cls, obj: dict, base_dir=None) -> "PatienceFamily":
        obj = dict(obj)
        growth = obj.get("growth")
        growth = (float(growth["C"]), float(growth["m"])) if growth else None
        variant = obj["variant"]
        if variant == "hazard_scaled":
            fam = cls.hazard_scaled(from_config(obj["hazard"]), growth=growth)
        elif variant == "capped_h":
            fam = cls.capped(from_config(obj["H"]), growth=growth)
        elif variant == "unscaled":
            if obj.get("dist", "exponential") != "exponential":
                raise ValueError("config-declared unscaled families support dist='exponential'")
            fam = cls.unscaled_exponential(obj.get("rate", 1.0), growth=growth)
        elif variant == "external_table":
            import os
            path = obj["path"]
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            H = from_config(obj["H"]) if "H" in obj else None
            fam = cls.from_csv(path, H=H, growth=growth)
            fam._config = {"variant": "external_table", "path": obj["path"]}
        elif variant == "none":
            fam = cls.no_abandonment()
        else:
            raise ValueError(f"unknown patience variant {variant!r}")
        if growth is not None and fam._config is not None:
            fam._config = dict(fam._config, growth={"C": growth[0], "m": growth[1]})
        return fam

    def _with_config(self, cfg):
        self._config = cfg
        return self

    def to_config(self) -> dict:
        if self._config is None:
            raise TypeError(f"{self!r} was built from callables and has no config form")
        return dict(self._config)

    # evaluation ---------------------------------------------------------

    def cdf(self, n: int, x):
        """``F^n(x)``, vectorized; zero for ``x <= 0``."""
        x = np.asarray(x, dtype=float)
        rn = math.sqrt(n)
        xp = np.maximum(x, 0.0)
        v = self.variant
        if v == "hazard_scaled":
            out = -np.expm1(-self.H(rn * xp) / rn)
        elif v == "capped_h":
            out = np.minimum(self.H(rn * xp), rn) / rn
        elif v == "external_table":
            tx, tF = self.table
            out = np.interp(xp, tx, tF)
        else:
            out = np.asarray(self._cdf(xp), dtype=float)
        return np.where(x > 0, out, 0.0)

    def scaled(self, n: int, x):
        """``sqrt(n) * F^n(x / sqrt(n))``."""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        rn = math.sqrt(n)
        if self.variant == "hazard_scaled":
            return -rn * np.expm1(-self.H(x) / rn)
        if self.variant == "capped_h":
            return np.minimum(self.H(x), rn)
        return rn * self.cdf(n, x / rn)

    def sup(self, n: int) -> float:
        """``lim_{x -> inf} F^n(x)``."""
        if self.variant == "external_table":
            return float(self.table[1][-1])
        if self.variant == "hazard_scaled" and isinstance(self.H, Polynomial) and self.H.is_zero:
            return 0.0
        return float(self.cdf(n, 1e300))

    def inverse(self, n: int, u):
        """``inf{x >= 0 : F^n(x) >= u}``; ``+inf`` when ``u`` exceeds ``sup F^n``."""
        u = np.asarray(u, dtype=float)
        rn = math.sqrt(n)
        v = self.variant
        if v == "hazard_scaled":
            out = self.H.inverse(-rn * np.log1p(-u)) / rn
        elif v == "capped_h":
            out = np.where(u <= 1.0, self.H.inverse(rn * u) / rn, np.inf)
        elif v == "external_table":
            tx, tF = self.table
            k = np.searchsorted(tF, u, side="left")
            kk = np.clip(k, 1, tx.size - 1)
            lo_F, hi_F = tF[kk - 1], tF[kk]
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(hi_F > lo_F, (u - lo_F) / (hi_F - lo_F), 0.0)
            out = tx[kk - 1] + frac * (tx[kk] - tx[kk - 1])
            out = np.where(k == 0, tx[0], out)
            out = np.where(k >= tx.size, np.inf, out)
        elif self._inverse is not None:
            out = np.asarray(self._inverse(u), dtype=float)
        else:
            out = monotone_inverse(lambda x: self.cdf(n, x), u)
        return np.where(u <= 0.0, 0.0, out)

    def sample(self, n: int, rng: np.random.Generator, size=None):
        # uniforms on (0, 1] so a draw of exactly zero patience never occurs
        u = 1.0 - rng.random(size)
        return self.inverse(n, u)

    def validate(self, n_list=(1, 4, 100), x_max: float = 50.0, points: int = 513):
        """Check ``F^n(0) = 0``, monotone ``F^n`` in [0, 1], ``H >= 0``, ``H(0) = 0``."""
        xs = np.linspace(0.0, x_max, points)
        Hx = np.asarray(self.H(xs), dtype=float)
        if abs(Hx[0]) > 1e-12:
            raise ValueError(f"{self!r}: H(0) = {Hx[0]} must be 0")
        if np.any(Hx < -1e-12):
            raise ValueError(f"{self!r}: H takes negative values")
        for n in n_list:
            F = self.cdf(n, xs / math.sqrt(n))
            if abs(F[0]) > 0:
                raise ValueError(f"{self!r}: F^{n}(0) != 0")
            if np.any(np.diff(F) < -1e-12) or np.any(F < -1e-12) or np.any(F > 1 + 1e-12):
                raise ValueError(f"{self!r}: F^{n} is not a CDF on the check grid")
        return True


def patience_cdf(fam: PatienceFamily, n: int, x):
    return fam.cdf(n, x)


def sample_patience(fam: PatienceFamily, n: int, rng: np.random.Generator, size=None):
    return fam.sample(n, rng, size)


@dataclass
class A3Report:
    n_list: list
    K: float
    errors: list
    violations: list = field(default_factory=list)

    @property
    def non_increasing(self) -> bool:
        return not self.violations

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def check_A3(fam: PatienceFamily, K: float, n_list, grid: int = 2001,
             noise: float = 1e-12) -> A3Report:
    """Sup-norm distance between ``sqrt(n) F^n(x/sqrt(n))`` and ``H`` on [0, K].

    Pairs of consecutive ``n`` whose error grows by more than ``noise`` are
    listed in ``violations``.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    xs = np.linspace(0.0, K, grid)
    Hx = fam.H(xs)
    errors = [float(np.max(np.abs(fam.scaled(n, xs) - Hx))) for n in n_list]
    bad = [(n_list[i], n_list[i + 1]) for i in range(len(errors) - 1)
           if errors[i + 1] > errors[i] + noise]
    return A3Report(list(n_list), K, errors, bad)


@dataclass
class A4Result:
    ok: bool
    margin: float
    x_max: float

    def __bool__(self):
        return self.ok


def check_A4(H, params: HeavyTrafficParams | tuple, x_max: float = 100.0) -> A4Result:
    """Finite-horizon proxy of ``lim H(x) > theta/lam``: compares ``H(x_max)``.

    ``H`` may be a PatienceFamily or a limit function; ``params`` may be a
    HeavyTrafficParams or a ``(lam, theta)`` pair.
    """
    if isinstance(H, PatienceFamily):
        H = H.H
    if isinstance(params, HeavyTrafficParams):
        drift = params.drift
    else:
        lam, theta = params
        drift = theta / lam
    margin = float(H(x_max)) - drift
    return A4Result(margin > 0, margin, x_max)


def tabulated_limit(x, y) -> Tabulated:
    return Tabulated(x, y)
