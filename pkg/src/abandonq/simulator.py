"""Event-driven simulation of the offered waiting time ``V^n``.

At arrival ``j`` the customer is admitted iff ``V(t_j-) < d_j``; admitted work
``v_j`` is added and ``V`` then drains at unit rate until the next arrival.
Statistics of ``sqrt(n) V^n`` are time-weighted and integrated exactly over
each linear segment, then grouped into contiguous arrival batches for
batch-means confidence intervals.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .primitives import HeavyTrafficParams, PatienceFamily, PrimitiveSpec

CHUNK = 1 << 18
PATH_DUMP_MAX_ROWS = 1_000_000
DEFAULT_CDF_GRID = tuple(np.round(np.linspace(0.1, 4.0, 40), 10))


@njit(cache=True)
def step(v_pre, clock, u_next, v, d):
    """Process one arrival and drain until the next one.

    Returns ``(V(t_{j+1}-), t_{j+1}, abandoned)``.  Service needs the strict
    inequality ``v_pre < d``; an infinite ``d`` never abandons.
    """
    abandoned = not (v_pre < d)
    v_post = v_pre if abandoned else v_pre + v
    return max(v_post - u_next, 0.0), clock + u_next, abandoned


@njit(cache=True)
def _segment_moment(v_start, duration, m):
    end = max(v_start - duration, 0.0)
    return (v_start ** (m + 1.0) - end ** (m + 1.0)) / (m + 1.0)


@njit(cache=True)
def _time_below(v_start, duration, x):
    if v_start <= x:
        return duration
    return max(duration - (v_start - x), 0.0)


@njit(cache=True)
def _kahan_add(acc, comp, idx, value):
    y = value - comp[idx]
    t = acc[idx] + y
    comp[idx] = (t - acc[idx]) - y
    acc[idx] = t


@njit(cache=True, nogil=True)
def _advance(v, gaps_before, service, patience, v_pre, v_post, accepted, book):
    """Run the recursion over one chunk.  ``book`` holds Kahan pairs for
    (busy, idle, admitted work)."""
    for i in range(gaps_before.shape[0]):
        g = gaps_before[i]
        drained = min(v, g)
        _kahan_add(book, book[3:], 0, drained)
        _kahan_add(book, book[3:], 1, g - drained)
        v = max(v - g, 0.0)
        v_pre[i] = v
        if v < patience[i]:
            v = v + service[i]
            accepted[i] = True
            _kahan_add(book, book[3:], 2, service[i])
        else:
            accepted[i] = False
        v_post[i] = v
    return v


@njit(cache=True, nogil=True)
def _accumulate(v_post, seg, batch, orders, thresholds,
                b_time, b_time_c, b_mom, b_mom_c, b_below, b_below_c):
    n_ord = orders.shape[0]
    n_thr = thresholds.shape[0]
    for i in range(v_post.shape[0]):
        b = batch[i]
        if b < 0:
            continue
        vs = v_post[i]
        d = seg[i]
        _kahan_add(b_time, b_time_c, b, d)
        for k in range(n_ord):
            _kahan_add(b_mom[b], b_mom_c[b], k, _segment_moment(vs, d, orders[k]))
        for k in range(n_thr):
            _kahan_add(b_below[b], b_below_c[b], k, _time_below(vs, d, thresholds[k]))


def accumulate_segment(v_start: float, duration: float, m_list=(1.0,), grid=()):
    """Exact integrals over a segment where ``V(s) = max(v_start - s, 0)``.

    Returns ``(moments, time_below)``: ``moments[m] = int_0^duration V(s)**m ds``
    and ``time_below[k]`` is the time with ``V(s) <= grid[k]``.
    """
    if v_start < 0 or duration < 0:
        raise ValueError("v_start and duration must be nonnegative")
    moments = {m: float(_segment_moment(float(v_start), float(duration), float(m)))
               for m in m_list}
    below = np.array([_time_below(float(v_start), float(duration), float(x)) for x in grid])
    return moments, below


class Estimate(NamedTuple):
    value: float
    se: float
    half_width: float


def _ratio_estimate(num, den, z) -> Estimate:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    k = num.size
    total = math.fsum(den)
    r = math.fsum(num) / total if total > 0 else float("nan")
    if k < 2 or total <= 0:
        return Estimate(r, float("nan"), float("nan"))
    resid = num - r * den
    se = math.sqrt(math.fsum(resid * resid) / (k * (k - 1))) / (total / k)
    return Estimate(r, se, z * se)


@dataclass
class SimConfig:
    params: HeavyTrafficParams
    u_spec: PrimitiveSpec
    v_spec: PrimitiveSpec
    fam: PatienceFamily
    num_arrivals: int
    burn_in_arrivals: int | None = None
    num_batches: int = 32
    seed: int = 0
    moment_orders: tuple = (1.0, 2.0)
    cdf_grid: tuple = DEFAULT_CDF_GRID
    initial_state: tuple = (None, 0.0)
    p: float | None = None
    ci_sigmas: float = 3.0

    def __post_init__(self):
        if self.burn_in_arrivals is None:
            burn = max(self.num_arrivals // 10, 10_000)
            self.burn_in_arrivals = burn if burn < self.num_arrivals else self.num_arrivals // 10
        self.moment_orders = tuple(float(m) for m in self.moment_orders)
        self.cdf_grid = tuple(float(x) for x in self.cdf_grid)
        self.validate()

    def validate(self):
        if self.num_arrivals < 1:
            raise ValueError("num_arrivals must be positive")
        if not 0 <= self.burn_in_arrivals < self.num_arrivals:
            raise ValueError("burn_in_arrivals must lie in [0, num_arrivals)")
        if self.num_batches < 2:
            raise ValueError("num_batches must be at least 2")
        if self.batch_size < 1:
            raise ValueError("too few post-burn-in arrivals for the requested batches")
        if np.any(np.diff(self.cdf_grid) <= 0):
            raise ValueError("cdf_grid must be strictly increasing")
        if any(m <= 0 for m in self.moment_orders):
            raise ValueError("moment orders must be positive")
        tau0, v0 = self.initial_state
        if (tau0 is not None and tau0 < 0) or v0 < 0:
            raise ValueError("initial state must be nonnegative")
        if self.p is not None and any(m >= self.p - 1 for m in self.moment_orders):
            warnings.warn(f"moment orders {self.moment_orders} reach p - 1 = {self.p - 1}; "
                          "convergence of those moments is not covered", stacklevel=3)

    @property
    def batch_size(self) -> int:
        return (self.num_arrivals - self.burn_in_arrivals) // self.num_batches

    @property
    def arrivals_used(self) -> int:
        return self.batch_size * self.num_batches


@dataclass
class SimResult:
    """Per-batch raw sums; every estimate is derived from them.

    Results over the same ``n``, moment orders and grid merge by concatenating
    batches (time-weighted pooling); all reductions use exactly rounded sums,
    so merging is order-insensitive.
    """

    n: int
    moment_orders: tuple
    cdf_grid: np.ndarray
    batch_time: np.ndarray
    batch_moment: np.ndarray
    batch_below: np.ndarray
    batch_arrivals: np.ndarray
    batch_abandoned: np.ndarray
    batch_plugin: np.ndarray
    batch_arrival_moment: np.ndarray
    seeds: tuple = ()
    bookkeeping: dict = field(default_factory=dict)
    ci_sigmas: float = 3.0

    @property
    def sim_time(self) -> float:
        return math.fsum(self.batch_time)

    @property
    def arrivals_used(self) -> int:
        return int(self.batch_arrivals.sum())

    @property
    def num_batches(self) -> int:
        return self.batch_time.size

    @property
    def scaled_moments(self) -> dict:
        """``m -> Estimate`` of the time-stationary ``E[(sqrt(n) V^n)^m]``."""
        return {m: _ratio_estimate(self.batch_moment[:, k], self.batch_time, self.ci_sigmas)
                for k, m in enumerate(self.moment_orders)}

    @property
    def arrival_moments(self) -> dict:
        """Same moments sampled at arrival epochs (``V(t_j-)``)."""
        return {m: _ratio_estimate(self.batch_arrival_moment[:, k], self.batch_arrivals,
                                   self.ci_sigmas)
                for k, m in enumerate(self.moment_orders)}

    @property
    def scaled_cdf(self) -> np.ndarray:
        total = self.sim_time
        below = np.array([math.fsum(col) for col in self.batch_below.T]) / total
        return np.clip(np.maximum.accumulate(below), 0.0, 1.0) if below.size else below

    def scaled_cdf_estimates(self) -> list:
        return [_ratio_estimate(self.batch_below[:, k], self.batch_time, self.ci_sigmas)
                for k in range(self.batch_below.shape[1])]

    @property
    def abandon_fraction(self) -> Estimate:
        return _ratio_estimate(self.batch_abandoned, self.batch_arrivals, self.ci_sigmas)

    @property
    def plug_in_abandon(self) -> Estimate:
        return _ratio_estimate(self.batch_plugin, self.batch_arrivals, self.ci_sigmas)

    def merge(self, other: "SimResult") -> "SimResult":
        if (self.n != other.n or tuple(self.moment_orders) != tuple(other.moment_orders)
                or not np.array_equal(self.cdf_grid, other.cdf_grid)):
            raise ValueError("can only merge results with the same n, moment orders and grid")
        book = {k: self.bookkeeping.get(k, 0.0) + other.bookkeeping.get(k, 0.0)
                for k in set(self.bookkeeping) | set(other.bookkeeping)}
        cat = np.concatenate
        return SimResult(
            self.n, self.moment_orders, self.cdf_grid,
            cat([self.batch_time, other.batch_time]),
            cat([self.batch_moment, other.batch_moment]),
            cat([self.batch_below, other.batch_below]),
            cat([self.batch_arrivals, other.batch_arrivals]),
            cat([self.batch_abandoned, other.batch_abandoned]),
            cat([self.batch_plugin, other.batch_plugin]),
            cat([self.batch_arrival_moment, other.batch_arrival_moment]),
            tuple(self.seeds) + tuple(other.seeds), book, self.ci_sigmas)


def merge_results(results) -> SimResult:
    results = list(results)
    if not results:
        raise ValueError("nothing to merge")
    out = results[0]
    for r in results[1:]:
        out = out.merge(r)
    return out


class _System:
    """State and accumulators of one queue driven through the chunk loop."""

    def __init__(self, cfg: SimConfig, fam, v0: float):
        nb = cfg.num_batches
        self.cfg = cfg
        self.fam = fam
        self.v = float(v0)
        self.v0 = float(v0)
        self.orders = np.asarray(cfg.moment_orders, dtype=float)
        self.rn = cfg.params.sqrt_n
        self.grid = np.asarray(cfg.cdf_grid, dtype=float)
        self.thresholds = self.grid / self.rn
        M, K = self.orders.size, self.grid.size
        self.b_time = np.zeros(nb)
        self.b_time_c = np.zeros(nb)
        self.b_mom = np.zeros((nb, M))
        self.b_mom_c = np.zeros((nb, M))
        self.b_below = np.zeros((nb, K))
        self.b_below_c = np.zeros((nb, K))
        self.b_arr = np.zeros(nb)
        self.b_ab = np.zeros(nb)
        self.b_plug = np.zeros(nb)
        self.b_arrmom = np.zeros((nb, M))
        self.book = np.zeros(6)
        self.book_parts = []

    def run_chunk(self, gaps_before, gaps_next, service, patience, batch):
        c = gaps_before.size
        v_pre = np.empty(c)
        v_post = np.empty(c)
        accepted = np.empty(c, dtype=np.bool_)
        self.book[:] = 0.0
        self.v = _advance(self.v, gaps_before, service, patience, v_pre, v_post, accepted,
                          self.book)
        self.book_parts.append(self.book[:3].copy())
        _accumulate(v_post, gaps_next, batch, self.orders, self.thresholds,
                    self.b_time, self.b_time_c, self.b_mom, self.b_mom_c,
                    self.b_below, self.b_below_c)
        sel = batch >= 0
        if sel.any():
            nb = self.cfg.num_batches
            bi = batch[sel]
            self.b_arr += np.bincount(bi, minlength=nb)
            self.b_ab += np.bincount(bi, weights=(~accepted[sel]).astype(float), minlength=nb)
            self.b_plug += np.bincount(bi, weights=self.fam.cdf(self.cfg.params.n, v_pre[sel]),
                                       minlength=nb)
            scaled = self.rn * v_pre[sel]
            for k, m in enumerate(self.orders):
                self.b_arrmom[:, k] += np.bincount(bi, weights=scaled**m, minlength=nb)
        return v_pre, v_post, accepted

    def result(self, elapsed: float, seed) -> SimResult:
        scale = self.rn ** self.orders
        parts = np.array(self.book_parts) if self.book_parts else np.zeros((1, 3))
        busy, idle, work = (math.fsum(parts[:, i]) for i in range(3))
        book = {"busy_time": busy, "idle_time": idle, "admitted_work": work,
                "elapsed": elapsed, "v_initial": self.v0, "v_final": self.v}
        if np.any(self.b_time <= 0):
            warnings.warn("a batch accumulated zero simulated time", stacklevel=3)
        return SimResult(
            self.cfg.params.n, self.cfg.moment_orders, self.grid.copy(),
            self.b_time.copy(), self.b_mom * scale, self.b_below.copy(),
            self.b_arr.copy(), self.b_ab.copy(), self.b_plug.copy(), self.b_arrmom.copy(),
            (seed,), book, self.cfg.ci_sigmas)


class _PathDump:
    def __init__(self, path, max_rows=PATH_DUMP_MAX_ROWS):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(["event_time", "V_pre", "V_post", "abandoned"])
        self.left = max_rows

    def write(self, times, v_pre, v_post, accepted):
        k = min(self.left, times.size)
        for i in range(k):
            self.writer.writerow([repr(float(times[i])), repr(float(v_pre[i])),
                                  repr(float(v_post[i])), int(not accepted[i])])
        self.left -= k

    def close(self):
        self.fh.close()


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3)]


def _drive(cfg: SimConfig, dominating=None, path_dump=None, chunk: int = CHUNK):
    params = cfg.params
    n = params.n
    lam_n, mu_n = params.arrival_rate, params.service_rate
    if not mu_n > 0:
        raise ValueError("service rate must be positive")
    rng_u, rng_v, rng_d = _streams(cfg.seed)

    tau0, v0 = cfg.initial_state
    pending = float(cfg.u_spec.sample(rng_u, 1)[0]) / lam_n if tau0 is None else float(tau0)
    elapsed_parts = [pending]

    main = _System(cfg, cfg.fam, v0)
    dom = _System(cfg, dominating, v0) if dominating is not None else None
    nu_carry = 0.0
    max_violation = -np.inf

    burn, bsize, nb = cfg.burn_in_arrivals, cfg.batch_size, cfg.num_batches
    total = burn + bsize * nb
    dump = _PathDump(path_dump) if path_dump else None
    clock = pending
    try:
        for j0 in range(0, total, chunk):
            c = min(chunk, total - j0)
            gaps_next = cfg.u_spec.sample(rng_u, c) / lam_n
            gaps_before = np.empty(c)
            gaps_before[0] = pending
            gaps_before[1:] = gaps_next[:-1]
            pending = float(gaps_next[-1])
            elapsed_parts.append(math.fsum(gaps_next))
            service = cfg.v_spec.sample(rng_v, c) / mu_n
            patience = cfg.fam.sample(n, rng_d, c)

            j = np.arange(j0, j0 + c)
            batch = np.where(j >= burn, (j - burn) // bsize, -1).astype(np.int64)

            v_pre, v_post, accepted = main.run_chunk(gaps_before, gaps_next, service,
                                                     patience, batch)
            if dom is not None:
                patience_star = dominating.couple(patience, n)
                vs_pre, vs_post, _ = dom.run_chunk(gaps_before, gaps_next, service,
                                                   patience_star, batch)
                nu = np.maximum.accumulate(np.maximum(service, nu_carry))
                nu_prev = np.empty(c)
                nu_prev[0] = nu_carry
                nu_prev[1:] = nu[:-1]
                nu_carry = float(nu[-1])
                gap = max(float(np.max(v_pre - nu_prev - vs_pre)),
                          float(np.max(v_post - nu - vs_post)))
                max_violation = max(max_violation, gap)
            if dump is not None and dump.left > 0:
                times = clock + np.cumsum(gaps_before) - gaps_before[0]
                dump.write(times, v_pre, v_post, accepted)
            clock += math.fsum(gaps_next)
    finally:
        if dump is not None:
            dump.close()

    elapsed = math.fsum(elapsed_parts)
    res = main.result(elapsed, cfg.seed)
    if dom is None:
        return res
    return res, dom.result(elapsed, cfg.seed), float(max_violation)


def simulate(cfg: SimConfig, path_dump=None) -> SimResult:
    """Simulate ``cfg.num_arrivals`` arrivals and return stationary estimates of
    ``sqrt(n) V^n`` over the post-burn-in window.

    Inter-arrival and service draws are ``u / lam^n`` and ``v / mu^n`` with
    unit-mean ``u``, ``v``; patience draws come from ``cfg.fam`` at scale ``n``.
    ``path_dump`` names an optional CSV receiving
    ``(event_time, V_pre, V_post, abandoned)`` for up to a million arrivals.
    """
    return _drive(cfg, path_dump=path_dump)


def simulate_coupled(cfg: SimConfig, dominating, path_dump=None):
    """Run the original queue and a dominating queue on shared randomness.

    Both systems see the same arrival epochs and service times; the
    dominating queue's patience times are ``dominating.couple(d, n)`` for the
    original draws ``d``.  Returns ``(original, dominating, max_violation)``
    where ``max_violation`` is the largest value of
    ``V(t) - nu_max(t) - V*(t)`` over arrival epochs (just before and just
    after each jump) and ``nu_max(t)`` is the largest service time brought in
    by time ``t``.
    """
    return _drive(cfg, dominating=dominating, path_dump=path_dump)
