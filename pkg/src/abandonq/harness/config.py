"""Experiment configuration: a single JSON document with ``schema_version``.

Example::

    {
      "schema_version": 1,
      "scenario": "mm1m",
      "lambda": 1.0, "theta": 0.0,
      "u_spec": {"kind": "exponential"},
      "v_spec": {"kind": "exponential"},
      "patience": {"variant": "hazard_scaled", "hazard": {"poly": [1.0]},
                   "growth": {"C": 1.0, "m": 1.0}},
      "n_grid": [25, 100, 400],
      "moment_orders": [1, 2],
      "p": 4,
      "sim": {"num_arrivals": 10000000, "num_batches": 32,
              "burn_in_fraction": 0.1, "min_burn_in": 10000,
              "per_n": {"400": {"num_arrivals": 20000000}}},
      "seeds_per_n": 1, "base_seed": 20240601,
      "cdf_grid": null,
      "a3_K": 5.0, "x_max": 100.0,
      "gates": {"moment_orders": [1], "moment_rel_err_max": 0.10,
                "moment_monotone": true, "ks_max": 0.05,
                "pa_rel_err_max": 0.10, "pa_monotone": true},
      "waive": [],
      "dominating": {"sigma_bar": 0.5}
    }

``per_n`` overrides any key of ``sim`` for one ``n``.  ``cdf_grid`` null
means diffusion quantiles at levels 0.02, 0.04, ..., 0.98.  ``waive`` may
list validator names (``a1``, ``a3``, ``a5``, ``growth``).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from ..primitives import PatienceFamily, PrimitiveSpec

SCHEMA_VERSION = 1
VALIDATORS = ("a1", "a2", "a3", "a5", "growth")


class ConfigError(ValueError):
    """The configuration is malformed or fails a validator."""


def default_num_arrivals(n: int) -> int:
    return int(max(10**7, 10**5 * math.sqrt(n)))


@dataclass
class ExperimentConfig:
    raw: dict
    scenario: str
    lam: float
    theta: float
    u_spec: PrimitiveSpec
    v_spec: PrimitiveSpec
    fam: PatienceFamily
    n_grid: list
    moment_orders: list
    p: float
    sim: dict
    per_n: dict
    seeds_per_n: int
    base_seed: int
    cdf_grid: list | None
    gates: dict
    a3_K: float
    x_max: float
    waive: set = field(default_factory=set)
    sigma_bar: float | None = None
    source_dir: str | None = None

    def sim_settings(self, n: int) -> dict:
        out = {"num_arrivals": None, "num_batches": 32, "burn_in_fraction": 0.1,
               "min_burn_in": 10_000}
        out.update(self.sim)
        out.update(self.per_n.get(str(n), {}))
        if out["num_arrivals"] is None:
            out["num_arrivals"] = default_num_arrivals(n)
        N = int(out["num_arrivals"])
        burn = max(int(N * out["burn_in_fraction"]), int(out["min_burn_in"]))
        if burn >= N:
            burn = int(N * out["burn_in_fraction"])
        out["num_arrivals"] = N
        out["burn_in_arrivals"] = burn
        return out

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def canonical(raw: dict) -> str:
    return json.dumps(raw, sort_keys=True, separators=(",", ":"))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical(raw).encode()).hexdigest()[:16]


def parse_config(raw: dict, source_dir=None, seed_override=None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    if seed_override is not None:
        raw["base_seed"] = int(seed_override)
    try:
        n_grid = [int(n) for n in raw["n_grid"]]
        if not n_grid:
            raise ConfigError("n_grid is empty")
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
            raise ConfigError("n_grid must be strictly increasing positive integers")
        u_spec = PrimitiveSpec.from_config(raw["u_spec"])
        v_spec = PrimitiveSpec.from_config(raw["v_spec"])
        fam = PatienceFamily.from_config(raw["patience"], base_dir=source_dir)
        lam = float(raw["lambda"])
        theta = float(raw["theta"])
        if not lam > 0:
            raise ConfigError("lambda must be positive")
        moment_orders = [float(m) for m in raw.get("moment_orders", [1, 2])]
        p = float(raw.get("p", 4.0))
        sim = dict(raw.get("sim", {}))
        per_n = {str(k): dict(v) for k, v in sim.pop("per_n", {}).items()}
        grid = raw.get("cdf_grid")
        if grid is not None:
            grid = [float(x) for x in grid]
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("cdf_grid must be strictly increasing")
        waive = {str(w).lower() for w in raw.get("waive", [])}
        unknown = waive - set(VALIDATORS)
        if unknown:
            raise ConfigError(f"unknown validators in waive: {sorted(unknown)}")
        dom = raw.get("dominating") or {}
        cfg = ExperimentConfig(
            raw=raw, scenario=str(raw.get("scenario", "experiment")), lam=lam, theta=theta,
            u_spec=u_spec, v_spec=v_spec, fam=fam, n_grid=n_grid,
            moment_orders=moment_orders, p=p, sim=sim, per_n=per_n,
            seeds_per_n=int(raw.get("seeds_per_n", 1)), base_seed=int(raw.get("base_seed", 0)),
            cdf_grid=grid, gates=dict(raw.get("gates", {})),
            a3_K=float(raw.get("a3_K", 5.0)), x_max=float(raw.get("x_max", 100.0)),
            waive=waive, sigma_bar=dom.get("sigma_bar"), source_dir=source_dir)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"invalid config: {exc!r}") from exc
    if cfg.seeds_per_n < 1:
        raise ConfigError("seeds_per_n must be at least 1")
    return cfg


def load_config(path, seed_override=None) -> ExperimentConfig:
    if seed_override is None and os.environ.get("ABANDONQ_SEED"):
        seed_override = int(os.environ["ABANDONQ_SEED"])
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw, source_dir=os.path.dirname(os.path.abspath(path)),
                        seed_override=seed_override)


def scenario_path(name: str) -> str:
    """Path of a shipped benchmark scenario, e.g. ``scenario_path("mm1m")``."""
    from importlib import resources
    return str(resources.files("abandonq").joinpath("scenarios", f"{name}.json"))
