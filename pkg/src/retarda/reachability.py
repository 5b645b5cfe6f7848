"""Sampled reachability estimates, the time-extension recursion and escape probing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .history import PiecewiseHistory, window_norm
from .rhsdsl import SystemDef
from .sampling import on_sphere, parallel_map, sample_history
from .signals import InputSignal, derive_rng, sample_input
from .solver import DEFAULT_CONFIG, SolveConfig, solve_tds

SCHEMA = "retarda.reach/1"


def geometric_grid(lo: float, hi: float, per_decade: int = 8) -> np.ndarray:
    """Geometric grid from ``lo`` to ``hi`` with ``per_decade`` points per factor 10 (both ends kept)."""
    if not (0 < lo <= hi):
        raise ValueError("need 0 < lo <= hi")
    if lo == hi:
        return np.array([lo])
    count = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    return np.geomspace(lo, hi, count)


@dataclass(frozen=True, eq=False)
class ReachTable:
    """Sampled sup of ``|x(s)|`` over ``s <= t`` for initial data and inputs of size at most ``r``.

    ``sup_estimates[i, j]`` belongs to ``radii[i]`` and ``times[j]``;
    ``history_norms`` holds the matching sup of ``||x_t||``.  Entries at or
    after an observed escape are ``inf`` and flagged in ``escaped``.
    """

    radii: np.ndarray
    times: np.ndarray
    sup_estimates: np.ndarray
    history_norms: np.ndarray
    escaped: np.ndarray
    samples: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def any_escape(self) -> bool:
        return bool(self.escaped.any())

    def estimate(self, r: float, t: float) -> float:
        i = int(np.flatnonzero(np.isclose(self.radii, r))[0])
        j = int(np.flatnonzero(np.isclose(self.times, t))[0])
        return float(self.sup_estimates[i, j])

    def to_csv(self) -> str:
        rows = ["r,t,estimate,escaped"]
        for i, r in enumerate(self.radii):
            for j, t in enumerate(self.times):
                rows.append(f"{float(r)!r},{float(t)!r},{float(self.sup_estimates[i, j])!r},{int(self.escaped[i, j])}")
        return "\n".join(rows) + "\n"


def _reach_sample(job):
    sys, r, ri, i, T, times, seed, hist_pieces, input_pieces, mode, use_inputs, cfg = job
    rng = derive_rng(seed, ri, i)
    sphere = on_sphere(mode, i)
    x0 = sample_history(rng, sys.n, r, sys.delays.max_delay, hist_pieces, sphere)
    u = None
    if sys.m and use_inputs:
        u = sample_input(sys.m, r, T, input_pieces, boundary=sphere, rng=rng)
    traj = solve_tds(sys, x0, u, T, cfg)
    sup = np.full(times.size, np.inf)
    hn = np.full(times.size, np.inf)
    for j, t in enumerate(times):
        if t > traj.t_end or (traj.escaped and t >= traj.t_end):
            break
        sup[j] = traj.sup_norm(0.0, t)
        hn[j] = window_norm(x0, traj, t)
    t_star = traj.escape.t_star if traj.escaped else None
    return sup, hn, t_star, x0, u


def estimate_reach(
    sys: SystemDef,
    radii: Sequence[float],
    T: float,
    samples: int,
    seed: int,
    cfg: SolveConfig = DEFAULT_CONFIG,
    times: Optional[Sequence[float]] = None,
    history_pieces: int = 4,
    input_pieces: int = 4,
    mode: str = "mixed",
    inputs: bool = True,
    workers: Optional[int] = None,
) -> ReachTable:
    """Sample ``samples`` pairs ``(x0, u)`` per radius and record running sups on the time grid.

    Per-sample generators are derived from ``(seed, radius index, sample
    index)``, and the reduction is a max, so the table does not depend on the
    order in which samples are evaluated.  Every sample drawn for a radius is
    admissible for the larger radii as well, hence the running max along the
    radius axis.
    """
    if T <= 0 or samples < 1:
        raise ValueError("need T > 0 and samples >= 1")
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii.size == 0 or radii[0] < 0:
        raise ValueError("radii must be a nonempty list of nonnegative numbers")
    times = np.linspace(0.0, T, 11) if times is None else np.asarray(times, dtype=float)
    if times.min() < 0 or times.max() > T + 1e-12:
        raise ValueError("time grid must lie in [0, T]")
    jobs = [
        (sys, float(r), ri, i, T, times, seed, history_pieces, input_pieces, mode, inputs, cfg)
        for ri, r in enumerate(radii)
        for i in range(samples)
    ]
    out = parallel_map(_reach_sample, jobs, workers)
    sup = np.zeros((radii.size, times.size))
    hn = np.zeros((radii.size, times.size))
    for (_, _, ri, *_), (s, h, _, _, _) in zip(jobs, out):
        np.maximum(sup[ri], s, out=sup[ri])
        np.maximum(hn[ri], h, out=hn[ri])
    sup = np.maximum.accumulate(sup, axis=0)
    hn = np.maximum.accumulate(hn, axis=0)
    escaped = ~np.isfinite(sup)
    meta = {
        "T": T,
        "history_pieces": history_pieces,
        "input_pieces": input_pieces,
        "mode": mode,
        "inputs": bool(inputs and sys.m > 0),
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
        "system": sys.name,
    }
    return ReachTable(radii, times, sup, hn, escaped, samples, seed, meta)


@dataclass(frozen=True, eq=False)
class ReachBound:
    """Nondecreasing bound ``r -> R(r)`` on reachable magnitudes over ``[0, horizon]``.

    Between grid nodes the values are interpolated linearly; beyond the last
    node the last slope is continued and ``extrapolated`` records that this
    happened while building the bound.  ``func``, when present, is an exact
    formula and replaces interpolation.
    """

    grid: np.ndarray
    values: np.ndarray
    horizon: float
    func: Optional[Callable[[float], float]] = None
    extrapolated: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 1:
            raise ValueError("grid and values must be equal-length 1-d arrays")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_table(cls, table: ReachTable, time_index: int = -1) -> "ReachBound":
        vals = table.sup_estimates[:, time_index]
        if not np.all(np.isfinite(vals)):
            raise ValueError("reach table contains escapes; no finite bound")
        return cls(
            table.radii,
            vals,
            float(table.times[time_index]),
            provenance={"source": "estimate_reach", "seed": table.seed, "samples": table.samples},
        )

    @classmethod
    def from_function(cls, func: Callable[[float], float], grid, horizon: float) -> "ReachBound":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.array([func(float(r)) for r in grid]), horizon, func=func, provenance={"source": "exact"})

    def outside(self, r: float) -> bool:
        return self.func is None and r > self.grid[-1]

    def __call__(self, r: float) -> float:
        if self.func is not None:
            return float(self.func(r))
        g, v = self.grid, self.values
        if g.size == 1:
            return float(v[0] if r <= g[0] else v[0] * r / g[0])
        if r <= g[-1]:
            return float(np.interp(r, g, v))
        slope = (v[-1] - v[-2]) / (g[-1] - g[-2])
        return float(v[-1] + slope * (r - g[-1]))

    def rho(self, r: float) -> float:
        return max(r, self(r))

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": SCHEMA,
                "grid": [float(x) for x in self.grid],
                "values": [float(x) for x in self.values],
                "horizon": self.horizon,
                "extrapolated": bool(self.extrapolated),
                "provenance": self.provenance,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ReachBound":
        d = json.loads(text)
        return cls(np.array(d["grid"]), np.array(d["values"]), float(d["horizon"]), None, bool(d["extrapolated"]), d.get("provenance", {}))


def extend_reach_bound(R1: ReachBound, n: int) -> ReachBound:
    """Bound for horizon ``n * T`` from one for ``T`` via ``B_{k+1}(r) = max(B_k(r), R1(max(r, B_k(r))))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return R1
    extrapolated = R1.extrapolated
    values = np.array(R1.values, dtype=float)
    for _ in range(n - 1):
        nxt = np.empty_like(values)
        for i, (r, b) in enumerate(zip(R1.grid, values)):
            arg = max(float(r), float(b))
            extrapolated |= R1.outside(arg)
            nxt[i] = max(b, R1(arg))
        values = nxt

    func = None
    if R1.func is not None:
        f1 = R1.func

        def func(r: float, _n=n) -> float:
            b = f1(r)
            for _ in range(_n - 1):
                b = max(b, f1(max(r, b)))
            return b

    prov = dict(R1.provenance)
    prov.update({"extended_from": R1.horizon, "steps": n})
    return ReachBound(R1.grid, values, n * R1.horizon, func, bool(extrapolated), prov)


@dataclass(frozen=True, eq=False)
class EscapeWitness:
    r: float
    x0: PiecewiseHistory
    u: Optional[InputSignal]
    t_star: float


def fc_probe(
    sys: SystemDef,
    r_max: float,
    T: float,
    samples: int,
    seed: int,
    radii: Optional[Sequence[float]] = None,
    cfg: SolveConfig = DEFAULT_CONFIG,
    history_pieces: int = 4,
    input_pieces: int = 4,
    workers: Optional[int] = None,
) -> list[EscapeWitness]:
    """Search sampled initial data and inputs for finite escape before ``T``.

    An empty result is evidence of forward completeness on the sampled family,
    nothing more.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    radii = geometric_grid(r_max / 10.0, r_max, 4) if radii is None else np.asarray(radii, dtype=float)
    times = np.array([0.0])
    jobs = [
        (sys, float(r), ri, i, T, times, seed, history_pieces, input_pieces, "mixed", True, cfg)
        for ri, r in enumerate(radii)
        for i in range(samples)
    ]
    out = parallel_map(_reach_sample, jobs, workers)
    return [
        EscapeWitness(job[1], x0, u, t_star)
        for job, (_, _, t_star, x0, u) in zip(jobs, out)
        if t_star is not None
    ]
