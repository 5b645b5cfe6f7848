"""Empirical stability checks and the KL envelope transfer from continuous to L-infinity data.

The envelope chain is

* ``mu(t, r)``: bound on ``||x_t||`` for ``||x0|| <= r`` (fitted, :func:`fit_mu`);
* ``kappa(r)``: Lipschitz bound on the radius-``r`` ball (catalog formula or :class:`KappaTable`);
* ``beta``: KL envelope for continuous initial histories (:func:`fit_envelope`);
* ``bar_beta``: the envelope for ``L^inf x R^n`` histories, :class:`BarBetaEnvelope`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .history import PiecewiseHistory, norm_xinf, window_norm
from .reachability import ReachTable
from .rhsdsl import SystemDef, estimate_lipschitz, parse_expr, to_source, _compile_scalar
from .sampling import on_sphere, parallel_map, sample_continuous_history, sample_history
from .signals import derive_rng
from .solver import DEFAULT_CONFIG, SolveConfig, solve_tds
from .trajectory import Trajectory

SCHEMA = "retarda.envelope/1"
MARGIN = 1.1


class KLShapeError(ValueError):
    """An envelope violates KL shape at a specific grid cell."""

    def __init__(self, message: str, cell: tuple[float, float]):
        self.cell = cell
        super().__init__(f"{message} at (r={cell[0]:.6g}, t={cell[1]:.6g})")


class EnvelopeRefused(RuntimeError):
    pass


# -- monotone tables ---------------------------------------------------------


def _interp_r(r: float, grid: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Linear interpolation along the first axis, last slope continued past the end."""
    if grid.size == 1:
        return vals[0] * (r / grid[0]) if grid[0] > 0 else vals[0]
    if r <= grid[-1]:
        i = min(max(int(np.searchsorted(grid, r, side="right")) - 1, 0), grid.size - 2)
    else:
        i = grid.size - 2
    w = (r - grid[i]) / (grid[i + 1] - grid[i])
    return vals[i] + w * (vals[i + 1] - vals[i])


@dataclass(frozen=True, eq=False)
class MuBound:
    """Grid bound ``mu(t, r)``, nondecreasing in both arguments.

    ``values[i, j]`` belongs to ``radii[i]`` and ``times[j]``; the grid always
    contains ``r = 0`` with value 0.  Evaluation is bilinear, continues the last
    radial slope beyond the largest radius and holds the last time column.
    """

    radii: np.ndarray
    times: np.ndarray
    values: np.ndarray
    margin: float = MARGIN

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(np.diff(v, axis=0) < 0) or np.any(np.diff(v, axis=1) < 0):
            raise ValueError("mu table must be nondecreasing in both arguments")

    def __call__(self, t: float, r: float) -> float:
        if r < 0 or t < 0:
            raise ValueError("mu is defined for t, r >= 0")
        col = _interp_r(r, self.radii, self.values)
        if r > self.radii[-1]:
            # per-column slopes differ; keep the extrapolated row nondecreasing in t
            col = np.maximum.accumulate(col)
        return float(np.interp(t, self.times, col))

    def to_dict(self) -> dict:
        return {
            "radii": self.radii.tolist(),
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "margin": self.margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MuBound":
        return cls(np.array(d["radii"], float), np.array(d["times"], float), np.array(d["values"], float), float(d["margin"]))


def fit_mu(table: ReachTable, margin: float = MARGIN) -> MuBound:
    """Running max of the sampled history norms over ``t' <= t`` and ``r' <= r``, times ``margin``."""
    if table.any_escape:
        raise ValueError("reach table has escape flags; mu cannot be fitted")
    hn = np.maximum.accumulate(np.maximum.accumulate(table.history_norms, axis=0), axis=1)
    radii = np.asarray(table.radii, dtype=float)
    if radii[0] > 0:
        radii = np.concatenate([[0.0], radii])
        hn = np.vstack([np.zeros(hn.shape[1]), hn])
    return MuBound(radii, np.asarray(table.times, float), margin * hn, margin)


@dataclass(frozen=True, eq=False)
class KappaTable:
    """Piecewise-linear upper bound for a nondecreasing Lipschitz estimate.

    The value placed at node ``r_i`` is the estimate belonging to ``r_{i+1}``,
    so interpolation between nodes never drops below the estimate of the
    enclosing ball.
    """

    radii: np.ndarray
    values: np.ndarray

    @classmethod
    def estimate(cls, sys: SystemDef, radii: Sequence[float], samples: int = 400, seed: int = 0) -> "KappaTable":
        radii = np.asarray(sorted(radii), dtype=float)
        raw = np.maximum.accumulate([estimate_lipschitz(sys, float(r), samples, seed) for r in radii])
        shifted = np.concatenate([raw[1:], raw[-1:]])
        return cls(radii, shifted)

    def __call__(self, r: float) -> float:
        if self.radii.size == 1:
            return float(self.values[0])
        if r <= self.radii[0]:
            return float(self.values[0])
        return float(max(_interp_r(r, self.radii, self.values), self.values[0]))

    def to_dict(self) -> dict:
        return {"radii": self.radii.tolist(), "values": self.values.tolist()}


def gronwall_bound(r: float, kappa: Callable[[float], float], mu: Callable[[float, float], float], theta_p: float) -> float:
    """``exp(theta_p * kappa(mu(theta_p, r))) * r``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return 0.0
    k = kappa(mu(theta_p, r))
    if not math.isfinite(k):
        raise ValueError(f"kappa evaluation failed at r={r}")
    return math.exp(theta_p * k) * r


# -- KL envelopes ------------------------------------------------------------


class KLEnvelope:
    """Callable ``(r, t) -> beta(r, t)`` with a KL-shape validator."""

    def __call__(self, r: float, t: float) -> float:
        raise NotImplementedError

    def grid(self, radii, times) -> np.ndarray:
        return np.array([[self(float(r), float(t)) for t in times] for r in radii])

    def validate(self, radii: Sequence[float], times: Sequence[float], tol: float = 1e-12) -> None:
        """Check zero at ``r = 0``, monotonicity on the grid, and decay well past the grid."""
        radii = np.asarray(radii, float)
        times = np.asarray(times, float)
        vals = self.grid(radii, times)
        for i, r in enumerate(radii):
            for j, t in enumerate(times):
                v = vals[i, j]
                if not math.isfinite(v) or v < 0:
                    raise KLShapeError("non-finite or negative value", (r, t))
                if r == 0 and v != 0:
                    raise KLShapeError("nonzero at r = 0", (r, t))
                if i and v < vals[i - 1, j] - tol * max(1.0, abs(v)):
                    raise KLShapeError("decreasing in r", (r, t))
                if j and v > vals[i, j - 1] + tol * max(1.0, abs(v)):
                    raise KLShapeError("increasing in t", (r, t))
        far = times[-1] + max(1.0, times[-1] - times[0]) * 20.0
        for r in radii:
            top = self(float(r), float(times[0]))
            if top > 0 and not self(float(r), far) < 1e-3 * top:
                raise KLShapeError("no decay towards 0", (float(r), far))


class FunctionEnvelope(KLEnvelope):
    """Closed-form envelope; only the ``gain * r * exp(-rate * t)`` family serialises."""

    def __init__(self, fn: Callable[[float, float], float], params: Optional[dict] = None):
        self.fn = fn
        self.params = params

    @classmethod
    def exponential(cls, gain: float = 1.0, rate: float = 1.0) -> "FunctionEnvelope":
        return cls(lambda r, t: gain * r * math.exp(-rate * t), {"gain": gain, "rate": rate})

    def __call__(self, r, t):
        return float(self.fn(r, t))

    def to_dict(self) -> dict:
        if self.params is None:
            raise ValueError("envelope has no serialisable form")
        return {"kind": "exponential", **self.params}


@dataclass(eq=False)
class GridEnvelope(KLEnvelope):
    """Nonparametric envelope: bilinear on a (radius, time) grid, exponential tail after the horizon."""

    radii: np.ndarray
    times: np.ndarray
    values: np.ndarray
    tail_rate: float
    margin: float = MARGIN
    meta: dict = field(default_factory=dict)

    def __call__(self, r: float, t: float) -> float:
        if r < 0 or t < 0:
            raise ValueError("envelope is defined for r, t >= 0")
        col = _interp_r(r, self.radii, self.values)
        if r > self.radii[-1]:
            col = np.maximum.accumulate(col[::-1])[::-1]
        if t <= self.times[-1]:
            return float(np.interp(t, self.times, col))
        return float(col[-1] * math.exp(-self.tail_rate * (t - self.times[-1])))

    def to_dict(self) -> dict:
        return {
            "kind": "grid",
            "radii": self.radii.tolist(),
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "tail_rate": self.tail_rate,
            "margin": self.margin,
            "meta": self.meta,
        }


class BarBetaEnvelope(KLEnvelope):
    """Envelope for ``L^inf x R^n`` histories built from a continuous-data envelope ``beta``.

    With ``g(r) = exp(theta_p kappa(mu(theta_p, r))) r``::

        bar_beta(r, t) = max(exp(theta_p - t) g(r), tilde(g(r), t - theta_p))

    where ``tilde`` continues ``beta`` to negative times by ``beta(r, 0) e^{-t}``.
    """

    def __init__(self, beta: KLEnvelope, kappa: Callable[[float], float], mu: Callable[[float, float], float], theta_p: float):
        self.beta = beta
        self.kappa = kappa
        self.mu = mu
        self.theta_p = float(theta_p)

    def gronwall(self, r: float) -> float:
        return gronwall_bound(r, self.kappa, self.mu, self.theta_p)

    def tilde(self, r: float, t: float) -> float:
        if t < -self.theta_p:
            raise ValueError(f"tilde is defined for t >= -{self.theta_p}")
        if t < 0:
            return self.beta(r, 0.0) * math.exp(-t)
        return self.beta(r, t)

    def __call__(self, r: float, t: float) -> float:
        if t < 0:
            raise ValueError("t must be nonnegative")
        g = self.gronwall(r)
        return max(math.exp(self.theta_p - t) * g, self.tilde(g, t - self.theta_p))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "bar_beta",
            "theta_p": self.theta_p,
            "beta": _envelope_dict(self.beta),
            "kappa": _kappa_dict(self.kappa),
            "mu": self.mu.to_dict() if isinstance(self.mu, MuBound) else _no_source("mu"),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _no_source(what):
    raise ValueError(f"{what} is a plain function and cannot be serialised")


def _envelope_dict(env: KLEnvelope) -> dict:
    if isinstance(env, (GridEnvelope, FunctionEnvelope)):
        return env.to_dict()
    return _no_source("beta")


class KappaExpr:
    """``kappa`` given as an expression in ``r`` (catalog systems ship one)."""

    def __init__(self, source: str):
        self.node = parse_expr(source, allow_r=True)
        self.source = to_source(self.node)
        self._fn = _compile_scalar(self.node)

    def __call__(self, r: float) -> float:
        return float(self._fn(r))


def _kappa_dict(kappa) -> dict:
    if isinstance(kappa, KappaTable):
        return {"kind": "table", **kappa.to_dict()}
    if isinstance(kappa, KappaExpr):
        return {"kind": "expr", "source": kappa.source}
    return _no_source("kappa")


def envelope_from_dict(d: dict) -> KLEnvelope:
    kind = d.get("kind")
    if kind == "grid":
        return GridEnvelope(
            np.array(d["radii"], float),
            np.array(d["times"], float),
            np.array(d["values"], float),
            float(d["tail_rate"]),
            float(d["margin"]),
            d.get("meta", {}),
        )
    if kind == "exponential":
        return FunctionEnvelope.exponential(float(d["gain"]), float(d["rate"]))
    if kind == "bar_beta":
        k = d["kappa"]
        kappa = KappaTable(np.array(k["radii"], float), np.array(k["values"], float)) if k["kind"] == "table" else KappaExpr(k["source"])
        return BarBetaEnvelope(envelope_from_dict(d["beta"]), kappa, MuBound.from_dict(d["mu"]), float(d["theta_p"]))
    raise ValueError(f"unknown envelope kind {kind!r}")


def envelope_from_json(text: str) -> KLEnvelope:
    return envelope_from_dict(json.loads(text))


def build_bar_beta(beta: KLEnvelope, kappa, mu, theta_p: float, radii=None, times=None) -> BarBetaEnvelope:
    """Assemble ``bar_beta`` and validate its KL shape on a 50 x 50 grid (or the given one)."""
    env = BarBetaEnvelope(beta, kappa, mu, theta_p)
    radii = np.linspace(0.0, 5.0, 50) if radii is None else radii
    times = np.linspace(0.0, 10.0 * theta_p, 50) if times is None else times
    env.validate(radii, times)
    return env


# -- fitting on continuous data ----------------------------------------------


def window_sup(x0: PiecewiseHistory, traj: Trajectory, a: float, b: float) -> float:
    """``sup_{a <= s <= b} ||x_s||``, i.e. the sup of ``|x0 <> x|`` over ``[a - theta_p, b]``."""
    lo = a - x0.theta_p
    best = traj.poly.ess_sup(max(lo, 0.0), b)
    if lo < 0.0:
        best = max(best, x0.poly.ess_sup(lo, 0.0))
    return best


def _time_grid(horizon: float, dt: float) -> np.ndarray:
    k = max(1, int(round(horizon / dt)))
    return np.linspace(0.0, horizon, k + 1)


def _fit_sample(job):
    sys, r, ri, i, horizon, times, seed, pieces, mode, cfg = job
    rng = derive_rng(seed, 0xE7, ri, i)
    x0 = sample_continuous_history(rng, sys.n, r, sys.delays.max_delay, pieces, on_sphere(mode, i))
    traj = solve_tds(sys, x0, None, horizon, cfg)
    if traj.escaped:
        return norm_xinf(x0), None, traj.escape.t_star
    cells = np.array([window_sup(x0, traj, a, b) for a, b in zip(times[:-1], times[1:])])
    return norm_xinf(x0), cells, None


def fit_envelope(
    sys: SystemDef,
    radii: Sequence[float],
    horizon: float,
    samples: int,
    seed: int,
    cfg: SolveConfig = DEFAULT_CONFIG,
    dt: float = 0.1,
    pieces: int = 4,
    mode: str = "mixed",
    margin: float = MARGIN,
    min_rate: float = 1e-6,
    workers: Optional[int] = None,
) -> GridEnvelope:
    """KL envelope dominating ``||x_t(x0)||`` over sampled continuous ``x0`` with ``||x0|| <= r``.

    Construction, in this order:

    1. exact sups of ``||x_s||`` over each time cell ``[t_k, t_{k+1}]`` per sample;
    2. radial node ``r_j`` takes the max over samples with norm ``<= r_j``, raised
       (top node down) just enough that interpolation towards ``r_{j+1}`` covers
       the samples in between; the first node also covers the segment from the
       origin;
    3. time node ``t_k`` takes the max over all cells from ``k - 1`` on, which
       makes it nonincreasing and lets linear interpolation dominate each cell;
    4. the tail rate is the slowest decay over the last 10% of the horizon.

    Refuses with :class:`EnvelopeRefused` ("non-decaying") when the data does
    not decay or a sample escapes.
    """
    if not sys.zero_equilibrium:
        raise ValueError("envelope fitting needs a system with f(0, 0) = 0")
    nodes = np.asarray(sorted(float(r) for r in radii))
    if nodes[0] < 0:
        raise ValueError("radii must be nonnegative")
    times = _time_grid(horizon, dt)
    jobs = [(sys, float(r), ri, i, horizon, times, seed, pieces, mode, cfg) for ri, r in enumerate(nodes) for i in range(samples)]
    out = parallel_map(_fit_sample, jobs, workers)
    for job, (_, _, t_star) in zip(jobs, out):
        if t_star is not None:
            raise EnvelopeRefused(f"non-decaying: sample at r={job[1]:.4g} escaped at t={t_star:.6g}")
    norms = np.array([s for s, _, _ in out])
    cells = np.array([c for _, c, _ in out])

    if nodes[0] > 0:
        nodes = np.concatenate([[0.0], nodes])
    tol = 1e-12 * max(1.0, nodes[-1])
    radial = np.array([cells[norms <= rj + tol].max(axis=0) if np.any(norms <= rj + tol) else np.zeros(cells.shape[1]) for rj in nodes])
    radial[0] = 0.0
    # top down: the smallest node value whose interpolant still covers the samples above the node
    for j in range(nodes.size - 2, 0, -1):
        lo, hi = nodes[j], nodes[j + 1]
        inside = (norms > lo + tol) & (norms < hi - tol)
        if np.any(inside):
            w = (norms[inside] - lo) / (hi - lo)
            need = ((cells[inside] - w[:, None] * radial[j + 1]) / (1.0 - w)[:, None]).max(axis=0)
            radial[j] = np.maximum(radial[j], np.minimum(need, radial[j + 1]))
    if nodes.size > 1:
        # the segment from the origin is pinned at 0, so only the first node can absorb small samples
        small = (norms > 0) & (norms <= nodes[1] + tol)
        if np.any(small):
            need = (cells[small] * (nodes[1] / norms[small])[:, None]).max(axis=0)
            radial[1] = np.maximum(radial[1], need)
    radial = np.maximum.accumulate(radial, axis=0)

    K = cells.shape[1]
    suffix = np.maximum.accumulate(radial[:, ::-1], axis=1)[:, ::-1]  # suffix[:, k] = max over cells >= k
    values = np.empty((nodes.size, K + 1))
    values[:, 0] = suffix[:, 0]
    values[:, 1:] = suffix[:, np.arange(K)]
    values *= margin

    start = int(np.searchsorted(times, 0.9 * horizon))
    start = min(start, times.size - 2)
    span = times[-1] - times[start]
    rates = []
    for row in values:
        if row[-1] > 0:
            rates.append(math.log(row[start] / row[-1]) / span)
        elif row[start] > 0:
            rates.append(math.inf)
    if not rates:
        rate = 1.0  # all data identically zero
    else:
        rate = min(rates)
        if not rate > min_rate:
            worst = float(nodes[int(np.argmax(values[:, -1]))])
            raise EnvelopeRefused(
                f"non-decaying: envelope does not decay over the last tenth of the horizon (rate {rate:.3g}, r={worst:.4g})"
            )
        if math.isinf(rate):
            rate = 1.0
    meta = {
        "seed": seed,
        "samples_per_radius": samples,
        "horizon": horizon,
        "dt": dt,
        "pieces": pieces,
        "mode": mode,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
    }
    return GridEnvelope(nodes, times, values, rate, margin, meta)


# -- checks on L^inf data ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class Violation:
    r: float
    sample: int
    x0: PiecewiseHistory
    t: float
    lhs: float
    rhs: float
    tag: str = "bound"


@dataclass(frozen=True, eq=False)
class UgasReport:
    """First violation of every offending sample, plus the totals checked."""

    violations: list
    samples_checked: int
    radii: np.ndarray
    horizon: float
    seed: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_csv(self) -> str:
        rows = ["r,sample,x0_norm,t,lhs,rhs,tag"]
        for v in self.violations:
            rows.append(f"{v.r!r},{v.sample},{norm_xinf(v.x0)!r},{v.t!r},{v.lhs!r},{v.rhs!r},{v.tag}")
        return "\n".join(rows) + "\n"


def _ugas_sample(job):
    sys, env, r, ri, i, horizon, times, seed, pieces, mode, cfg = job
    rng = derive_rng(seed, 0xC4, ri, i)
    x0 = sample_history(rng, sys.n, r, sys.delays.max_delay, pieces, on_sphere(mode, i))
    s = norm_xinf(x0)
    traj = solve_tds(sys, x0, None, horizon, cfg)
    for t in times:
        if traj.escaped and t >= traj.t_end:
            t_star = traj.escape.t_star
            return Violation(r, i, x0, t_star, math.inf, env(s, t_star), "escape")
        lhs = window_norm(x0, traj, float(t))
        rhs = env(s, float(t))
        if lhs > rhs:
            return Violation(r, i, x0, float(t), lhs, rhs)
    return None


def check_ugas(
    sys: SystemDef,
    bar_beta: KLEnvelope,
    radii: Sequence[float],
    horizon: float,
    samples: int,
    seed: int,
    cfg: SolveConfig = DEFAULT_CONFIG,
    dt: float = 0.25,
    pieces: int = 4,
    mode: str = "mixed",
    spread: bool = False,
    workers: Optional[int] = None,
) -> UgasReport:
    """Test ``||x_t(x0)|| <= bar_beta(||x0||, t)`` on a time grid for piecewise-constant ``x0``.

    ``samples`` histories are drawn per radius, or in total and dealt to the
    radii in turn when ``spread`` is set.  The histories are generally
    discontinuous, including at 0.
    """
    radii = np.asarray(radii, dtype=float)
    times = _time_grid(horizon, dt)
    if spread:
        pairs = [(i % radii.size, i) for i in range(samples)]
    else:
        pairs = [(ri, i) for ri in range(radii.size) for i in range(samples)]
    jobs = [(sys, bar_beta, float(radii[ri]), ri, i, horizon, times, seed, pieces, mode, cfg) for ri, i in pairs]
    found = [v for v in parallel_map(_ugas_sample, jobs, workers) if v is not None]
    return UgasReport(found, len(jobs), radii, horizon, seed)


@dataclass(frozen=True)
class LsGaReport:
    safe_delta: dict
    ga_times: list
    horizon: float

    @property
    def locally_stable(self) -> bool:
        return all(d is not None for d in self.safe_delta.values())

    @property
    def attractive(self) -> bool:
        return all(t is not None for _, _, t in self.ga_times)


DELTA_FACTORS = (1.0, 1 / 1.1) + tuple(2.0**-k for k in range(1, 11))


def _ls_sample(job):
    sys, eps, delta, key, i, horizon, times, seed, pieces, cfg = job
    rng = derive_rng(seed, 0x15, key, i)
    x0 = sample_history(rng, sys.n, delta, sys.delays.max_delay, pieces, on_sphere("mixed", i))
    traj = solve_tds(sys, x0, None, horizon, cfg)
    if traj.escaped:
        return True
    bound = eps * (1.0 + 1e-9)
    return any(window_norm(x0, traj, float(t)) > bound for t in times if t <= traj.t_end)


def _ga_sample(job):
    sys, r, ri, i, horizon, times, seed, pieces, cfg = job
    rng = derive_rng(seed, 0x6A, ri, i)
    x0 = sample_history(rng, sys.n, r, sys.delays.max_delay, pieces, on_sphere("mixed", i))
    target = 0.01 * norm_xinf(x0)
    traj = solve_tds(sys, x0, None, horizon, cfg)
    for t in times:
        if t > traj.t_end or (traj.escaped and t >= traj.t_end):
            return None
        if window_norm(x0, traj, float(t)) <= target:
            return float(t)
    return None


def check_ls_ga(
    sys: SystemDef,
    eps_grid: Sequence[float],
    radii: Sequence[float],
    horizon: float,
    samples: int,
    seed: int,
    cfg: SolveConfig = DEFAULT_CONFIG,
    dt: float = 0.25,
    pieces: int = 4,
    workers: Optional[int] = None,
) -> LsGaReport:
    """Empirical local stability and global attractivity probes.

    For every ``eps`` the candidates ``delta = eps * f`` with ``f`` in
    :data:`DELTA_FACTORS` are tried from the largest down; the first one whose
    sampled trajectories never leave the ``eps`` ball is reported (``None`` if
    all fail).  Attractivity records, per sample, the first grid time with
    ``||x_t|| <= 0.01 ||x0||``.
    """
    if not sys.zero_equilibrium:
        raise ValueError("stability probes need a system with f(0, 0) = 0")
    times = _time_grid(horizon, dt)
    safe = {}
    for ei, eps in enumerate(eps_grid):
        safe[float(eps)] = None
        for fi, fac in enumerate(DELTA_FACTORS):
            delta = eps * fac
            jobs = [(sys, eps, delta, ei * 100 + fi, i, horizon, times, seed, pieces, cfg) for i in range(samples)]
            if not any(parallel_map(_ls_sample, jobs, workers)):
                safe[float(eps)] = delta
                break
    jobs = [(sys, float(r), ri, i, horizon, times, seed, pieces, cfg) for ri, r in enumerate(radii) for i in range(samples)]
    ga = [(job[2], job[3], t) for job, t in zip(jobs, parallel_map(_ga_sample, jobs, workers))]
    ga = [(float(radii[ri]), i, t) for ri, i, t in ga]
    return LsGaReport(safe, ga, horizon)
