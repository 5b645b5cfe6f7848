"""Method-of-steps integration of delay systems and their associated ODEs.

Both solvers share one explicit adaptive Dormand-Prince 5(4) stepper whose
continuous extension (order 4) becomes the stored piece of each step.  Steps
never straddle a *stop*: for the delay system the stops are the propagated
breakpoints ``b + theta_k`` of the history, the input and of earlier
breakpoints; for the ODE they are the breakpoints of ``v`` and ``u``.  Within a
step every piecewise argument (history piece, input piece, earlier solution
piece) is read from the piece that contains the step midpoint, so values at
a stop are taken as one-sided limits from inside the step.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .history import PiecewiseHistory, segment_at
from .piecewise import MERGE_TOL, PiecewisePoly, _dedupe, _powers
from .rhsdsl import EvaluationOverflow, SystemDef, _checked_call
from .signals import InputSignal
from .trajectory import Escape, Trajectory


class SolverError(RuntimeError):
    pass


class EscapeError(SolverError):
    """Raised where a finite-time escape makes the request impossible."""

    def __init__(self, escape: Escape):
        self.escape = escape
        super().__init__(f"solution escaped at t*={escape.t_star:.6g}")


@dataclass(frozen=True)
class SolveConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    escape_threshold: float = 1e12
    escape_step_floor: float = 1e-13
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.escape_threshold > 1:
            raise ValueError("escape threshold must exceed 1")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def with_tolerances(self, rel_tol: float, abs_tol: float) -> "SolveConfig":
        return replace(self, rel_tol=rel_tol, abs_tol=abs_tol)


DEFAULT_CONFIG = SolveConfig()

# Dormand-Prince 5(4)
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
_D1, _D3, _D4, _D5, _D6, _D7 = (
    -12715105075 / 11282082432,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)

_EMPTY = np.zeros(0)
_FORCED_BUDGET = 10_000
_PI_BETA = 0.04
_PI_ALPHA = 0.2 - 0.75 * _PI_BETA


class _Dense:
    """Growing piecewise-quartic record of accepted steps."""

    def __init__(self, t0: float):
        self.nodes = [t0]
        self.coefs: list[np.ndarray] = []

    def add(self, t1: float, c: np.ndarray):
        self.nodes.append(t1)
        self.coefs.append(c)

    def at(self, s: float, ref: float) -> np.ndarray:
        i = bisect.bisect_right(self.nodes, ref) - 1
        if i >= len(self.coefs):
            i = len(self.coefs) - 1
        return np.dot(_powers(s - self.nodes[i], 4), self.coefs[i])


def _march(
    rhs: Callable[[float, np.ndarray, float], np.ndarray],
    y0: np.ndarray,
    T: float,
    stops: np.ndarray,
    cfg: SolveConfig,
    h_cap: float,
    dense: _Dense,
):
    """Integrate from 0 to ``T`` landing exactly on each entry of ``stops``."""
    rtol, atol = cfg.rel_tol, cfg.abs_tol
    t = 0.0
    y = np.array(y0, dtype=float)
    n = y.size
    stops = list(stops)
    if not stops or stops[-1] < T:
        stops.append(T)
    j = 0
    h_lim = min(h_cap, cfg.max_step, stops[0])
    h = min(h_cap, cfg.max_step, 1e-2 * max(1.0, T), stops[0])
    k1 = None
    n_steps = n_rej = n_rhs = 0
    last_rejected = False
    escape = None
    err_old = 1e-4  # PI controller memory
    forced = 0  # steps taken at the floor while the magnitude still grows
    floor_mag = 0.0
    while t < T:
        if n_steps + n_rej >= cfg.max_steps:
            raise SolverError(f"step budget of {cfg.max_steps} exhausted at t={t}")
        while stops[j] <= t:
            j += 1
        stop = stops[j]
        h = min(h, h_cap, cfg.max_step)
        hit = False
        h_prop = h
        if t + 1.1 * h >= stop and stop - t <= cfg.max_step:
            h = stop - t
            hit = True
        elif t + h >= stop:
            h = stop - t
            hit = True
        mid = t + 0.5 * h
        try:
            if k1 is None:
                k1 = rhs(t, y, mid)
                n_rhs += 1
            k2 = rhs(t + _C2 * h, y + h * (_A21 * k1), mid)
            k3 = rhs(t + _C3 * h, y + h * (_A31 * k1 + _A32 * k2), mid)
            k4 = rhs(t + _C4 * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3), mid)
            k5 = rhs(t + _C5 * h, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4), mid)
            k6 = rhs(t + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5), mid)
            y1 = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            k7 = rhs(t + h, y1, mid)
            n_rhs += 6
        except EvaluationOverflow:
            n_rej += 1
            last_rejected = True
            h *= 0.25
            if k1 is None or h < cfg.escape_step_floor:
                escape = Escape(t, float(np.linalg.norm(y)), h, "low", "right-hand side overflow")
                break
            continue
        if n:
            e = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y1))
            err = math.sqrt(float(np.dot(e / sc, e / sc)) / n)
        else:
            err = 0.0
        if forced and not (err <= 1.0):
            if not np.all(np.isfinite(y1)):
                escape = Escape(t, float(np.linalg.norm(y)), h, "low", "non-finite value at the step floor")
                break
            err = 1.0
        if err <= 1.0:
            r2 = y1 - y
            r3 = h * k1 - r2
            r4 = r2 - h * k7 - r3
            r5 = h * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7)
            hh = h * h
            c = np.array([y, (r2 + r3) / h, (r4 + r5 - r3) / hh, (-r4 - 2.0 * r5) / (hh * h), r5 / (hh * hh)])
            t_new = stop if hit else t + h
            dense.add(t_new, c)
            t = t_new
            y = y1
            n_steps += 1
            k1 = None if hit else k7
            fac = 5.0 if err == 0.0 else min(5.0, max(0.1, 0.9 * err**-_PI_ALPHA * err_old**_PI_BETA))
            if last_rejected:
                fac = min(fac, 1.0)
            last_rejected = False
            if hit:
                # a shortened landing step says little about the next segment
                h = max(h * fac, h_prop)
            else:
                err_old = max(err, 1e-4)
                h *= fac
        else:
            n_rej += 1
            last_rejected = True
            h *= max(0.2, 0.9 * err**-_PI_ALPHA) if err == err else 0.2
        if h < cfg.escape_step_floor and t < T:
            mag = float(np.linalg.norm(y))
            if mag > cfg.escape_threshold or not math.isfinite(mag):
                escape = Escape(t, mag, h)
                break
            # below the threshold: keep pushing at the floor as long as |x| grows
            if forced and (mag <= floor_mag or forced > _FORCED_BUDGET):
                raise SolverError(f"step size collapsed to {h:.3g} at t={t} with |x|={mag:.3g}")
            forced += 1
            floor_mag = mag
            h = cfg.escape_step_floor
        elif forced and h >= 2 * cfg.escape_step_floor:
            forced = 0
    return t, y, escape, (n_steps, n_rej, n_rhs)


def propagate_breakpoints(base, thetas, T: float, tol: float = MERGE_TOL) -> np.ndarray:
    """Closure of ``base`` under ``b -> b + theta_k`` restricted to ``(0, T]``.

    Only positive images propagate further: a point of the initial history
    matters once, a kink of the solution keeps reappearing every delay.
    """
    found = np.empty(0)
    frontier = np.asarray(sorted(base), dtype=float)
    while frontier.size:
        cand = (frontier[:, None] + np.asarray(thetas)[None, :]).ravel()
        cand = cand[(cand > tol) & (cand <= T + tol)]
        cand = np.minimum(cand, T)
        cand = _dedupe(cand, tol)
        if found.size:
            idx = np.searchsorted(found, cand)
            lo = np.abs(cand - found[np.clip(idx - 1, 0, found.size - 1)])
            hi = np.abs(cand - found[np.clip(idx, 0, found.size - 1)])
            cand = cand[(lo > tol) & (hi > tol)]
        found = np.sort(np.concatenate([found, cand]))
        frontier = cand
    return found


def _prepare_input(u: Optional[InputSignal], m: int, T: float) -> InputSignal:
    if u is None:
        return InputSignal.zero(m, max(T, 1.0))
    if u.dim != m:
        raise ValueError(f"input has dimension {u.dim}, system expects m={m}")
    return u


def _input_reader(u: InputSignal):
    if u.dim == 0:
        return lambda t, mid: _EMPTY
    poly = u.poly

    def read(t, mid):
        return poly.eval_piece(poly.piece_index(mid), t)

    return read


def _finish(dense: _Dense, y0: np.ndarray, t_reached: float, escape, stats, cfg, bps) -> Trajectory:
    nodes, coefs = dense.nodes, dense.coefs
    if not coefs:
        tiny = max(escape.last_step if escape else 0.0, 1e-300)
        c = np.zeros((1, 5, y0.size))
        c[0, 0] = y0
        poly = PiecewisePoly(np.array([0.0, tiny]), c)
    else:
        poly = PiecewisePoly(np.array(nodes), np.array(coefs))
    bps = np.asarray(bps, dtype=float)
    bps = bps[bps < poly.end]
    return Trajectory(
        poly=poly,
        breakpoints=bps,
        escape=escape,
        n_steps=stats[0],
        n_rejected=stats[1],
        n_rhs=stats[2],
        rel_tol=cfg.rel_tol,
        abs_tol=cfg.abs_tol,
    )


def solve_tds(
    sys: SystemDef,
    x0: PiecewiseHistory,
    u: Optional[InputSignal] = None,
    T: float = 1.0,
    cfg: SolveConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Solution of the delay system from ``x0`` under ``u`` on ``[0, T]`` by the method of steps."""
    if x0.dim != sys.n:
        raise ValueError(f"history has dimension {x0.dim}, system expects n={sys.n}")
    if abs(x0.theta_p - sys.delays.max_delay) > 1e-9:
        raise ValueError(f"history covers [-{x0.theta_p}, 0] but the largest delay is {sys.delays.max_delay}")
    if T <= 0:
        raise ValueError("T must be positive")
    u = _prepare_input(u, sys.m, T)
    thetas = list(sys.delays.values)
    hist = x0.poly
    u_read = _input_reader(u)
    f = sys.f
    dense = _Dense(0.0)

    def delayed(s, ref):
        if ref < 0.0:
            return hist.eval_piece(hist.piece_index(ref), s)
        return dense.at(s, ref)

    def rhs(t, y, mid):
        xd = [delayed(t - th, mid - th) for th in thetas]
        return _checked_call(f, y, xd, u_read(t, mid))

    ub = u.breakpoints[(u.breakpoints > 0) & (u.breakpoints < T)]
    base = np.concatenate([x0.breakpoints, [0.0], ub])
    prop = propagate_breakpoints(base, thetas, T)
    stops = _dedupe(np.concatenate([prop, ub, [T]]))
    stops = stops[stops > 0]
    t_end, _, escape, stats = _march(rhs, x0.point_value, T, stops, cfg, thetas[0], dense)
    bps = _dedupe(np.concatenate([[0.0], prop, ub]))
    return _finish(dense, x0.point_value, t_end, escape, stats, cfg, bps)


def solve_ode(
    sys: SystemDef,
    z0,
    v: InputSignal,
    u: Optional[InputSignal] = None,
    T: float = 1.0,
    cfg: SolveConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Solution of ``z' = f(z, v(t), u(t))`` where ``v`` stacks the p delayed slots."""
    n, p = sys.n, sys.p
    if v.dim != n * p:
        raise ValueError(f"v has {v.dim} components, expected p*n = {p * n}")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if z0.size != n:
        raise ValueError("z0 dimension mismatch")
    if T <= 0:
        raise ValueError("T must be positive")
    u = _prepare_input(u, sys.m, T)
    u_read = _input_reader(u)
    vp = v.poly
    f = sys.f
    dense = _Dense(0.0)

    def rhs(t, y, mid):
        vv = vp.eval_piece(vp.piece_index(mid), t)
        xd = [vv[k * n : (k + 1) * n] for k in range(p)]
        return _checked_call(f, y, xd, u_read(t, mid))

    cuts = np.concatenate([v.breakpoints, u.breakpoints])
    cuts = _dedupe(np.concatenate([cuts[(cuts > 0) & (cuts < T)], [T]]))
    t_end, _, escape, stats = _march(rhs, z0, T, cuts, cfg, math.inf, dense)
    return _finish(dense, z0, t_end, escape, stats, cfg, np.concatenate([[0.0], cuts[cuts < T]]))


def lift_to_tds(sys: SystemDef, z0, v: InputSignal, delta: float) -> PiecewiseHistory:
    """History agreeing with ``v_k(. + theta_k)`` on each window ``[-theta_k, -theta_k + delta)``, zero elsewhere."""
    bound = sys.delays.separation()
    if not (0.0 < delta < bound):
        raise ValueError(f"delta={delta} outside the admissible range (0, {bound})")
    n = sys.n
    if v.dim != n * sys.p:
        raise ValueError(f"v has {v.dim} components, expected p*n = {n * sys.p}")
    if v.horizon < delta - MERGE_TOL:
        raise ValueError(f"v is only defined up to {v.horizon} < delta")
    breaks = [-sys.delays.max_delay]
    coeffs = []
    deg = v.poly.degree
    zero = np.zeros((deg + 1, n))
    cursor = breaks[0]
    for k in reversed(range(sys.p)):
        theta = sys.delays.values[k]
        if -theta > cursor + MERGE_TOL:
            breaks.append(-theta)
            coeffs.append(zero)
        block = PiecewisePoly(v.poly.breaks, v.poly.coeffs[:, :, k * n : (k + 1) * n]).restrict(0.0, delta)
        for i in range(block.n_pieces):
            breaks.append(float(block.breaks[i + 1]) - theta)
            coeffs.append(block.coeffs[i])
        cursor = breaks[-1]
    breaks.append(0.0)
    coeffs.append(zero)
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    return PiecewiseHistory(PiecewisePoly(np.array(breaks), np.array(coeffs)), z0)


def flow_segment(
    sys: SystemDef,
    x0: PiecewiseHistory,
    u: Optional[InputSignal] = None,
    t: float = 0.0,
    cfg: SolveConfig = DEFAULT_CONFIG,
) -> PiecewiseHistory:
    """The state ``x_t(x0, u)``."""
    if t == 0.0:
        return x0
    traj = solve_tds(sys, x0, u, t, cfg)
    if traj.escaped:
        raise EscapeError(traj.escape)
    return segment_at(x0, traj, t)


def trajectory_csv(traj: Trajectory, ts=None) -> str:
    """``t, x_1..x_n, breakpoint`` rows at the step nodes (or at ``ts``)."""
    ts = traj.nodes if ts is None else np.asarray(ts, dtype=float)
    bps = traj.breakpoints
    lines = ["t," + ",".join(f"x_{i + 1}" for i in range(traj.dim)) + ",breakpoint"]
    for t in ts:
        v = traj(float(t))
        flag = int(bps.size > 0 and np.min(np.abs(bps - t)) <= 1e-12)
        lines.append(",".join([repr(float(t))] + [repr(float(x)) for x in v] + [str(flag)]))
    return "\n".join(lines) + "\n"
