"""Initial histories in ``L^inf x R^n`` and continuous histories.

A history on ``[-theta_p, 0]`` is a piecewise polynomial read only on the
half-open pieces ``[s_i, s_{i+1})`` together with a separately stored value at
``0``.  Two histories that agree almost everywhere and at ``0`` are the same
state, and the norm is ``max(ess sup |x0|, |x0(0)|)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .piecewise import MERGE_TOL, PiecewisePoly, concat, vnorm
from .trajectory import Trajectory

MAX_DEGREE = 5


@dataclass(frozen=True)
class Delays:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1:
            raise ValueError("at least one delay is required")
        if any(not np.isfinite(v) or v <= 0 for v in vals):
            raise ValueError("nonpositive delay")
        if len(set(vals)) != len(vals):
            raise ValueError("duplicate delay")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("delays must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @property
    def p(self) -> int:
        return len(self.values)

    @property
    def max_delay(self) -> float:
        return self.values[-1]

    @property
    def min_delay(self) -> float:
        return self.values[0]

    def separation(self) -> float:
        """``min(theta_1, min_{k != j} |theta_k - theta_j|)``."""
        gaps = [b - a for a, b in zip(self.values, self.values[1:])]
        return min([self.values[0]] + gaps)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class PiecewiseHistory:
    """Element of ``X^inf``: pieces on ``[-theta_p, 0)`` plus ``x0(0)``."""

    poly: PiecewisePoly
    point_value: np.ndarray

    def __post_init__(self):
        pv = np.atleast_1d(np.array(self.point_value, dtype=float))
        if pv.ndim != 1 or pv.size != self.poly.dim:
            raise ValueError("point_value dimension does not match the pieces")
        if abs(self.poly.end) > MERGE_TOL:
            raise ValueError("history pieces must end at 0")
        if self.poly.start >= 0:
            raise ValueError("history must start before 0")
        if self.poly.degree > MAX_DEGREE:
            raise ValueError(f"piece degree above {MAX_DEGREE} is not supported")
        if not np.all(np.isfinite(pv)):
            raise ValueError("non-finite point value")
        pv.setflags(write=False)
        object.__setattr__(self, "point_value", pv)
        if self.poly.end != 0.0:
            b = np.array(self.poly.breaks)
            b[-1] = 0.0
            object.__setattr__(self, "poly", PiecewisePoly(b, self.poly.coeffs))

    @classmethod
    def constant(cls, value, theta_p: float, point_value=None) -> "PiecewiseHistory":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        pv = v if point_value is None else point_value
        return cls(PiecewisePoly.constant(v, -theta_p, 0.0), pv)

    @classmethod
    def piecewise_constant(cls, breaks: Sequence[float], values, point_value) -> "PiecewiseHistory":
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(PiecewisePoly(np.asarray(breaks, float), vals[:, None, :]), point_value)

    @property
    def dim(self) -> int:
        return self.poly.dim

    @property
    def theta_p(self) -> float:
        return -self.poly.start

    @property
    def breakpoints(self) -> np.ndarray:
        return self.poly.breaks

    @property
    def pieces(self) -> np.ndarray:
        return self.poly.coeffs

    def __call__(self, s: float) -> np.ndarray:
        if s == 0.0:
            return self.point_value
        if s < self.poly.start or s > 0.0:
            raise ValueError(f"s={s} outside [{self.poly.start}, 0]")
        return self.poly(s)

    def scaled(self, alpha: float) -> "PiecewiseHistory":
        return PiecewiseHistory(self.poly.scale(alpha), alpha * self.point_value)

    def __eq__(self, other):
        if not isinstance(other, PiecewiseHistory):
            return NotImplemented
        return self.poly == other.poly and np.array_equal(self.point_value, other.point_value)

    __hash__ = None


class ContinuousHistory(PiecewiseHistory):
    """Element of ``X^0``: pieces glue continuously and reach ``x0(0)``."""

    def __post_init__(self):
        super().__post_init__()
        p = self.poly
        for i in range(1, p.n_pieces):
            left = p.eval_piece(i - 1, p.breaks[i])
            right = p.coeffs[i, 0]
            if not np.allclose(left, right, rtol=1e-12, atol=1e-12):
                raise ValueError(f"history jumps at s={p.breaks[i]}")
        end = p.eval_piece(p.n_pieces - 1, 0.0)
        if not np.allclose(end, self.point_value, rtol=1e-12, atol=1e-12):
            raise ValueError("point value differs from the limit at 0")

    @classmethod
    def from_nodes(cls, nodes: Sequence[float], values) -> "ContinuousHistory":
        """Piecewise-linear interpolation of ``values`` at ``nodes`` (last node 0)."""
        t = np.asarray(nodes, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        slopes = np.diff(v, axis=0) / np.diff(t)[:, None]
        coeffs = np.stack([v[:-1], slopes], axis=1)
        return cls(PiecewisePoly(t, coeffs), v[-1])

    @property
    def continuity_flags(self) -> np.ndarray:
        return np.ones(self.poly.n_pieces, dtype=bool)


def norm_xinf(h: PiecewiseHistory) -> float:
    """``max(ess sup |h|, |h(0)|)`` with the ess sup computed exactly per piece."""
    return max(h.poly.ess_sup(), vnorm(h.point_value))


def embed_continuous(ch: ContinuousHistory) -> PiecewiseHistory:
    return PiecewiseHistory(ch.poly, ch.point_value)


def eval_diamond(x0: PiecewiseHistory, traj: Trajectory, s: float) -> np.ndarray:
    """Value of the concatenation of ``x0`` and ``traj`` at ``s``."""
    if s < -x0.theta_p or s > traj.t_end:
        raise ValueError(f"s={s} outside [{-x0.theta_p}, {traj.t_end}]")
    if s < 0.0:
        return x0.poly(s)
    if s == 0.0:
        return x0.point_value
    return traj(s)


def segment_at(x0: PiecewiseHistory, traj: Trajectory, t: float) -> PiecewiseHistory:
    """The state ``theta -> (x0 <> x)(t + theta)`` on ``[-theta_p, 0]``."""
    if t < 0.0 or t > traj.t_end:
        raise ValueError(f"t={t} beyond trajectory end {traj.t_end}")
    if t == 0.0:
        return x0
    theta_p = x0.theta_p
    a = t - theta_p
    parts = []
    if a < -MERGE_TOL:
        parts.append(x0.poly.restrict(a, 0.0))
    lo = max(a, 0.0)
    if t - lo > MERGE_TOL:
        parts.append(traj.poly.restrict(lo, t))
    poly = concat(parts).shift(-t)
    b = np.array(poly.breaks)
    b[0], b[-1] = -theta_p, 0.0
    return PiecewiseHistory(PiecewisePoly(b, poly.coeffs), traj(t))


def window_norm(x0: PiecewiseHistory, traj: Trajectory, t: float) -> float:
    """``norm_xinf(segment_at(x0, traj, t))`` without materialising the segment."""
    if t == 0.0:
        return norm_xinf(x0)
    a = t - x0.theta_p
    best = vnorm(traj(t))
    if a < 0.0:
        best = max(best, x0.poly.ess_sup(a, 0.0))
    best = max(best, traj.poly.ess_sup(max(a, 0.0), t))
    return best


# -- literal format ----------------------------------------------------------


def _vec_list(v: np.ndarray):
    return [float(x) for x in v]


def history_to_literal(h: PiecewiseHistory) -> dict:
    """JSON-ready literal: ``{dim, pieces: [{from, to, poly_coeffs}], point_value}``.

    ``poly_coeffs[k]`` is the vector multiplying ``(s - from)**k``.
    """
    p = h.poly
    pieces = []
    for i in range(p.n_pieces):
        c = p.coeffs[i]
        last = int(np.max(np.nonzero(np.any(c != 0.0, axis=1))[0], initial=0))
        pieces.append(
            {
                "from": float(p.breaks[i]),
                "to": float(p.breaks[i + 1]),
                "poly_coeffs": [_vec_list(c[k]) for k in range(last + 1)],
            }
        )
    return {"dim": h.dim, "pieces": pieces, "point_value": _vec_list(h.point_value)}


def _as_coeff_rows(rows, dim):
    out = []
    for r in rows:
        if isinstance(r, (int, float)):
            r = [r]
        if len(r) != dim:
            raise ValueError(f"coefficient row {r!r} has wrong dimension (expected {dim})")
        out.append([float(x) for x in r])
    return np.array(out, dtype=float)


def pieces_from_literal(pieces: list, dim: int) -> PiecewisePoly:
    if not pieces:
        raise ValueError("literal has no pieces")
    breaks = [float(pieces[0]["from"])]
    arrs = []
    for piece in pieces:
        if float(piece["from"]) != breaks[-1]:
            raise ValueError(f"pieces are not contiguous at {piece['from']}")
        breaks.append(float(piece["to"]))
        arrs.append(_as_coeff_rows(piece["poly_coeffs"], dim))
    return PiecewisePoly.from_pieces(breaks, arrs)


def history_from_literal(doc: dict) -> PiecewiseHistory:
    pv = doc["point_value"]
    pv = [pv] if isinstance(pv, (int, float)) else pv
    dim = int(doc.get("dim", len(pv)))
    poly = pieces_from_literal(doc["pieces"], dim)
    if poly.end != 0.0:
        raise ValueError("history literal must end at 0")
    return PiecewiseHistory(poly, pv)
