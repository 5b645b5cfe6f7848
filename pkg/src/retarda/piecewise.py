"""Vector-valued piecewise polynomials on half-open intervals.

Every piece ``i`` lives on ``[breaks[i], breaks[i+1])`` and stores its
coefficients in ascending powers of the *local* variable ``s - breaks[i]``.
Local coefficients make shifting free and keep re-centering (restriction,
refinement) a small Taylor-shift matrix product.

The right end of the last piece is treated as closed for evaluation so that
the value at the end of a finished solve can be read back.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

MERGE_TOL = 1e-12


def taylor_shift(coeffs: np.ndarray, d: float) -> np.ndarray:
    """Re-center ``coeffs`` (shape ``(deg+1, n)``) from ``a`` to ``a + d``."""
    if d == 0.0:
        return coeffs.copy()
    deg = coeffs.shape[0] - 1
    m = np.zeros((deg + 1, deg + 1))
    for j in range(deg + 1):
        for k in range(j, deg + 1):
            m[j, k] = comb(k, j) * d ** (k - j)
    return m @ coeffs


def _powers(ell: float, deg: int) -> list[float]:
    out = [1.0]
    for _ in range(deg):
        out.append(out[-1] * ell)
    return out


def vnorm(v) -> float:
    """Euclidean norm without underflow or overflow in the squares."""
    return math.hypot(*v)


def _critical_points(c: np.ndarray, length: float) -> np.ndarray:
    """Interior stationary points of ``|p|`` on ``(0, length)`` for one piece."""
    if c.shape[0] <= 1 or c.shape[1] == 0:
        return np.empty(0)
    # work on the unit interval so coefficient sizes are comparable
    c = c * np.asarray(_powers(length, c.shape[0] - 1))[:, None]
    peak = np.max(np.abs(c), axis=0)
    peak[peak == 0.0] = 1.0
    c = c / peak
    if c.shape[1] == 1:
        g = npoly.polyder(c[:, 0])
    else:
        sq = np.zeros(2 * c.shape[0] - 1)
        for j in range(c.shape[1]):
            sq = npoly.polyadd(sq, npoly.polymul(c[:, j], c[:, j]))
        g = npoly.polyder(sq)
    g = np.asarray(g, dtype=float)
    scale = np.max(np.abs(g)) if g.size else 0.0
    if scale == 0.0:
        return np.empty(0)
    g = g / scale
    # terms below rounding level cannot move a root inside [0, 1]
    keep = np.flatnonzero(np.abs(g) > 1e-14)
    g = g[: keep[-1] + 1]
    if g.size <= 1:
        return np.empty(0)
    roots = npoly.polyroots(g)
    real = roots[np.abs(roots.imag) <= 1e-9].real
    return np.sort(real[(real > 0.0) & (real < 1.0)]) * length


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """Piecewise polynomial ``R -> R^n`` with local ascending coefficients.

    Parameters
    ----------
    breaks : array_like, shape (q+1,)
        Strictly increasing interval endpoints.
    coeffs : array_like, shape (q, deg+1, n)
        ``coeffs[i, k, j]`` multiplies ``(s - breaks[i])**k`` in component j.
    """

    breaks: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        b = np.array(self.breaks, dtype=float)
        c = np.array(self.coeffs, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("need at least one piece")
        if c.ndim != 3 or c.shape[0] != b.size - 1:
            raise ValueError(f"coeffs shape {c.shape} does not match {b.size - 1} pieces")
        if not np.all(np.diff(b) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("non-finite breakpoint or coefficient")
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "coeffs", c)

    # -- construction -------------------------------------------------------

    @classmethod
    def constant(cls, value, a: float, b: float) -> "PiecewisePoly":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.array([a, b]), v.reshape(1, 1, -1))

    @classmethod
    def from_pieces(cls, breaks: Sequence[float], pieces: Sequence) -> "PiecewisePoly":
        """Build from a list of per-piece coefficient arrays of varying degree."""
        arrs = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pieces]
        deg = max(a.shape[0] for a in arrs) - 1
        n = arrs[0].shape[1]
        c = np.zeros((len(arrs), deg + 1, n))
        for i, a in enumerate(arrs):
            if a.shape[1] != n:
                raise ValueError("pieces disagree on dimension")
            c[i, : a.shape[0]] = a
        return cls(np.asarray(breaks, dtype=float), c)

    # -- basic properties ---------------------------------------------------

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def n_pieces(self) -> int:
        return self.coeffs.shape[0]

    @property
    def start(self) -> float:
        return float(self.breaks[0])

    @property
    def end(self) -> float:
        return float(self.breaks[-1])

    @cached_property
    def _left(self) -> list[float]:
        return self.breaks[:-1].tolist()

    def piece_index(self, s: float) -> int:
        """Index of the piece containing ``s`` (right-continuous, last end closed)."""
        i = bisect.bisect_right(self._left, s) - 1
        if i < 0:
            return 0
        return i

    def eval_piece(self, i: int, s: float) -> np.ndarray:
        """Evaluate piece ``i``'s polynomial at ``s``, even at its closed ends."""
        ell = s - self._left[i]
        return np.dot(_powers(ell, self.degree), self.coeffs[i])

    def __call__(self, s: float) -> np.ndarray:
        if s < self.breaks[0] or s > self.breaks[-1]:
            raise ValueError(f"{s} outside [{self.start}, {self.end}]")
        return self.eval_piece(self.piece_index(s), s)

    def sample(self, ts) -> np.ndarray:
        return np.array([self(float(t)) for t in ts]).reshape(len(ts), self.dim)

    def derivative_piece(self, i: int, s: float) -> np.ndarray:
        c = self.coeffs[i]
        ell = s - self._left[i]
        k = np.arange(1, c.shape[0])
        return np.dot(k * np.array(_powers(ell, self.degree))[:-1], c[1:]) if c.shape[0] > 1 else np.zeros(self.dim)

    # -- transformations ----------------------------------------------------

    def shift(self, dt: float) -> "PiecewisePoly":
        """``s -> self(s - dt)``: move the graph right by ``dt``."""
        return PiecewisePoly(self.breaks + dt, self.coeffs)

    def scale(self, alpha: float) -> "PiecewisePoly":
        return PiecewisePoly(self.breaks, alpha * self.coeffs)

    def with_degree(self, deg: int) -> "PiecewisePoly":
        if deg < self.degree:
            raise ValueError("cannot lower degree")
        c = np.zeros((self.n_pieces, deg + 1, self.dim))
        c[:, : self.degree + 1] = self.coeffs
        return PiecewisePoly(self.breaks, c)

    def restrict(self, a: float, b: float) -> "PiecewisePoly":
        """Restriction to ``[a, b)``; the first piece is re-centered at ``a``."""
        if not (self.start - MERGE_TOL <= a < b <= self.end + MERGE_TOL):
            raise ValueError(f"[{a}, {b}) not inside [{self.start}, {self.end}]")
        i0 = self.piece_index(a)
        i1 = self.piece_index(b)
        if i1 > i0 and b <= self.breaks[i1]:
            i1 -= 1
        inner = self.breaks[i0 + 1 : i1 + 1]
        breaks = np.concatenate([[a], inner, [b]])
        coeffs = np.array(self.coeffs[i0 : i1 + 1])
        coeffs[0] = taylor_shift(coeffs[0], a - self.breaks[i0])
        return _merge_close(breaks, coeffs)

    def refine(self, points) -> "PiecewisePoly":
        """Insert extra breakpoints (those strictly inside the domain)."""
        pts = np.asarray(points, dtype=float)
        pts = pts[(pts > self.start + MERGE_TOL) & (pts < self.end - MERGE_TOL)]
        if pts.size == 0:
            return self
        new = np.union1d(self.breaks, pts)
        new = _dedupe(new)
        coeffs = np.empty((new.size - 1, self.degree + 1, self.dim))
        for k in range(new.size - 1):
            mid = 0.5 * (new[k] + new[k + 1])
            i = self.piece_index(mid)
            coeffs[k] = taylor_shift(self.coeffs[i], new[k] - self.breaks[i])
        return PiecewisePoly(new, coeffs)

    # -- norms --------------------------------------------------------------

    @cached_property
    def _crit(self) -> list[np.ndarray]:
        lengths = np.diff(self.breaks)
        return [_critical_points(self.coeffs[i], lengths[i]) for i in range(self.n_pieces)]

    def _piece_sup(self, i: int, lo: float, hi: float) -> float:
        """sup of ``|p_i|`` over local coordinates ``[lo, hi]``."""
        c = self.coeffs[i]
        cands = [lo, hi]
        for x in self._crit[i]:
            if lo < x < hi:
                cands.append(float(x))
        deg = self.degree
        best = 0.0
        for ell in cands:
            nv = vnorm(np.dot(_powers(ell, deg), c))
            if nv > best:
                best = nv
        return best

    @cached_property
    def piece_sups(self) -> np.ndarray:
        lengths = np.diff(self.breaks)
        out = np.array([self._piece_sup(i, 0.0, lengths[i]) for i in range(self.n_pieces)])
        out.setflags(write=False)
        return out

    def ess_sup(self, a: float | None = None, b: float | None = None) -> float:
        """Exact supremum of the Euclidean norm over ``[a, b]``."""
        a = self.start if a is None else max(a, self.start)
        b = self.end if b is None else min(b, self.end)
        if b < a:
            return 0.0
        i0 = self.piece_index(a)
        i1 = self.piece_index(b)
        if i1 > i0 and b <= self.breaks[i1]:
            i1 -= 1
        if i0 == i1:
            return self._piece_sup(i0, a - self.breaks[i0], b - self.breaks[i0])
        best = max(
            self._piece_sup(i0, a - self.breaks[i0], self.breaks[i0 + 1] - self.breaks[i0]),
            self._piece_sup(i1, 0.0, b - self.breaks[i1]),
        )
        if i1 > i0 + 1:
            best = max(best, float(np.max(self.piece_sups[i0 + 1 : i1])))
        return best

    def derivative_jumps(self) -> np.ndarray:
        """``|p_{i+1}'(b) - p_i'(b)|`` at every interior breakpoint ``b``."""
        out = np.empty(self.n_pieces - 1)
        for i in range(self.n_pieces - 1):
            b = self.breaks[i + 1]
            d = self.derivative_piece(i + 1, b) - self.derivative_piece(i, b)
            out[i] = np.sqrt(np.dot(d, d))
        return out

    def __eq__(self, other):
        if not isinstance(other, PiecewisePoly):
            return NotImplemented
        if not np.array_equal(self.breaks, other.breaks) or self.dim != other.dim:
            return False
        deg = max(self.degree, other.degree)
        return np.array_equal(self.with_degree(deg).coeffs, other.with_degree(deg).coeffs)

    __hash__ = None


def _dedupe(points: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    pts = np.sort(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts
    keep = [pts[0]]
    for x in pts[1:]:
        if x - keep[-1] > tol:
            keep.append(x)
    return np.array(keep)


def _merge_close(breaks: np.ndarray, coeffs: np.ndarray, tol: float = MERGE_TOL) -> PiecewisePoly:
    """Drop pieces shorter than ``tol``; a neighbour absorbs the gap."""
    lengths = np.diff(breaks)
    if np.all(lengths > tol) or breaks.size == 2:
        return PiecewisePoly(breaks, coeffs)
    b = list(breaks)
    c = list(coeffs)
    i = 0
    while i < len(c) and len(c) > 1:
        if b[i + 1] - b[i] > tol:
            i += 1
            continue
        if i + 1 < len(c):
            # next piece extends left to b[i]
            c[i + 1] = taylor_shift(c[i + 1], b[i] - b[i + 1])
            del b[i + 1]
            del c[i]
        else:
            del b[i]
            del c[i]
    return PiecewisePoly(np.array(b), np.array(c))


def concat(parts: Sequence[PiecewisePoly]) -> PiecewisePoly:
    """Join contiguous piecewise polynomials into one."""
    parts = [p for p in parts if p is not None]
    if not parts:
        raise ValueError("nothing to concatenate")
    deg = max(p.degree for p in parts)
    parts = [p.with_degree(deg) for p in parts]
    breaks = [parts[0].breaks]
    for prev, nxt in zip(parts, parts[1:]):
        if abs(prev.end - nxt.start) > 1e-9 * max(1.0, abs(prev.end)):
            raise ValueError(f"gap between {prev.end} and {nxt.start}")
        breaks.append(nxt.breaks[1:])
    b = np.concatenate(breaks)
    c = np.concatenate([p.coeffs for p in parts])
    return _merge_close(b, c)


def stack(parts: Sequence[PiecewisePoly]) -> PiecewisePoly:
    """Stack components of piecewise polynomials sharing one domain."""
    if len(parts) == 1:
        return parts[0]
    lo, hi = parts[0].start, parts[0].end
    for p in parts:
        if abs(p.start - lo) > MERGE_TOL or abs(p.end - hi) > MERGE_TOL:
            raise ValueError("stacked parts must share a domain")
    allb = _dedupe(np.concatenate([p.breaks for p in parts]))
    deg = max(p.degree for p in parts)
    refined = [p.with_degree(deg).refine(allb) for p in parts]
    breaks = refined[0].breaks
    for p in refined[1:]:
        if p.breaks.size != breaks.size:
            raise ValueError("refinement mismatch")
    coeffs = np.concatenate([p.coeffs for p in refined], axis=2)
    return PiecewisePoly(breaks, coeffs)
