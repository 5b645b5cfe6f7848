"""Input signals on ``[0, T)`` and the delayed-argument signal of a solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .history import Delays, PiecewiseHistory, pieces_from_literal, _vec_list
from .piecewise import MERGE_TOL, PiecewisePoly, concat, stack, taylor_shift
from .trajectory import Trajectory


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; order of draws elsewhere is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


def ball_point(rng: np.random.Generator, dim: int, r: float, boundary: bool = False) -> np.ndarray:
    """Uniform point in (or, with ``boundary``, on) the Euclidean ball of radius ``r``."""
    if dim == 0:
        return np.zeros(0)
    g = rng.standard_normal(dim)
    nrm = np.linalg.norm(g)
    while nrm == 0.0:
        g = rng.standard_normal(dim)
        nrm = np.linalg.norm(g)
    rad = r if boundary else r * rng.random() ** (1.0 / dim)
    return g / nrm * rad


@dataclass(frozen=True, eq=False)
class InputSignal:
    """Locally essentially bounded signal on ``[0, T_sig)``.

    Beyond ``T_sig`` the last piece is continued, which keeps the signal locally
    bounded on any finite horizon.  ``dim`` may be 0 for systems without inputs.
    """

    poly: PiecewisePoly

    def __post_init__(self):
        if abs(self.poly.start) > MERGE_TOL:
            raise ValueError("input signals start at t = 0")

    @classmethod
    def zero(cls, dim: int, horizon: float = 1.0) -> "InputSignal":
        return cls(PiecewisePoly(np.array([0.0, horizon]), np.zeros((1, 1, dim))))

    @classmethod
    def constant(cls, value, horizon: float) -> "InputSignal":
        return cls(PiecewisePoly.constant(value, 0.0, horizon))

    @classmethod
    def piecewise_constant(cls, breaks, values) -> "InputSignal":
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(PiecewisePoly(np.asarray(breaks, dtype=float), vals[:, None, :]))

    @property
    def dim(self) -> int:
        return self.poly.dim

    @property
    def horizon(self) -> float:
        return self.poly.end

    @property
    def breakpoints(self) -> np.ndarray:
        return self.poly.breaks

    def __call__(self, t: float) -> np.ndarray:
        if t < 0.0:
            raise ValueError("inputs are defined for t >= 0")
        return self.poly.eval_piece(self.poly.piece_index(t), t)

    def norm(self, horizon: float | None = None) -> float:
        """ess sup of ``|u|`` on ``[0, horizon]`` (defaults to the stored horizon)."""
        if self.dim == 0:
            return 0.0
        if horizon is None or horizon <= self.horizon:
            return self.poly.ess_sup(0.0, horizon)
        return self.extended(horizon).poly.ess_sup()

    def extended(self, horizon: float) -> "InputSignal":
        """Same signal with the last piece stretched to ``horizon``."""
        if horizon <= self.horizon:
            return self
        b = np.array(self.poly.breaks)
        b[-1] = horizon
        return InputSignal(PiecewisePoly(b, self.poly.coeffs))

    def sample(self, ts) -> np.ndarray:
        return np.array([self(float(t)) for t in ts]).reshape(len(ts), self.dim)

    def __eq__(self, other):
        if not isinstance(other, InputSignal):
            return NotImplemented
        return self.poly == other.poly

    __hash__ = None


def sample_input(
    dim: int,
    r: float,
    horizon: float,
    pieces: int = 4,
    seed: int = 0,
    degree: int = 0,
    boundary: bool = False,
    rng: np.random.Generator | None = None,
) -> InputSignal:
    """Random signal with ``pieces`` equal segments on ``[0, horizon)`` and ess sup at most ``r``.

    Piece values are uniform in the radius-``r`` Euclidean ball (on its sphere
    with ``boundary``).  ``degree > 0`` draws polynomial pieces instead and
    rescales each so its exact sup does not exceed the drawn value's norm.
    """
    if r < 0 or pieces < 1:
        raise ValueError("need r >= 0 and pieces >= 1")
    rng = derive_rng(seed, 0x51) if rng is None else rng
    breaks = np.linspace(0.0, horizon, pieces + 1)
    if degree == 0:
        vals = np.array([ball_point(rng, dim, r, boundary) for _ in range(pieces)]).reshape(pieces, dim)
        return InputSignal.piecewise_constant(breaks, vals)
    coeffs = np.zeros((pieces, degree + 1, dim))
    length = horizon / pieces
    for i in range(pieces):
        target = ball_point(rng, dim, r, boundary)
        c = rng.uniform(-1.0, 1.0, (degree + 1, dim)) / np.power(length, np.arange(degree + 1))[:, None]
        single = PiecewisePoly(np.array([0.0, length]), c[None])
        s = single.ess_sup()
        coeffs[i] = c * (np.linalg.norm(target) / s if s > 0 else 0.0)
    return InputSignal(PiecewisePoly(breaks, coeffs))


def shift_input(u: InputSignal, t0: float) -> InputSignal:
    """``t -> u(t0 + t)``."""
    if t0 < 0.0:
        raise ValueError("shift must be nonnegative")
    if t0 == 0.0:
        return u
    if t0 >= u.horizon - MERGE_TOL:
        i = u.poly.n_pieces - 1
        c = taylor_shift(u.poly.coeffs[i], t0 - u.poly.breaks[i])
        return InputSignal(PiecewisePoly(np.array([0.0, max(1.0, t0)]), c[None]))
    return InputSignal(u.poly.restrict(t0, u.horizon).shift(-t0))


def delayed_inputs(x0: PiecewiseHistory, traj: Trajectory, delays: Delays) -> InputSignal:
    """Signal ``t -> ((x0 <> x)(t - theta_k))_k`` on ``[0, t_end)``, blocks stacked in delay order."""
    T = traj.t_end
    blocks = []
    for theta in delays:
        parts = []
        hist_end = min(theta, T)
        parts.append(x0.poly.restrict(-theta, hist_end - theta).shift(theta))
        if T - theta > MERGE_TOL:
            parts.append(traj.poly.restrict(0.0, T - theta).shift(theta))
        blocks.append(concat(parts))
    # pin the common domain exactly before stacking
    blocks = [PiecewisePoly(_pinned(b.breaks, 0.0, T), b.coeffs) for b in blocks]
    return InputSignal(stack(blocks))


def _pinned(breaks: np.ndarray, a: float, b: float) -> np.ndarray:
    arr = np.array(breaks)
    arr[0], arr[-1] = a, b
    return arr


# -- literal / CSV -----------------------------------------------------------


def signal_to_literal(u: InputSignal) -> dict:
    p = u.poly
    pieces = []
    for i in range(p.n_pieces):
        c = p.coeffs[i]
        nz = np.nonzero(np.any(c != 0.0, axis=1))[0]
        last = int(nz.max()) if nz.size else 0
        pieces.append(
            {"from": float(p.breaks[i]), "to": float(p.breaks[i + 1]), "poly_coeffs": [_vec_list(c[k]) for k in range(last + 1)]}
        )
    return {"dim": u.dim, "pieces": pieces}


def signal_from_literal(doc: dict) -> InputSignal:
    return InputSignal(pieces_from_literal(doc["pieces"], int(doc["dim"])))


def signal_csv(u: InputSignal, ts) -> str:
    lines = ["t," + ",".join(f"u_{j + 1}" for j in range(u.dim))]
    for t in ts:
        v = u(float(t))
        lines.append(",".join([repr(float(t))] + [repr(float(x)) for x in v]))
    return "\n".join(lines) + "\n"
