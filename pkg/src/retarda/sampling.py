"""Random initial histories and the worker pool used by the sampling experiments."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .history import ContinuousHistory, PiecewiseHistory
from .signals import ball_point

T = TypeVar("T")
R = TypeVar("R")

#: sampling modes understood by the experiments
MODES = ("mixed", "ball", "sphere")


def on_sphere(mode: str, index: int) -> bool:
    """Whether sample ``index`` draws its values on the sphere.

    ``mixed`` alternates: even samples sit on the sphere of radius ``r`` (where
    sups over the ball are typically attained), odd samples fill the ball.
    """
    if mode not in MODES:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return mode == "sphere" or (mode == "mixed" and index % 2 == 0)


def _random_breaks(rng: np.random.Generator, theta_p: float, pieces: int) -> np.ndarray:
    inner = np.sort(rng.uniform(-theta_p, 0.0, pieces - 1))
    breaks = np.concatenate([[-theta_p], inner, [0.0]])
    # drop coincident draws so every piece has positive length
    keep = np.concatenate([[True], np.diff(breaks) > 1e-9])
    keep[-1] = True
    out = breaks[keep]
    if out.size >= 2 and out[-1] - out[-2] <= 1e-9:
        out = np.delete(out, -2)
    return out


def sample_history(
    rng: np.random.Generator,
    dim: int,
    r: float,
    theta_p: float,
    pieces: int = 4,
    boundary: bool = False,
) -> PiecewiseHistory:
    """Piecewise-constant element of ``X^inf`` with norm at most ``r``.

    Breakpoints are uniform on ``(-theta_p, 0)``; piece values and the point
    value at 0 are drawn independently, so the history is generally
    discontinuous at 0 as well.
    """
    if pieces < 1 or r < 0:
        raise ValueError("need pieces >= 1 and r >= 0")
    breaks = _random_breaks(rng, theta_p, pieces)
    vals = np.array([ball_point(rng, dim, r, boundary) for _ in range(breaks.size - 1)])
    point = ball_point(rng, dim, r, boundary)
    return PiecewiseHistory.piecewise_constant(breaks, vals.reshape(-1, dim), point)


def sample_continuous_history(
    rng: np.random.Generator,
    dim: int,
    r: float,
    theta_p: float,
    pieces: int = 4,
    boundary: bool = False,
) -> ContinuousHistory:
    """Piecewise-linear element of ``X^0`` whose node values lie in the radius-``r`` ball."""
    breaks = _random_breaks(rng, theta_p, pieces)
    vals = np.array([ball_point(rng, dim, r, boundary) for _ in range(breaks.size)])
    return ContinuousHistory.from_nodes(breaks, vals.reshape(-1, dim))


def worker_count() -> int:
    env = os.environ.get("RETARDA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"RETARDA_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Ordered map over ``items``; processes are used only when more than one worker is allowed.

    ``fn`` and the items must be picklable in the parallel case.  Results come
    back in input order, so reductions downstream do not depend on scheduling.
    """
    items: Sequence[T] = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
