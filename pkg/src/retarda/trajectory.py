"""Dense solver output."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .piecewise import PiecewisePoly


@dataclass(frozen=True)
class Escape:
    """Divergence certificate attached to a trajectory that blew up.

    ``t_star`` is the last accepted time; ``magnitude`` the solution norm there
    and ``last_step`` the collapsed step size that triggered detection.
    ``confidence`` is ``"high"`` when both the magnitude threshold and the step
    collapse fired, ``"low"`` when the right-hand side overflowed first.
    """

    t_star: float
    magnitude: float
    last_step: float
    confidence: str = "high"
    reason: str = "magnitude threshold and step collapse"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution of a delay or ordinary differential equation on ``[0, t_end]``.

    ``poly`` holds one quartic piece per accepted Runge-Kutta step (the
    Dormand-Prince continuous extension), so evaluation is continuous and
    contiguous by construction.
    """

    poly: PiecewisePoly
    breakpoints: np.ndarray
    escape: Optional[Escape] = None
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    rel_tol: float = 0.0
    abs_tol: float = 0.0
    _meta: dict = field(default_factory=dict, repr=False)

    @property
    def t_end(self) -> float:
        return self.poly.end

    @property
    def escaped(self) -> bool:
        return self.escape is not None

    @property
    def dim(self) -> int:
        return self.poly.dim

    @property
    def nodes(self) -> np.ndarray:
        return self.poly.breaks

    def __call__(self, t: float) -> np.ndarray:
        if t < 0.0 or t > self.t_end:
            raise ValueError(f"t={t} outside trajectory domain [0, {self.t_end}]")
        return self.poly(t)

    def sup_norm(self, a: float = 0.0, b: float | None = None) -> float:
        """Exact sup of ``|x|`` on ``[a, b]``."""
        return self.poly.ess_sup(a, self.t_end if b is None else b)

    def values_at_nodes(self) -> np.ndarray:
        ts = self.nodes
        return self.poly.sample(ts)

    def kinks(self, threshold: float = 1e-6) -> np.ndarray:
        """Step nodes where the first derivative jumps by more than ``threshold``."""
        jumps = self.poly.derivative_jumps()
        return self.poly.breaks[1:-1][jumps > threshold]

    def metadata(self) -> dict:
        return {
            "t_end": self.t_end,
            "dim": self.dim,
            "n_steps": self.n_steps,
            "n_rejected": self.n_rejected,
            "n_rhs": self.n_rhs,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "n_breakpoints": int(self.breakpoints.size),
            "escape": None
            if self.escape is None
            else {
                "t_star": self.escape.t_star,
                "magnitude": self.escape.magnitude,
                "last_step": self.escape.last_step,
                "confidence": self.escape.confidence,
                "reason": self.escape.reason,
            },
        }
