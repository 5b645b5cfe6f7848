"""End-to-end transfer of an envelope fitted on continuous data to discontinuous histories."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .reachability import ReachTable, estimate_reach, geometric_grid
from .rhsdsl import SystemDef
from .solver import SolveConfig
from .stability import (
    BarBetaEnvelope,
    EnvelopeRefused,
    GridEnvelope,
    KappaTable,
    MuBound,
    UgasReport,
    build_bar_beta,
    check_ugas,
    fit_envelope,
    fit_mu,
    gronwall_bound,
)

PIPELINE_CONFIG = SolveConfig(rel_tol=1e-8, abs_tol=1e-11)


@dataclass(frozen=True)
class PipelineSettings:
    r_max: float = 5.0
    horizon: float = 50.0
    r_min: float = 0.05
    per_decade: int = 4
    reach_samples: int = 40
    fit_samples: int = 24
    check_samples: int = 1000
    seed: int = 0
    check_seed: Optional[int] = None
    dt_fit: float = 0.1
    dt_check: float = 0.25
    cfg: SolveConfig = PIPELINE_CONFIG

    def held_out_seed(self) -> int:
        return self.seed + 1_000_003 if self.check_seed is None else self.check_seed

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "cfg"}
        d["check_seed"] = self.held_out_seed()
        d["rel_tol"] = self.cfg.rel_tol
        d["abs_tol"] = self.cfg.abs_tol
        return d


@dataclass(eq=False)
class PipelineResult:
    reach: ReachTable
    mu: MuBound
    kappa: KappaTable
    beta: GridEnvelope
    bar_beta: BarBetaEnvelope
    report: UgasReport
    settings: PipelineSettings
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.report.ok


def run_gas_to_ugas(sys: SystemDef, settings: PipelineSettings = PipelineSettings()) -> PipelineResult:
    """reach table -> mu -> kappa -> beta on continuous data -> bar_beta -> held-out check.

    Raises :class:`EnvelopeRefused` when the continuous-data fit sees no decay.
    The held-out check spreads ``check_samples`` over the radius grid.
    """
    if not sys.zero_equilibrium:
        raise ValueError("the pipeline needs a system with f(0, 0) = 0")
    s = settings
    theta_p = sys.delays.max_delay
    timings = {}

    clock = time.perf_counter()
    radii = geometric_grid(s.r_min, s.r_max, s.per_decade)
    reach = estimate_reach(
        sys, radii, theta_p, s.reach_samples, s.seed, s.cfg, times=np.linspace(0.0, theta_p, 11), inputs=False
    )
    if reach.any_escape:
        raise EnvelopeRefused("non-decaying: escape while estimating the reach table")
    mu = fit_mu(reach)
    timings["reach"] = time.perf_counter() - clock

    clock = time.perf_counter()
    top = max(mu(theta_p, s.r_max), s.r_min)
    kappa = KappaTable.estimate(sys, geometric_grid(s.r_min, top, s.per_decade), seed=s.seed)
    g_max = gronwall_bound(s.r_max, kappa, mu, theta_p)
    timings["kappa"] = time.perf_counter() - clock

    clock = time.perf_counter()
    fit_radii = geometric_grid(s.r_min, max(g_max, s.r_max), s.per_decade)
    beta = fit_envelope(sys, fit_radii, s.horizon, s.fit_samples, s.seed + 1, s.cfg, dt=s.dt_fit)
    timings["fit"] = time.perf_counter() - clock

    bar = build_bar_beta(beta, kappa, mu, theta_p, np.linspace(0.0, s.r_max, 50), np.linspace(0.0, s.horizon, 50))

    clock = time.perf_counter()
    check_radii = geometric_grid(s.r_min, s.r_max, s.per_decade)
    report = check_ugas(sys, bar, check_radii, s.horizon, s.check_samples, s.held_out_seed(), s.cfg, dt=s.dt_check, spread=True)
    timings["check"] = time.perf_counter() - clock
    return PipelineResult(reach, mu, kappa, beta, bar, report, s, timings)
