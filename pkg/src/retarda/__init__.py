"""Simulation and verification toolkit for systems with finitely many discrete delays."""

__version__ = "0.1.0"

from .catalog import catalog_names, load_catalog
from .history import (
    ContinuousHistory,
    Delays,
    PiecewiseHistory,
    embed_continuous,
    eval_diamond,
    norm_xinf,
    segment_at,
)
from .piecewise import PiecewisePoly
from .reachability import ReachBound, ReachTable, estimate_reach, extend_reach_bound, fc_probe
from .rhsdsl import SpecError, SystemDef, estimate_lipschitz, eval_rhs, parse_system, print_system
from .signals import InputSignal, delayed_inputs, sample_input, shift_input
from .solver import SolveConfig, SolverError, flow_segment, lift_to_tds, solve_ode, solve_tds
from .stability import (
    BarBetaEnvelope,
    EnvelopeRefused,
    FunctionEnvelope,
    GridEnvelope,
    KLShapeError,
    MuBound,
    build_bar_beta,
    check_ls_ga,
    check_ugas,
    fit_envelope,
    fit_mu,
    gronwall_bound,
)
from .trajectory import Escape, Trajectory

__all__ = [name for name in dir() if not name.startswith("_")]
