"""Random (system, history, input) draws shared by the solver and acceptance tests."""

import numpy as np

from retarda import load_catalog
from retarda.sampling import sample_history
from retarda.signals import sample_input

# globally well behaved on the ball of radius 1 over a few delays
TAME = (
    "linear-delay",
    "stable-linear-delay",
    "two-delay",
    "damped-oscillator",
    "sat-feedback",
    "smooth-two-delay",
    "cubic-damping",
    "integrator-input",
    "decay",
    "hutchinson",
)


def random_triple(rng: np.random.Generator, horizon_factor: float = 2.0, r: float = 1.0):
    name = TAME[rng.integers(len(TAME))]
    sysdef = load_catalog(name)
    theta_p = sysdef.delays.max_delay
    x0 = sample_history(rng, sysdef.n, r, theta_p, pieces=int(rng.integers(1, 6)))
    T = horizon_factor * theta_p
    u = sample_input(sysdef.m, r, T + 1.0, pieces=int(rng.integers(1, 5)), rng=rng) if sysdef.m else None
    return sysdef, x0, u, T


def sup_gap(a, b, t_lo, t_hi, points=400):
    """Max deviation of two trajectories over step nodes of both plus a uniform grid in ``[t_lo, t_hi)``."""
    ts = np.concatenate([a.nodes, b.nodes, np.linspace(t_lo, t_hi, points, endpoint=False)])
    ts = ts[(ts >= t_lo) & (ts < t_hi)]
    return float(np.max(np.linalg.norm(a.poly.sample(ts) - b.poly.sample(ts), axis=-1)))
