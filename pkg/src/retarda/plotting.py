"""PNG figures written next to the CSV/JSON outputs when ``--figures`` is given."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import write_atomic  # noqa: E402


def _save(fig, path: Path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return write_atomic(path, buf.getvalue())


def plot_trajectory(traj, x0, path) -> Path:
    theta_p = x0.theta_p
    hs = np.linspace(-theta_p, 0.0, 400, endpoint=False)
    ts = np.linspace(0.0, traj.t_end, 800)
    hv = x0.poly.sample(hs)
    xv = traj.poly.sample(ts)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i in range(traj.dim):
        (line,) = ax.plot(ts, xv[:, i], label=f"x_{i + 1}")
        ax.plot(hs, hv[:, i], color=line.get_color(), ls=":")
    for b in traj.breakpoints[1:]:
        ax.axvline(b, color="0.85", lw=0.8, zorder=0)
    ax.axvline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel("t")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, Path(path))


def plot_reach(table, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, r in enumerate(table.radii):
        vals = np.where(np.isfinite(table.sup_estimates[i]), table.sup_estimates[i], np.nan)
        ax.plot(table.times, vals, marker=".", label=f"r={r:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("sampled sup |x|")
    if table.radii.size <= 10:
        ax.legend(fontsize=7)
    return _save(fig, Path(path))


def plot_envelope(env, radii, horizon, path) -> Path:
    ts = np.linspace(0.0, horizon, 300)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for r in radii:
        ax.semilogy(ts, [max(env(float(r), float(t)), 1e-300) for t in ts], label=f"r={r:.3g}")
    ax.set_xlabel("t")
    ax.legend(fontsize=7)
    return _save(fig, Path(path))
