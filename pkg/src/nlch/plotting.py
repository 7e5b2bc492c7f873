"""Figure rendering for the report path.

Figures land next to the delimited output (PNG, Agg backend); they are a
convenience for inspection and never enter acceptance checks.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .grid import Grid
from .scheme import Trajectory


def render_run_figures(traj: Trajectory, grid: Grid, outdir: str) -> list:
    """Energy decay, mass trace, step diagnostics, and state profiles."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(traj.times, traj.energies, "o-", ms=3)
    ax.set_xlabel("t")
    ax.set_ylabel("regularized energy")
    ax.set_title("energy decay")
    written.append(_save(fig, outdir, "energy.png"))

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(traj.times, traj.masses - traj.masses[0], "o-", ms=3)
    ax.set_xlabel("t")
    ax.set_ylabel("mass drift")
    ax.set_title("mass conservation")
    written.append(_save(fig, outdir, "mass.png"))

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(traj.times[1:], np.maximum(traj.dual_step_norms[1:], 1e-300), "o-", ms=3, label="dual step norm")
    ax.semilogy(traj.times[1:], np.maximum(traj.el_residuals[1:], 1e-300), "s-", ms=3, label="EL residual")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("step diagnostics")
    written.append(_save(fig, outdir, "steps.png"))

    fig, ax = plt.subplots(figsize=(5, 3.2))
    if grid.dim == 1:
        x = grid.nodes[:, 0]
        order = np.argsort(x)
        ax.plot(x[order], traj.states[0][order], "--", label="initial")
        ax.plot(x[order], traj.states[-1][order], "-", label="final")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.legend(fontsize=8)
    else:
        n = grid.n_per_axis
        im = ax.imshow(traj.states[-1].reshape(n, n).T, origin="lower", cmap="RdBu_r")
        fig.colorbar(im, ax=ax)
    ax.set_title("state profile")
    written.append(_save(fig, outdir, "profile.png"))
    return written


def render_sweep_figure(xlabel: str, xvals, series: dict, outpath: str, logy: bool = True) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label, vals in series.items():
        plot = ax.semilogy if logy else ax.plot
        plot(xvals, vals, "o-", ms=4, label=label)
    ax.set_xlabel(xlabel)
    ax.legend(fontsize=8)
    os.makedirs(os.path.dirname(outpath) or ".", exist_ok=True)
    fig.tight_layout()
    fig.savefig(outpath, dpi=130)
    plt.close(fig)
    return outpath


def _save(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
