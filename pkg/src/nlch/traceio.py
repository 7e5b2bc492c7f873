"""Trace and snapshot serialization.

CSV is the canonical trace format: fixed header, 17 significant digits, so
identical runs diff byte-for-byte.  Snapshots are JSON files carrying grid
metadata and node-ordered value arrays; they reload exactly (floats round
trip through repr).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .grid import Grid, build_grid
from .scheme import Trajectory

TRACE_HEADER = "n,t,energy,mass,dual_step_norm,el_residual"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace_csv(traj: Trajectory, path: str) -> None:
    lines = [TRACE_HEADER]
    for n in range(traj.times.size):
        lines.append(
            ",".join(
                [
                    str(n),
                    _fmt(traj.times[n]),
                    _fmt(traj.energies[n]),
                    _fmt(traj.masses[n]),
                    _fmt(traj.dual_step_norms[n]),
                    _fmt(traj.el_residuals[n]),
                ]
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path: str) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    return cols


def write_snapshot(traj: Trajectory, grid: Grid, n: int, path: str) -> None:
    payload = {
        "n": int(n),
        "t": float(traj.times[n]),
        "grid": {
            "dim": grid.dim,
            "box": [list(ab) for ab in grid.box],
            "n_per_axis": grid.n_per_axis,
            "ext_radius": grid.ext_radius,
            "ext_refine": grid.ext_refine,
        },
        "u": [float(v) for v in traj.states[n]],
        "w": [float(v) for v in traj.potentials[n]],
        "zeta": [float(v) for v in traj.selections[n]],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_snapshot(path: str):
    """Reload a snapshot; returns (grid, n, t, u, w, zeta)."""
    with open(path) as fh:
        payload = json.load(fh)
    g = payload["grid"]
    grid = build_grid(g["dim"], g["box"], g["n_per_axis"], g["ext_radius"], g["ext_refine"])
    return (
        grid,
        payload["n"],
        payload["t"],
        np.array(payload["u"]),
        np.array(payload["w"]),
        np.array(payload["zeta"]),
    )


def write_report_json(report: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def dump_trajectory(traj: Trajectory, grid: Grid, outdir: str, stride: int = 1) -> None:
    os.makedirs(outdir, exist_ok=True)
    write_trace_csv(traj, os.path.join(outdir, "trace.csv"))
    snapdir = os.path.join(outdir, "snapshots")
    os.makedirs(snapdir, exist_ok=True)
    for n in range(0, traj.times.size, max(1, stride)):
        write_snapshot(traj, grid, n, os.path.join(snapdir, f"state_{n:05d}.json"))
