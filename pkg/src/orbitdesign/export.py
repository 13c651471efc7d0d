"""CSV export of trajectories and per-panel plot data."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .integration import Curve, TimeGrid, Trajectory

FLOAT_FMT = "%.12g"
ANGLES = ("th1", "th2", "th3")
RATES = ("dth1", "dth2", "dth3")
PANELS = ("th1", "th2", "th3", "u1", "u2")


def trajectory_columns(n_input: int) -> List[str]:
    inputs = ["u1", "u2"] + (["u_emb"] if n_input == 3 else [])
    return ["t", *ANGLES, *RATES, *inputs, *(a + "_deg" for a in ANGLES), *(r + "_deg" for r in RATES)]


def export_trajectory(traj: Curve, path) -> Path:
    """Write one row per grid node; angles appear in radians and in degrees."""
    if traj.n_state != 6 or traj.n_input not in (2, 3):
        raise ValueError("expected a biped curve with 6 states and 2 or 3 inputs")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([traj.grid.t, traj.x, traj.u, np.rad2deg(traj.x)])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(trajectory_columns(traj.n_input)),
               comments="")
    return path


def read_trajectory(path) -> Trajectory:
    """Inverse of :func:`export_trajectory` (the degree columns are ignored)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if header[:7] != ["t", *ANGLES, *RATES] or header[7:9] != ["u1", "u2"]:
        raise ValueError(f"{path}: unexpected header {header[:9]}")
    n_input = 3 if "u_emb" in header else 2
    t = data[:, 0]
    N = len(t) - 1
    grid = TimeGrid(float(t[-1]), N)
    if not np.allclose(t, grid.t, rtol=0, atol=1e-9 * max(1.0, t[-1])):
        raise ValueError(f"{path}: time column is not a uniform grid from 0")
    return Trajectory(grid, data[:, 1:7], data[:, 7:7 + n_input])


def _panel_values(curve: Curve, panel: str) -> np.ndarray:
    if panel.startswith("th"):
        return curve.x[:, int(panel[2]) - 1]
    return curve.u[:, int(panel[1]) - 1]


def plot_series(desired: Curve, embedding: Curve, iterates: Sequence[Curve], final: Curve,
                iterate_labels: Optional[Sequence[str]] = None) -> Tuple[List[str], Dict[str, np.ndarray]]:
    """Series names and per-panel column stacks ``(N+1, 1 + n_series)``."""
    labels = list(iterate_labels or [f"iterate_{i}" for i in range(len(iterates))])
    names = ["desired", "embedding", *labels, "final"]
    curves = [desired, embedding, *iterates, final]
    t = final.grid.t
    for c in curves:
        if c.grid.N != final.grid.N or not np.isclose(c.grid.T, final.grid.T):
            raise ValueError("all series must share the time grid")
    panels = {p: np.column_stack([t] + [_panel_values(c, p) for c in curves]) for p in PANELS}
    return names, panels


def emit_plot_data(out_dir, desired: Curve, embedding: Curve, iterates: Sequence[Curve], final: Curve,
                   iterate_labels: Optional[Sequence[str]] = None) -> Dict[str, Path]:
    """One CSV per figure panel (th1, th2, th3, u1, u2) with aligned series.

    Angle panels are in degrees, input panels in N m.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names, panels = plot_series(desired, embedding, iterates, final, iterate_labels)
    paths = {}
    for panel, block in panels.items():
        if panel.startswith("th"):
            block = np.column_stack([block[:, 0], np.rad2deg(block[:, 1:])])
        path = out_dir / f"panel_{panel}.csv"
        np.savetxt(path, block, fmt=FLOAT_FMT, delimiter=",", header=",".join(["t", *names]), comments="")
        paths[panel] = path
    return paths


def read_panel(path) -> Tuple[List[str], np.ndarray]:
    with Path(path).open() as fh:
        header = next(csv.reader(fh))
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
