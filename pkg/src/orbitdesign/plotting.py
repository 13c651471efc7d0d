"""PNG figures drawn from the per-panel CSV files.

Figures are rendered from the exported panel data rather than from solver
objects, so anything shown can be reproduced from the run directory.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .export import PANELS, read_panel  # noqa: E402

UNITS = {"th1": "deg", "th2": "deg", "th3": "deg", "u1": "N m", "u2": "N m"}
# desired red, embedding green, intermediate iterates black, final blue
STYLES = {
    "desired": dict(color="tab:red", lw=1.5),
    "embedding": dict(color="tab:green", lw=1.2),
    "final": dict(color="tab:blue", lw=2.0),
}
ITERATE_STYLE = dict(color="black", lw=0.6, alpha=0.5)


def _draw(ax, header: List[str], data) -> None:
    t = data[:, 0]
    for j, name in enumerate(header[1:], start=1):
        style = STYLES.get(name, ITERATE_STYLE)
        label = name if name in STYLES else None
        ax.plot(t, data[:, j], label=label, **style)
    ax.grid(True, alpha=0.3)


def render_panel(csv_path, png_path, title: str = "") -> Path:
    header, data = read_panel(csv_path)
    panel = Path(csv_path).stem.replace("panel_", "")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    _draw(ax, header, data)
    ax.set_xlabel("t [s]")
    ax.set_ylabel(f"{panel} [{UNITS.get(panel, '')}]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    png_path = Path(png_path)
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def render_overview(panel_csvs: Dict[str, Path], png_path, title: str = "") -> Path:
    """All panels stacked in one figure (angles on top, inputs below)."""
    fig, axes = plt.subplots(len(PANELS), 1, figsize=(7, 11), sharex=True)
    for ax, panel in zip(axes, PANELS):
        header, data = read_panel(panel_csvs[panel])
        _draw(ax, header, data)
        ax.set_ylabel(f"{panel} [{UNITS[panel]}]")
    axes[0].legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    png_path = Path(png_path)
    fig.savefig(png_path, dpi=110)
    plt.close(fig)
    return png_path


def render_figures(panel_csvs: Dict[str, Path], out_dir, title: str = "",
                   panels: Iterable[str] = PANELS) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [render_panel(panel_csvs[p], out_dir / f"{p}.png", title) for p in panels]
    paths.append(render_overview(panel_csvs, out_dir / "overview.png", title))
    return paths
