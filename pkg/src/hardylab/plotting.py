"""SVG figures for CSV results.  Output is byte-stable for fixed input."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids inside the SVG so reruns produce identical bytes
matplotlib.rcParams["svg.hashsalt"] = "hardylab"
matplotlib.rcParams["svg.fonttype"] = "none"


class PlotError(ValueError):
    pass


def read_columns(path, x: str, y: str):
    """Two float columns of a headed CSV file."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotError(f"{path}: empty CSV")
        for col in (x, y):
            if col not in reader.fieldnames:
                raise PlotError(f"{path}: no column {col!r} (have {', '.join(reader.fieldnames)})")
        rows = list(reader)
    if not rows:
        raise PlotError(f"{path}: CSV has no data rows")
    try:
        return [float(r[x]) for r in rows], [float(r[y]) for r in rows]
    except ValueError as exc:
        raise PlotError(f"{path}: non-numeric entry ({exc})") from None


def line_plot(xs: Sequence[float], ys: Sequence[float], out, xlabel: str = "x",
              ylabel: str = "y", ref: Optional[float] = None, title: Optional[str] = None,
              logx: bool = False) -> Path:
    """Line plus markers; ``ref`` draws a dashed horizontal line."""
    if len(xs) == 0:
        raise PlotError("nothing to plot")
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(xs, ys, "o-", color="#1f4e79", lw=1.4, ms=4)
    if ref is not None:
        ax.axhline(ref, color="#a33", ls="--", lw=1.0, label=f"{ref:g}")
        ax.legend(frameon=False)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return out


def plot_csv(path, x: str, y: str, out, ref: Optional[float] = None, logx: bool = False,
             title: Optional[str] = None) -> Path:
    xs, ys = read_columns(path, x, y)
    return line_plot(xs, ys, out, x, y, ref, title, logx)


def mesh_plot(mesh, out, zoom: Optional[float] = None) -> Path:
    """Wireframe of a triangulation; ``zoom`` limits the view to ``|x| <= zoom``."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    v = mesh.vertices
    ax.triplot(v[:, 0], v[:, 1], mesh.triangles, lw=0.3, color="#333")
    b = v[mesh.dirichlet_mask]
    ax.plot(b[:, 0], b[:, 1], ".", ms=1.5, color="#a33")
    ax.set_aspect("equal")
    if zoom is not None:
        ax.set_xlim(-zoom, zoom)
        ax.set_ylim(-zoom, zoom)
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return out
