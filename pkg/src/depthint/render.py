"""Colour-mapped depth images and variance-profile plots."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyInput

_LUT = None


def colormap_lut() -> np.ndarray:
    """256x3 uint8 viridis table."""
    global _LUT
    if _LUT is None:
        from matplotlib import colormaps

        _LUT = (colormaps["viridis"](np.linspace(0.0, 1.0, 256))[:, :3] * 255).round().astype(np.uint8)
    return _LUT


def colorize(values: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Map valid values over their [p2, p98] range onto the LUT; invalid -> black."""
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(values)
    if values.size == 0 or not valid.any():
        raise EmptyInput("nothing to render")
    lo, hi = np.percentile(values[valid], [2, 98])
    if hi > lo:
        t = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    else:
        t = np.zeros_like(values)
    idx = np.rint(np.where(valid, t, 0.0) * 255).astype(np.int64)
    rgb = colormap_lut()[idx]
    rgb[~valid] = 0
    return rgb


def render_grid(values, valid, path) -> None:
    Image.fromarray(colorize(values, valid)).save(path, format="PNG")


def render_profile_csv(csv_path, path) -> None:
    """Plot a 1-D variance profile (0 +- ci95 band against the analytic band)
    or a 2-D per-column error profile written by the simulator."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyInput(f"{csv_path} has no rows")
    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    if "empirical_var" in rows[0]:
        n = np.array([float(r["distance"]) for r in rows])
        emp = 1.96 * np.sqrt([float(r["empirical_var"]) for r in rows])
        ana = 1.96 * np.sqrt([float(r["analytic_var"]) for r in rows])
        ax.fill_between(n, -emp, emp, alpha=0.4, label="empirical 95%")
        ax.plot(n, ana, "k--", lw=1, label="analytic 95%")
        ax.plot(n, -ana, "k--", lw=1)
        ax.set_xlabel("distance to known pixel")
    else:
        for r in sorted({row["resolutions"] for row in rows}, key=int):
            sub = [row for row in rows if row["resolutions"] == r]
            col = np.array([float(row["column"]) for row in sub])
            band = 1.96 * np.array([float(row["max_std"]) for row in sub])
            ax.fill_between(col, -band, band, alpha=0.3, label=f"R={r}")
        ax.set_xlabel("column")
    ax.set_ylabel("log-depth error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def render(in_path, out_path) -> None:
    from .fileio import read_depth

    in_path = Path(in_path)
    if in_path.suffix.lower() == ".csv":
        render_profile_csv(in_path, out_path)
    else:
        grid = read_depth(in_path)
        render_grid(grid.values, grid.valid, out_path)
