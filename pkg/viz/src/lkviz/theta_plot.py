"""Coarse-label map with contour and stripe overlays.

The field dump is site-resolved while the census indexes coarse block
columns, and neither file states the block length outright.  The length
is recovered here: it must divide the lattice width, the block-sign
label must be constant on every block, and the census columns must fit
inside the resulting grid.  The widest length passing all three checks
wins; the true block length always qualifies, so inference only ever
errs toward a coarser (still constant) tiling, and the census fit then
pushes it back down.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection
from matplotlib.colors import BoundaryNorm, ListedColormap
from matplotlib.lines import Line2D
from matplotlib.patches import Patch

from .io import Census, FieldGrid, SchemaError, load_census, load_fields
from .render import save_figure

COLOR_MINUS = "#9fd0ea"
COLOR_ZERO = "#c8c8c8"
COLOR_PLUS = "#f2d64b"
COLOR_OUTLINE = "#1a1a1a"
COLOR_STRIPE = "#e06c00"
COLOR_ETA0 = (0.2, 0.2, 0.2, 0.35)


def _census_extent(census: Census):
    """Columns and layers the census claims to address (exclusive)."""
    cols = rows = 0
    for c in census.contours:
        for layer, k0, klen in c.support_rle:
            if k0 < 0 or klen <= 0 or layer < 0:
                raise SchemaError(f"bad support run {(layer, k0, klen)}")
            cols = max(cols, k0 + klen)
            rows = max(rows, layer + 1)
        for s in c.stripes:
            cols = max(cols, s.k_end + 1)
            rows = max(rows, s.layer_lower + 2)
    return cols, rows


def infer_block_len(grid: FieldGrid, census: Census) -> int:
    need_cols, need_rows = _census_extent(census)
    if need_rows > grid.H:
        raise SchemaError(f"census addresses layer {need_rows - 1} but the "
                          f"field grid has {grid.H} layers")
    for d in range(grid.L, 0, -1):
        if grid.L % d:
            continue
        blocks = grid.big_theta.reshape(grid.H, grid.L // d, d)
        if (blocks != blocks[:, :, :1]).any():
            continue
        if need_cols <= grid.L // d:
            return d
    raise SchemaError(f"census addresses block column {need_cols - 1} but "
                      f"no block tiling of width {grid.L} fits it")


def support_cells(contour) -> set:
    cells = set()
    for layer, k0, klen in contour.support_rle:
        cells.update((layer, k) for k in range(k0, k0 + klen))
    return cells


def boundary_segments(cells: set) -> list:
    """Unit-square edges between a support cell and a non-support
    neighbor, in block coordinates."""
    segs = []
    for i, k in sorted(cells):
        if (i, k - 1) not in cells:
            segs.append(((k, i), (k, i + 1)))
        if (i, k + 1) not in cells:
            segs.append(((k + 1, i), (k + 1, i + 1)))
        if (i - 1, k) not in cells:
            segs.append(((k, i), (k + 1, i)))
        if (i + 1, k) not in cells:
            segs.append(((k, i + 1), (k + 1, i + 1)))
    return segs


def render_theta(grid: FieldGrid, census: Census):
    d = infer_block_len(grid, census)
    n_cols = grid.L // d
    blocks = grid.big_theta[:, ::d].copy()

    fig, ax = plt.subplots(figsize=(7.2, 5.4), dpi=130)
    cmap = ListedColormap([COLOR_MINUS, COLOR_ZERO, COLOR_PLUS])
    norm = BoundaryNorm([-1.5, -0.5, 0.5, 1.5], cmap.N)
    extent = (0, n_cols, 0, grid.H)
    ax.imshow(blocks, cmap=cmap, norm=norm, origin="lower", extent=extent,
              interpolation="none", aspect="equal", zorder=0)

    # shade fine blocks whose first-level label is undecided
    if (grid.eta == 0).any():
        rgba = np.zeros((grid.H, grid.L, 4))
        rgba[grid.eta == 0] = COLOR_ETA0
        ax.imshow(rgba, origin="lower", extent=extent, interpolation="none",
                  aspect="equal", zorder=1)

    # faint block grid
    for k in range(1, n_cols):
        ax.axvline(k, color="white", linewidth=0.3, alpha=0.5, zorder=2)
    for i in range(1, grid.H):
        ax.axhline(i, color="white", linewidth=0.3, alpha=0.5, zorder=2)

    all_segs = []
    n_stripes = 0
    for contour in census.contours:
        segs = boundary_segments(support_cells(contour))
        all_segs.extend(segs)
        for s in contour.stripes:
            y = s.layer_lower + 1
            ax.plot([s.k_start, s.k_end + 1], [y, y], color=COLOR_STRIPE,
                    linewidth=3.0, linestyle=(0, (4, 2)), zorder=4,
                    solid_capstyle="butt")
            n_stripes += 1
    if all_segs:
        ax.add_collection(LineCollection(all_segs, colors=COLOR_OUTLINE,
                                         linewidths=2.2, zorder=3))

    ax.set_xlim(0, n_cols)
    ax.set_ylim(0, grid.H)
    ax.set_xlabel("coarse block column")
    ax.set_ylabel("layer")
    ax.set_title("block sign labels")

    handles = [Patch(facecolor=COLOR_PLUS, label="label +1"),
               Patch(facecolor=COLOR_ZERO, label="label 0"),
               Patch(facecolor=COLOR_MINUS, label="label -1"),
               Patch(facecolor=(*COLOR_ETA0[:3], COLOR_ETA0[3]),
                     label="undecided fine block"),
               Line2D([], [], color=COLOR_OUTLINE, linewidth=2.2,
                      label="contour boundary"),
               Line2D([], [], color=COLOR_STRIPE, linewidth=3.0,
                      linestyle=(0, (4, 2)), label="stripe seam")]
    ax.legend(handles=handles, loc="upper center",
              bbox_to_anchor=(0.5, -0.09), ncol=3, fontsize=8,
              framealpha=0.9)

    info = {"block_len": d, "n_cols": n_cols, "blocks": blocks,
            "n_contours": len(census.contours),
            "outline_segments": frozenset(all_segs),
            "n_stripe_runs": n_stripes}
    return fig, info


def plot_theta_field(fields_csv, census_json, image_out) -> dict:
    grid = load_fields(fields_csv)
    census = load_census(census_json) if census_json else Census.empty()
    fig, info = render_theta(grid, census)
    try:
        save_figure(fig, image_out)
    finally:
        plt.close(fig)
    return info
