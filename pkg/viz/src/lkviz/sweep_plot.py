"""Magnetization-sweep figure.

One curve per boundary condition, mean with standard-error bars against
the range parameter, plus dashed reference lines at plus/minus the
mean-field magnetization recorded in the table's target column.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .io import SweepPoint, finite, load_sweep
from .render import save_figure

BC_COLORS = {"plus": "#c23b22", "minus": "#2d6fab", "periodic": "#3c8c4e"}
REF_STYLE = dict(color="#777777", linestyle="--", linewidth=1.0, zorder=1)


def reference_levels(points) -> list:
    """Distinct |target| values; falls back to the spin bound when the
    table carries no usable targets (e.g. an empty sweep)."""
    levels = sorted({round(abs(p.target), 10) for p in points
                     if finite(p.target) and p.target != 0.0})
    return levels or [1.0]


def render_sweep(points: list[SweepPoint]):
    ok = [p for p in points if p.status == "ok" and finite(p.mean)]
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=130)

    levels = reference_levels(ok or points)
    for j, lv in enumerate(levels):
        label = "mean-field level" if j == 0 else None
        ax.axhline(lv, label=label, **REF_STYLE)
        ax.axhline(-lv, **REF_STYLE)
    ax.axhline(0.0, color="#bbbbbb", linewidth=0.6, zorder=1)

    by_bc: dict = {}
    for p in ok:
        by_bc.setdefault(p.bc, []).append(p)
    for bc in sorted(by_bc):
        pts = sorted(by_bc[bc], key=lambda p: p.gamma)
        color = BC_COLORS.get(bc, "#555555")
        ax.errorbar([p.gamma for p in pts], [p.mean for p in pts],
                    yerr=[p.se for p in pts], color=color, marker="o",
                    markersize=4, capsize=3, linewidth=1.3,
                    label=f"bc={bc}", zorder=3)

    ax.set_xlabel("gamma")
    ax.set_ylabel("mean magnetization")
    ax.set_ylim(-1.08, 1.08)
    ax.legend(loc="center right", fontsize=8, framealpha=0.9)
    ax.set_title("boundary-condition sweep")
    info = {"n_points": len(ok), "bcs": sorted(by_bc),
            "ref_levels": levels}
    return fig, info


def plot_sweep(csv_in, image_out) -> dict:
    points = load_sweep(csv_in)
    fig, info = render_sweep(points)
    try:
        save_figure(fig, image_out)
    finally:
        plt.close(fig)
    return info
