"""Shared figure-output plumbing."""
from __future__ import annotations

from pathlib import Path

import matplotlib

# Stable ids inside SVG output; harmless for other formats.
matplotlib.rcParams["svg.hashsalt"] = "lkviz"


def save_figure(fig, out_path) -> Path:
    """Write the figure, suppressing writer metadata that varies by
    environment so repeated runs produce identical bytes."""
    out = Path(out_path)
    fmt = out.suffix.lower().lstrip(".") or "png"
    metadata = None
    if fmt == "png":
        metadata = {"Software": None}
    elif fmt == "svg":
        metadata = {"Date": None}
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format=fmt, metadata=metadata,
                facecolor=fig.get_facecolor(), bbox_inches="tight")
    return out
