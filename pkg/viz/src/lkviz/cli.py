"""Command-line entry point: ``viz sweep|theta --in ... --out ...``."""
from __future__ import annotations

import argparse
import sys

from .io import SchemaError

EXIT_OK = 0
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="viz", description="Figures from layerkac output files.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="magnetization vs. range parameter, "
                                      "one curve per boundary condition")
    sp.add_argument("--in", dest="inp", required=True,
                    help="magnetization sweep CSV")
    sp.add_argument("--out", required=True, help="output image (.png/.svg)")

    tp = sub.add_parser("theta", help="coarse block-label map with contour "
                                      "and stripe overlays")
    tp.add_argument("--in", dest="inp", required=True,
                    help="per-site field dump CSV")
    tp.add_argument("--census", default=None,
                    help="contour census JSON (omit to plot labels only)")
    tp.add_argument("--out", required=True, help="output image (.png/.svg)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # imported late so --help stays fast and backend setup happens once
    from .sweep_plot import plot_sweep
    from .theta_plot import plot_theta_field
    try:
        if args.command == "sweep":
            plot_sweep(args.inp, args.out)
        else:
            plot_theta_field(args.inp, args.census, args.out)
    except (SchemaError, OSError) as exc:
        print(f"viz: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
