"""Plotting companion for the layerkac toolkit.

Everything here works from the files the primary package writes
(magnetization CSV, per-site field dumps, contour census JSON); nothing
imports the primary, so the two install independently.
"""

from .io import SchemaError
from .sweep_plot import plot_sweep
from .theta_plot import plot_theta_field

__all__ = ["SchemaError", "plot_sweep", "plot_theta_field"]
