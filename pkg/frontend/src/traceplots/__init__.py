"""Static figures from energy-trace CSV files and decay-report JSON.

Consumes the simulation tool's file contracts only: an 11-column
trace.csv and an optional decay_report.json.  Three panels are rendered:
energy against time on linear and log axes (the latter with fitted
envelope overlays), and a log-log panel with the guaranteed-rate slope
guide.
"""

__version__ = "0.1.0"

from .render import PlotJob, PANELS, build_figures, read_report, read_trace, render

__all__ = [
    "PANELS",
    "PlotJob",
    "build_figures",
    "read_report",
    "read_trace",
    "render",
]
