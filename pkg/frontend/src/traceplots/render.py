"""Panel construction and atomic file output."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

TRACE_COLUMNS = (
    "t",
    "E",
    "bbE",
    "Lambda",
    "f_circ_grad",
    "mu",
    "dissipation_residual",
    "F3",
    "source_term",
    "l2_u",
    "l2_ut",
)

PANELS = ("energy_linear", "energy_log", "energy_loglog")

ENERGY_FLOOR = 1e-300
FIGSIZE = (6.4, 4.2)
DPI = 120


class TraceColumnError(ValueError):
    """The CSV does not carry the expected column set."""


@dataclass
class PlotJob:
    trace: str
    report: str | None = None
    out_dir: str = "."
    fmt: str = "png"
    panels: tuple = PANELS

    def __post_init__(self):
        if self.fmt not in ("png", "svg"):
            raise ValueError(f"unsupported format {self.fmt!r}")
        unknown = [p for p in self.panels if p not in PANELS]
        if unknown:
            raise ValueError(f"unknown panel {unknown[0]!r}")


def read_trace(path):
    """Load the trace columns, failing loudly on a missing column."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceColumnError("trace file is empty")
        for name in TRACE_COLUMNS:
            if name not in header:
                raise TraceColumnError(f"missing column {name!r}")
        index = {name: header.index(name) for name in TRACE_COLUMNS}
        rows = [row for row in reader if row]
    if not rows:
        raise TraceColumnError("trace file has no data rows")
    data = {}
    for name, j in index.items():
        data[name] = np.array([float(row[j]) for row in rows])
    return data


def read_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _envelope_curve(verdict, t):
    """Rebuild a fitted envelope curve from its recorded parameters.

    Amplitude parameters in the report already include the bounding
    lift, so the curve is a direct evaluation of the recorded constants.
    """
    params = verdict.get("parameters", {})
    name = verdict.get("name")
    if name == "exponential" and {"c1", "c2"} <= params.keys():
        return params["c1"] * np.exp(-params["c2"] * t)
    if name == "polynomial" and {"C", "E0", "exponent"} <= params.keys():
        return params["C"] * params["E0"] * (1.0 + t) ** (-params["exponent"])
    if name == "stretched-exponential" and {"c", "rate", "beta"} <= params.keys():
        return params["c"] * np.exp(-params["rate"] * t ** params["beta"])
    return None


def build_figures(job: PlotJob):
    """Figures keyed by panel name; deterministic layout and data."""
    data = read_trace(job.trace)
    report = read_report(job.report) if job.report else None
    t = data["t"]
    E = np.maximum(data["E"], ENERGY_FLOOR)
    q = float(report.get("q", 1.0)) if report else 1.0
    figures = {}

    if "energy_linear" in job.panels:
        fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
        ax.plot(t, data["E"], color="tab:blue", lw=1.2, label="E(t)")
        ax.set_xlabel("t")
        ax.set_ylabel("E")
        ax.set_title("energy")
        ax.legend(loc="upper right")
        figures["energy_linear"] = fig

    if "energy_log" in job.panels:
        fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
        ax.semilogy(t, E, color="tab:blue", lw=1.2, label="E(t)")
        if report:
            for verdict in report.get("envelope_verdicts", []):
                t0 = float(verdict.get("t0", 0.0))
                tt = t[t >= t0]
                curve = _envelope_curve(verdict, tt)
                if curve is not None:
                    ax.semilogy(tt, np.maximum(curve, ENERGY_FLOOR), "--", lw=1.0,
                                label=f"envelope [{verdict['name']}]")
        else:
            print("note: no report given, envelope overlay skipped")
        ax.set_xlabel("t")
        ax.set_ylabel("E (log scale)")
        ax.set_title("energy, log scale")
        ax.legend(loc="lower left", fontsize=8)
        figures["energy_log"] = fig

    if "energy_loglog" in job.panels:
        fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
        ax.loglog(1.0 + t, E, color="tab:blue", lw=1.2, label="E(t)")
        guide_slope = -2.0 / (q + 1.0)
        mask = t > 0.0
        if np.any(mask):
            anchor_x = 1.0 + t[mask][len(t[mask]) // 2]
            anchor_y = float(np.interp(anchor_x - 1.0, t, E))
            xs = np.array([anchor_x / 3.0, anchor_x * 3.0])
            ys = anchor_y * (xs / anchor_x) ** guide_slope
            ax.loglog(xs, ys, "k--", lw=1.0)
            ax.annotate(
                f"guaranteed slope {guide_slope:.2f}",
                xy=(xs[-1], ys[-1]),
                fontsize=8,
            )
        if report:
            alpha = report.get("poly_fit", {}).get("exponent")
            if alpha is not None:
                ax.annotate(
                    f"fitted slope {-alpha:.2f}",
                    xy=(0.05, 0.05),
                    xycoords="axes fraction",
                    fontsize=8,
                )
        ax.set_xlabel("1 + t")
        ax.set_ylabel("E (log scale)")
        ax.set_title("energy, log-log")
        ax.legend(loc="upper right", fontsize=8)
        figures["energy_loglog"] = fig

    return figures


def render(job: PlotJob):
    """Write one file per panel atomically; returns the file paths."""
    figures = build_figures(job)
    os.makedirs(job.out_dir, exist_ok=True)
    written = []
    try:
        for name in job.panels:
            fig = figures[name]
            path = os.path.join(job.out_dir, f"{name}.{job.fmt}")
            tmp = path + ".tmp"
            metadata = {"Date": None} if job.fmt == "svg" else None
            fig.savefig(tmp, format=job.fmt, metadata=metadata)
            os.replace(tmp, path)
            written.append(path)
    finally:
        for fig in figures.values():
            plt.close(fig)
    return written
