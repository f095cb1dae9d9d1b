"""Shared fixtures: small config builders and cached full-scale preset runs."""

import numpy as np
import pytest

from viscowave.presets import build_preset
from viscowave.solver import DampingSpec, ProblemConfig, run


def make_config(
    n_cells=64,
    steps_per_unit=None,
    t_end=1.0,
    kernel=None,
    a=1.0,
    b=0.0,
    k=0.0,
    p=3.0,
    q=1.0,
    amplitude=1.0,
    strategy="direct",
    prony_modes=None,
    dt=None,
):
    """Sine initial data on (0, 1) with constant coefficients."""
    length = 1.0
    x = np.linspace(0.0, length, n_cells + 1)
    u0 = amplitude * np.sin(np.pi * x)
    u0[0] = u0[-1] = 0.0
    if dt is None:
        dt = 1.0 / steps_per_unit if steps_per_unit else 0.9 / n_cells
    return ProblemConfig(
        length=length,
        n_cells=n_cells,
        dt=dt,
        t_end=t_end,
        coeff_A=np.ones(n_cells),
        coeff_a=np.full(n_cells, a),
        coeff_b=np.full(n_cells + 1, b),
        coeff_k=np.full(n_cells + 1, k),
        p=p,
        damping=DampingSpec(q=q),
        kernel=kernel,
        u0=u0,
        v0=np.zeros(n_cells + 1),
        conv_strategy=strategy,
        prony_modes=prony_modes,
    )


@pytest.fixture(scope="session")
def preset_runs():
    """Full-scale benchmark runs, executed once per session."""
    out = {}
    for key, (example, q) in {
        "ex1_q1": (1, 1.0),
        "ex1_q2": (1, 2.0),
        "ex2": (2, None),
        "ex3": (3, None),
    }.items():
        preset = build_preset(example, q=q)
        trace = run(preset.config, record_stride=preset.record_stride)
        out[key] = (preset, trace)
    return out
