"""Sum-of-exponentials kernels for O(1)-per-step memory evaluation.

A PronyModes object is itself a valid relaxation kernel (positive,
decreasing, integrable) with closed-form value, derivative and tail
integral, so runs that evolve with it stay exactly self-consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import UnsupportedStrategyError
from .kernels import KernelSpec


@dataclass(frozen=True)
class PronyModes:
    """Kernel sum_j amps[j] * exp(-rates[j] * t) with positive amps and rates."""

    amps: np.ndarray
    rates: np.ndarray
    fit_error: float = 0.0  # sup relative error vs the fitted kernel, 0 if exact

    family = "prony"

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if amps.shape != rates.shape or amps.ndim != 1 or amps.size == 0:
            raise ValueError("amps and rates must be matching 1-D arrays")
        if np.any(amps <= 0.0) or np.any(rates <= 0.0):
            raise ValueError("mode amplitudes and rates must be positive")
        object.__setattr__(self, "amps", amps)
        object.__setattr__(self, "rates", rates)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.exp(-np.multiply.outer(t, self.rates)) @ self.amps
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = -np.exp(-np.multiply.outer(t, self.rates)) @ (self.amps * self.rates)
        return float(out) if out.ndim == 0 else out

    def tail_integral(self, t):
        return float(np.exp(-self.rates * t) @ (self.amps / self.rates))

    def partial_mass(self, t):
        """Integral of the kernel over [0, t], closed form."""
        return float((1.0 - np.exp(-self.rates * t)) @ (self.amps / self.rates))

    @property
    def total_mass(self):
        return float(np.sum(self.amps / self.rates))

    @property
    def value0(self):
        return float(np.sum(self.amps))

    def log_slope(self, s):
        return -self.derivative(s) / self.value(s)

    def to_json(self):
        return {
            "amps": [float(a) for a in self.amps],
            "rates": [float(r) for r in self.rates],
            "fit_error": self.fit_error,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            amps=np.asarray(obj["amps"], dtype=float),
            rates=np.asarray(obj["rates"], dtype=float),
            fit_error=float(obj.get("fit_error", 0.0)),
        )


def modes_for_kernel(kernel: KernelSpec) -> PronyModes:
    """Exact mode representation; only the shifted-exponential family has one."""
    if kernel.family == "shifted-exponential":
        return PronyModes(
            amps=np.array([kernel.alpha * math.exp(-kernel.beta)]),
            rates=np.array([kernel.beta]),
            fit_error=0.0,
        )
    raise UnsupportedStrategyError(
        f"kernel family {kernel.family!r} has no exact exponential-sum form; "
        "supply fitted modes explicitly"
    )


def fit_exponential_sum(
    kernel,
    t_max,
    t_min=None,
    n_modes=48,
    n_collocation=600,
    rel_tol=5e-5,
):
    """Fit a positive exponential sum to the kernel on [t_min, t_max].

    Nonnegative least squares on log-spaced collocation points with
    relative weighting; positivity of the amplitudes keeps the result a
    valid decreasing kernel.  Raises if the certified sup relative error
    on a dense validation grid exceeds rel_tol.
    """
    if t_min is None:
        t_min = 1e-4 * t_max
    rates = np.geomspace(0.1 / t_max, 4.0 / t_min, n_modes)
    t_fit = np.concatenate(([0.0], np.geomspace(t_min, t_max, n_collocation - 1)))
    f_fit = np.array([kernel.value(t) for t in t_fit])
    w = 1.0 / f_fit  # relative residuals
    design = np.exp(-np.outer(t_fit, rates)) * w[:, None]
    # normalize columns so the active-set solve is well conditioned
    col_scale = np.linalg.norm(design, axis=0)
    design /= col_scale
    try:
        amps, _ = nnls(design, f_fit * w, maxiter=200 * n_modes)
    except RuntimeError:
        from scipy.optimize import lsq_linear

        sol = lsq_linear(design, f_fit * w, bounds=(0.0, np.inf), method="bvls")
        amps = sol.x
    amps = amps / col_scale
    keep = amps > 0.0
    if not np.any(keep):
        raise UnsupportedStrategyError("exponential-sum fit collapsed to zero")
    modes = PronyModes(amps=amps[keep], rates=rates[keep], fit_error=0.0)
    t_val = np.concatenate(([0.0], np.geomspace(t_min, t_max, 4 * n_collocation)))
    f_val = np.array([kernel.value(t) for t in t_val])
    err = float(np.max(np.abs(modes.value(t_val) - f_val) / f_val))
    if err > rel_tol:
        raise UnsupportedStrategyError(
            f"exponential-sum fit error {err:.3e} exceeds tolerance {rel_tol:.1e}"
        )
    return PronyModes(amps=modes.amps, rates=modes.rates, fit_error=err)
