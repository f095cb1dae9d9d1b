"""Relaxation kernels, their validators and the kernel-derived decay machinery.

A relaxation kernel f(t) weights the hereditary (memory) term of the wave
model.  Everything the decay analysis needs is derived from f here: the
residual stiffness, the tail integral F, the shifted log-slope and its
weighted mass, the convexity data (rate, modulus) that dominates f', and
the two monotone decay maps with their inverses that shape the predicted
energy envelopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, interpolate, special

from .errors import (
    KernelError,
    NonIntegrableTailError,
    QuadratureError,
    SingularDerivativeError,
)

FAMILIES = ("shifted-exponential", "stretched-exponential", "power-law", "tabulated")

_MONOTONE_SLACK = 1e-12


def _improper_quad(fn, points, epsrel=1e-11):
    """Integrate fn over [points[0], inf) with interior split points.

    Adaptive Gauss-Kronrod refinement on each finite panel plus the
    transformed infinite tail panel; raises QuadratureError when any
    panel fails to converge.
    """
    total = 0.0
    err = 0.0
    pts = list(points) + [np.inf]
    for a, b in zip(pts[:-1], pts[1:]):
        val, abserr, info, *rest = integrate.quad(
            fn, a, b, epsabs=0.0, epsrel=epsrel, limit=400, full_output=True
        )
        if rest:
            raise QuadratureError(
                f"quadrature did not converge on [{a}, {b}]: {rest[0]}",
                diagnostics={"panel": (a, b), "estimate": val, "abserr": abserr},
            )
        total += val
        err += abserr
    return total, err


def _finite_quad(fn, a, b, epsrel=1e-11):
    val, abserr, info, *rest = integrate.quad(
        fn, a, b, epsabs=0.0, epsrel=epsrel, limit=400, full_output=True
    )
    if rest:
        raise QuadratureError(
            f"quadrature did not converge on [{a}, {b}]: {rest[0]}",
            diagnostics={"panel": (a, b), "estimate": val, "abserr": abserr},
        )
    return val


@dataclass(frozen=True)
class KernelSpec:
    """A relaxation kernel from a closed-form family, or a sampled table.

    Families:
      shifted-exponential  f(t) = alpha * exp(-beta * (1 + t)),  alpha, beta > 0
      stretched-exponential f(t) = alpha * exp(-t**beta),        beta in (0, 1)
      power-law            f(t) = alpha * (1 + t)**(-beta),      beta > 0
                           (tail integrable only for beta > 1)
      tabulated            monotone nonuniform (t, f) samples with an
                           exponential tail fitted to the last two samples
    """

    family: str
    alpha: float = 1.0
    beta: float = 1.0
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.family == "tabulated":
            if self.samples is None:
                raise KernelError("tabulated kernel requires samples")
            pts = np.asarray(self.samples, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
                raise KernelError("samples must be an (n, 2) array with n >= 3")
            t, f = pts[:, 0], pts[:, 1]
            if t[0] != 0.0 or np.any(np.diff(t) <= 0):
                raise KernelError("sample times must be strictly increasing from 0")
            if f[0] <= 0.0:
                raise KernelError("tabulated kernel needs f(0) > 0")
            if np.any(f < 0.0):
                raise KernelError("tabulated kernel values must be nonnegative")
            if np.any(np.diff(f) > _MONOTONE_SLACK):
                raise KernelError("tabulated kernel must be nonincreasing")
            object.__setattr__(self, "samples", pts)
            object.__setattr__(
                self, "_pchip", interpolate.PchipInterpolator(t, f, extrapolate=False)
            )
        else:
            if self.samples is not None:
                raise KernelError("samples are only valid for the tabulated family")
            if not (self.alpha > 0.0 and self.beta > 0.0):
                raise KernelError("alpha and beta must be positive")
            if self.family == "stretched-exponential" and not (0.0 < self.beta < 1.0):
                raise KernelError("stretched-exponential requires beta in (0, 1)")

    # -- tail fit for the tabulated family --------------------------------

    def _tail_rate(self):
        t, f = self.samples[:, 0], self.samples[:, 1]
        if f[-1] == 0.0:
            return np.inf  # tail is identically zero
        if f[-2] <= f[-1]:
            raise NonIntegrableTailError(
                "tabulated tail does not decay; cannot fit an exponential tail"
            )
        return math.log(f[-2] / f[-1]) / (t[-1] - t[-2])

    # -- pointwise evaluation ---------------------------------------------

    def value(self, t):
        """f(t); scalar or array, t >= 0."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise KernelError("kernel argument must be nonnegative")
        if self.family == "shifted-exponential":
            out = self.alpha * np.exp(-self.beta * (1.0 + t_arr))
        elif self.family == "stretched-exponential":
            out = self.alpha * np.exp(-(t_arr**self.beta))
        elif self.family == "power-law":
            out = self.alpha * (1.0 + t_arr) ** (-self.beta)
        else:
            ts, fs = self.samples[:, 0], self.samples[:, 1]
            out = np.interp(t_arr, ts, fs)
            beyond = t_arr > ts[-1]
            if np.any(beyond):
                lam = self._tail_rate()
                if np.isinf(lam):
                    out = np.where(beyond, 0.0, out)
                else:
                    out = np.where(
                        beyond, fs[-1] * np.exp(-lam * (t_arr - ts[-1])), out
                    )
        return out if isinstance(t, np.ndarray) else float(out)

    def derivative(self, t):
        """f'(t), always <= 0; agrees with central differences away from kinks."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise KernelError("kernel argument must be nonnegative")
        if self.family == "shifted-exponential":
            out = -self.beta * self.alpha * np.exp(-self.beta * (1.0 + t_arr))
        elif self.family == "stretched-exponential":
            if np.any(t_arr == 0.0):
                raise SingularDerivativeError(
                    "stretched-exponential derivative diverges at t=0"
                )
            out = -self.alpha * self.beta * t_arr ** (self.beta - 1.0) * np.exp(
                -(t_arr**self.beta)
            )
        elif self.family == "power-law":
            out = -self.alpha * self.beta * (1.0 + t_arr) ** (-self.beta - 1.0)
        else:
            ts = self.samples[:, 0]
            out = self._pchip.derivative()(np.clip(t_arr, ts[0], ts[-1]))
            beyond = t_arr > ts[-1]
            if np.any(beyond):
                lam = self._tail_rate()
                fs = self.samples[:, 1]
                tail = (
                    0.0
                    if np.isinf(lam)
                    else -lam * fs[-1] * np.exp(-lam * (t_arr - ts[-1]))
                )
                out = np.where(beyond, tail, out)
            out = np.minimum(out, 0.0)
        return out if isinstance(t, np.ndarray) else float(out)

    def tail_integral(self, t):
        """F(t) = integral of f over [t, inf)."""
        t = float(t)
        if t < 0.0:
            raise KernelError("kernel argument must be nonnegative")
        if self.family == "shifted-exponential":
            return self.alpha * math.exp(-self.beta * (1.0 + t)) / self.beta
        if self.family == "stretched-exponential":
            a = 1.0 / self.beta
            # substitute y = s**beta: F(t) = (alpha/beta) * Gamma(a, t**beta)
            return (
                self.alpha / self.beta * special.gammaincc(a, t**self.beta) * special.gamma(a)
            )
        if self.family == "power-law":
            if self.beta <= 1.0:
                raise NonIntegrableTailError(
                    f"power-law tail with beta={self.beta} is not integrable"
                )
            return self.alpha * (1.0 + t) ** (1.0 - self.beta) / (self.beta - 1.0)
        ts, fs = self.samples[:, 0], self.samples[:, 1]
        lam = self._tail_rate()
        tail_mass = 0.0 if np.isinf(lam) else fs[-1] / lam
        if t >= ts[-1]:
            if np.isinf(lam):
                return 0.0
            return tail_mass * math.exp(-lam * (t - ts[-1]))
        # exact integral of the piecewise-linear interpolant on [t, ts[-1]]
        ft = float(np.interp(t, ts, fs))
        idx = int(np.searchsorted(ts, t, side="right"))
        knots_t = np.concatenate(([t], ts[idx:]))
        knots_f = np.concatenate(([ft], fs[idx:]))
        seg = 0.5 * (knots_f[1:] + knots_f[:-1]) * np.diff(knots_t)
        return float(np.sum(seg) + tail_mass)

    @property
    def total_mass(self):
        """Integral of f over [0, inf)."""
        return self.tail_integral(0.0)

    @property
    def value0(self):
        return self.value(0.0)

    def log_slope(self, s):
        """-f'(s)/f(s), the nonnegative decay rate of the kernel."""
        f = self.value(s)
        if np.any(np.asarray(f) == 0.0):
            raise KernelError("log-slope undefined where f vanishes")
        return -self.derivative(s) / f

    # -- JSON wire format ---------------------------------------------------

    def to_json(self):
        out = {"family": self.family, "alpha": self.alpha, "beta": self.beta}
        if self.samples is not None:
            out["samples"] = [[float(t), float(f)] for t, f in self.samples]
        return out

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or "family" not in obj:
            raise KernelError("kernel JSON must be an object with a 'family' key")
        samples = obj.get("samples")
        return cls(
            family=obj["family"],
            alpha=float(obj.get("alpha", 1.0)),
            beta=float(obj.get("beta", 1.0)),
            samples=None if samples is None else np.asarray(samples, dtype=float),
        )


# ---------------------------------------------------------------------------
# scalar quantities derived from the kernel
# ---------------------------------------------------------------------------


def residual_stiffness(kernel, a_sup, lambda0):
    """Effective residual stiffness lambda0 - a_sup * integral(f).

    Positivity is the non-degeneracy condition for the memory coupling;
    no sign requirement is imposed here, callers gate on the result.
    """
    if lambda0 <= 0.0:
        raise ValueError("lambda0 must be positive")
    if a_sup < 0.0:
        raise ValueError("a_sup must be nonnegative")
    mass = 0.0 if kernel is None else kernel.total_mass
    return lambda0 - a_sup * mass


def log_slope_shifted(kernel, delta, s):
    """K(s) = -f'(s)/f(s) + delta for delta in (0, 1)."""
    if not (0.0 < delta < 1.0):
        raise KernelError("delta must lie in (0, 1)")
    return kernel.log_slope(s) + delta


def weighted_mass(kernel, delta, epsrel=None):
    """Integral of f(s) / (-f'(s)/f(s) + delta) over [0, inf).

    Computed by adaptive quadrature with the infinite tail transformed;
    closed forms exist for the exponential families and are used as
    oracles in the tests, not here.
    """
    if not (0.0 < delta < 1.0):
        raise KernelError("delta must lie in (0, 1)")

    def integrand(s):
        if s <= 0.0:
            if kernel.family == "stretched-exponential":
                return 0.0  # log-slope diverges at 0, integrand vanishes
            s = 0.0
        f = kernel.value(s)
        if f == 0.0:
            return 0.0
        return f / (-kernel.derivative(s) / f + delta)

    # split points bracket the scale changes of the integrand
    points = [0.0, 1.0, 10.0, 100.0]
    if kernel.family == "power-law":
        points.append(max(200.0, 2.0 * kernel.beta / delta))
    if kernel.family == "tabulated":
        # the monotone-cubic derivative has kinks at the sample knots
        points.extend(float(t) for t in kernel.samples[1:, 0])
        if epsrel is None:
            epsrel = 1e-9
    if epsrel is None:
        epsrel = 1e-11
    points = sorted(set(p for p in points if p >= 0.0))
    value, _ = _improper_quad(integrand, points, epsrel=epsrel)
    return value


def smallness_profile(kernel, deltas=(1e-1, 1e-2, 1e-3, 1e-4)):
    """Table of (delta, M(delta), delta*M(delta)) along a decreasing delta grid.

    delta*M(delta) tends to zero with delta for every integrable kernel,
    which is the smallness the decay estimates hinge on.
    """
    rows = []
    for d in deltas:
        m = weighted_mass(kernel, d)
        rows.append((float(d), m, float(d) * m))
    return rows


# ---------------------------------------------------------------------------
# convexity data: the pair (rate, modulus) dominating the kernel decay
# ---------------------------------------------------------------------------


def _eval_or_inf(fn, t):
    """Evaluate a modulus callback, mapping endpoint blow-ups to +inf.

    Some admissible moduli (the logarithmic one in particular) diverge as
    t approaches f0, which is fine: they already exhaust [0, inf) without
    any extension.
    """
    try:
        v = float(fn(t))
    except (ZeroDivisionError, OverflowError):
        return math.inf
    return v if math.isfinite(v) else math.inf


@dataclass(frozen=True)
class ConvexityData:
    """A nonincreasing rate and a convex modulus with f' <= -rate * modulus(f).

    The modulus G lives on [0, f0]; beyond f0 it is continued by the unique
    quadratic matching value and two derivatives at f0, which keeps the
    extension C2, increasing and convex.  Moduli that blow up at f0 need
    no extension and get +inf beyond it.
    """

    rate: Callable[[float], float]
    modulus: Callable[[float], float]
    modulus_prime: Callable[[float], float]
    modulus_second: Callable[[float], float]
    f0: float
    label: str = "custom"

    @property
    def extension_coeffs(self):
        g0 = _eval_or_inf(self.modulus, self.f0)
        g1 = _eval_or_inf(self.modulus_prime, self.f0)
        g2 = _eval_or_inf(self.modulus_second, self.f0)
        return g0, g1, g2

    def modulus_ext(self, t):
        t = float(t)
        if t <= self.f0:
            return _eval_or_inf(self.modulus, t)
        g0, g1, g2 = self.extension_coeffs
        if not all(map(math.isfinite, (g0, g1, g2))):
            return math.inf
        return (g0 - g1 * self.f0 + 0.5 * g2 * self.f0**2) + (g1 - g2 * self.f0) * t + 0.5 * g2 * t**2

    def modulus_prime_ext(self, t):
        t = float(t)
        if t <= self.f0:
            return _eval_or_inf(self.modulus_prime, t)
        g0, g1, g2 = self.extension_coeffs
        if not all(map(math.isfinite, (g0, g1, g2))):
            return math.inf
        return g1 + g2 * (t - self.f0)

    def modulus_ext_inverse(self, y):
        """Inverse of the extended modulus on [0, inf), by bracketed bisection."""
        y = float(y)
        if y <= 0.0:
            return 0.0
        hi = self.f0
        while self.modulus_ext(hi) < y:
            hi *= 2.0
            if hi > 1e300:
                raise KernelError("modulus inverse out of range")
        lo = 0.0
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if self.modulus_ext(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * hi:
                break
        return 0.5 * (lo + hi)


def extend_modulus(cx: ConvexityData, t):
    """Quadratic continuation of the modulus beyond f0."""
    if t <= cx.f0:
        raise KernelError("extension is only defined beyond f0")
    return cx.modulus_ext(t)


def canonical_convexity(kernel: KernelSpec) -> ConvexityData:
    """The standard (rate, modulus) pair for each closed-form family."""
    f0 = kernel.value0
    if kernel.family == "shifted-exponential":
        beta = kernel.beta
        return ConvexityData(
            rate=lambda t: beta,
            modulus=lambda t: t,
            modulus_prime=lambda t: 1.0,
            modulus_second=lambda t: 0.0,
            f0=f0,
            label="linear",
        )
    if kernel.family == "stretched-exponential":
        alpha, beta = kernel.alpha, kernel.beta

        def modulus(t):
            if t <= 0.0:
                return 0.0
            L = math.log(alpha / t)
            return beta * t / L ** (1.0 / beta - 1.0)

        def modulus_prime(t):
            L = math.log(alpha / t)
            return ((1.0 - beta) + beta * L) / L ** (1.0 / beta)

        def modulus_second(t):
            L = math.log(alpha / t)
            return (1.0 - beta) * (L + 1.0 / beta) / (t * L ** (1.0 / beta + 1.0))

        return ConvexityData(
            rate=lambda t: 1.0,
            modulus=modulus,
            modulus_prime=modulus_prime,
            modulus_second=modulus_second,
            f0=f0,
            label="log-modulus",
        )
    if kernel.family == "power-law":
        beta = kernel.beta
        expo = (beta + 1.0) / beta

        def modulus(t):
            return 0.0 if t <= 0.0 else t**expo

        return ConvexityData(
            rate=lambda t: 1.0,
            modulus=modulus,
            modulus_prime=lambda t: expo * t ** (expo - 1.0),
            modulus_second=lambda t: expo * (expo - 1.0) * t ** (expo - 2.0),
            f0=f0,
            label="power-modulus",
        )
    raise KernelError(f"no canonical convexity data for family {kernel.family!r}")


@dataclass(frozen=True)
class DominationReport:
    passed: bool
    max_violation: float
    argmax_t: float
    tol: float
    n_points: int


def check_domination(kernel, cx: ConvexityData, grid, tol=1e-10) -> DominationReport:
    """Verify f'(t) + rate(t) * modulus(f(t)) <= tol pointwise on the grid."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0.0):
        raise KernelError("domination check grid must be strictly positive")
    worst = -np.inf
    worst_t = float(grid[0])
    for t in grid:
        viol = kernel.derivative(t) + cx.rate(t) * cx.modulus(kernel.value(t))
        if viol > worst:
            worst = viol
            worst_t = float(t)
    return DominationReport(
        passed=bool(worst <= tol),
        max_violation=float(worst),
        argmax_t=worst_t,
        tol=tol,
        n_points=len(grid),
    )


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    messages: tuple


def validate_convexity(cx: ConvexityData, n_points=200) -> ConvexityReport:
    """Grid checks: modulus increasing and convex on (0, f0), C2 extension."""
    msgs = []
    grid = np.geomspace(1e-10 * cx.f0, (1.0 - 1e-9) * cx.f0, n_points)
    mp = np.array([_eval_or_inf(cx.modulus_prime, t) for t in grid])
    ms = np.array([_eval_or_inf(cx.modulus_second, t) for t in grid])
    if not np.all(mp > 0.0):
        msgs.append("modulus_prime is not positive on (0, f0)")
    if not np.all(ms >= -1e-12):
        msgs.append("modulus_second is negative somewhere on (0, f0)")
    if abs(cx.modulus(0.0 if cx.f0 == 0 else min(1e-300, cx.f0))) > 1e-12:
        msgs.append("modulus(0+) does not vanish")
    g0, g1, g2 = cx.extension_coeffs
    if all(map(math.isfinite, (g0, g1, g2))):
        eps = 1e-7 * cx.f0
        up = cx.modulus_ext(cx.f0 + eps)
        expect = g0 + g1 * eps + 0.5 * g2 * eps**2
        if abs(up - expect) > 1e-12 * max(1.0, abs(g0)):
            msgs.append("quadratic extension does not match value/slope/curvature at f0")
    return ConvexityReport(passed=not msgs, messages=tuple(msgs))


# ---------------------------------------------------------------------------
# decay maps and their inverses
# ---------------------------------------------------------------------------

MODULUS_FLOOR_FACTOR = 1e-14  # lower truncation of the integral map domain


def modulus_integral(cx: ConvexityData, t):
    """Strictly decreasing map: integral of 1/(s * modulus'(s)) over [t, f0].

    The integrand can span many decades (it diverges as t -> 0 for every
    admissible modulus), so the range is integrated over log-spaced
    panels whose relative errors add.
    """
    t = float(t)
    if not (0.0 < t <= cx.f0):
        raise KernelError("modulus_integral requires t in (0, f0]")
    if t == cx.f0:
        return 0.0
    n_panels = max(2, int(math.ceil(math.log(cx.f0 / t) / math.log(50.0))))
    knots = np.geomspace(t, cx.f0, n_panels + 1)
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        total += _finite_quad(lambda s: 1.0 / (s * cx.modulus_prime(s)), a, b)
    return total


def modulus_integral_inverse(cx: ConvexityData, y, rel_tol=1e-9):
    """Invert the integral map; returns (t, saturated).

    The integral diverges as t -> 0 for every admissible modulus, so the
    domain is truncated at MODULUS_FLOOR_FACTOR * f0 and inversion requests
    beyond the reachable range return the floor with saturated=True.
    """
    y = float(y)
    if y < 0.0:
        raise KernelError("modulus_integral_inverse requires y >= 0")
    if y == 0.0:
        return cx.f0, False
    floor = MODULUS_FLOOR_FACTOR * cx.f0
    y_max = modulus_integral(cx, floor)
    if y >= y_max:
        return floor, True
    lo, hi = floor, cx.f0  # map decreases from y_max at lo to 0 at hi
    for _ in range(200):
        mid = math.sqrt(lo * hi)  # geometric split suits the log-like map
        val = modulus_integral(cx, mid)
        if abs(val - y) <= 0.5 * rel_tol * (1.0 + y):
            return mid, False
        if val > y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi), False


def modulus_slope_map(cx: ConvexityData, eps1, t):
    """Strictly increasing map t * modulus'(eps1 * t), extended past f0."""
    t = float(t)
    if t < 0.0:
        raise KernelError("modulus_slope_map requires t >= 0")
    if eps1 <= 0.0:
        raise KernelError("eps1 must be positive")
    if t == 0.0:
        return 0.0
    return t * cx.modulus_prime_ext(eps1 * t)


def modulus_slope_map_inverse(cx: ConvexityData, eps1, y, rel_tol=1e-9):
    """Invert the slope map by bracketed bisection; round trip <= rel_tol."""
    y = float(y)
    if y < 0.0:
        raise KernelError("modulus_slope_map_inverse requires y >= 0")
    if y == 0.0:
        return 0.0
    hi = cx.f0 / eps1
    while modulus_slope_map(cx, eps1, hi) < y:
        hi *= 2.0
        if hi > 1e300:
            raise KernelError("slope map inverse out of range")
    lo = 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        val = modulus_slope_map(cx, eps1, mid)
        if abs(val - y) <= 0.1 * rel_tol * y:
            return mid
        if val < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# predicted decay envelopes
# ---------------------------------------------------------------------------

ENVELOPE_MODELS = (
    "exponential",
    "stretched-exponential",
    "polynomial",
    "modulus-integral",
    "modulus-slope",
)


@dataclass
class DecayEnvelope:
    """A positive, eventually nonincreasing upper-bound curve for the energy."""

    model: str
    parameters: dict
    evaluate: Callable[[float], float]
    t0: float = 0.0

    def check_shape(self, t_lo, t_hi, n=64):
        grid = np.linspace(max(t_lo, self.t0 + 1e-9), t_hi, n)
        vals = np.array([self.evaluate(t) for t in grid])
        if np.any(vals <= 0.0):
            raise KernelError(f"envelope {self.model} is not positive on the window")
        if np.any(np.diff(vals) > 1e-9 * np.abs(vals[:-1])):
            raise KernelError(f"envelope {self.model} is not nonincreasing")
        return True


def _rate_integral(cx: ConvexityData, t0, t):
    """Integral of the rate over [t0, t]; exact for constant rates."""
    r0 = cx.rate(t0)
    probe = cx.rate(0.5 * (t0 + t))
    if probe == r0 and cx.rate(t) == r0:
        return r0 * (t - t0)
    return _finite_quad(cx.rate, t0, t, epsrel=1e-10)


def predicted_envelope(kernel, cx, q, constants, refined=True) -> DecayEnvelope:
    """Build the guaranteed-shape envelope with caller-supplied constants.

    constants: dict with free fit parameters; recognized keys are
    C, k1, k2, eps1, t0, E0.  The theory proves such constants exist but
    never constructs them, so they are fitted against simulated data.
    """
    if q < 1.0:
        raise KernelError("q must be >= 1")
    t0 = float(constants.get("t0", 0.0))
    E0 = float(constants.get("E0", 1.0))
    if not refined:
        C = float(constants.get("C", 1.0))
        expo = 2.0 / (q + 1.0)

        def poly(t):
            return C * E0 * (1.0 + t) ** (-expo)

        return DecayEnvelope(
            model="polynomial",
            parameters={"C": C, "E0": E0, "exponent": expo, "t0": t0},
            evaluate=poly,
            t0=t0,
        )
    if cx is None:
        raise KernelError("refined envelopes require convexity data")
    eps1 = float(constants.get("eps1", 1.0))
    if q == 1.0:
        k1 = float(constants.get("k1", 1.0))

        def env1(t):
            if t <= t0:
                t = t0
            x, _ = modulus_integral_inverse(cx, k1 * _rate_integral(cx, t0, t))
            return x / eps1

        return DecayEnvelope(
            model="modulus-integral",
            parameters={"k1": k1, "eps1": eps1, "t0": t0},
            evaluate=env1,
            t0=t0,
        )
    k2 = float(constants.get("k2", 1.0))
    expo = 2.0 / (q + 1.0)

    def env2(t):
        if t <= t0:
            return math.inf
        ri = _rate_integral(cx, t0, t)
        if ri <= 0.0:
            return math.inf
        inner = modulus_slope_map_inverse(cx, eps1, k2 / (t * ri))
        return E0 * (t * inner) ** expo

    return DecayEnvelope(
        model="modulus-slope",
        parameters={"k2": k2, "eps1": eps1, "t0": t0, "E0": E0, "exponent": expo},
        evaluate=env2,
        t0=t0,
    )


# ---------------------------------------------------------------------------
# whole-kernel analysis record
# ---------------------------------------------------------------------------


@dataclass
class KernelAnalysis:
    ell: float
    f0: float
    total_mass: float
    F_table: list
    M_table: dict

    def to_json(self):
        return {
            "ell": self.ell,
            "f0": self.f0,
            "total_mass": self.total_mass,
            "F_table": [[t, v] for t, v in self.F_table],
            "M_table": {f"{d:g}": m for d, m in self.M_table.items()},
        }


@dataclass(frozen=True)
class KernelCheck:
    passed: bool
    messages: tuple


def validate_kernel(kernel, t_max=50.0, n_points=400) -> KernelCheck:
    """Shape checks: f(0) > 0, f >= 0 and nonincreasing on a validation grid."""
    msgs = []
    if kernel.value0 <= 0.0:
        msgs.append("f(0) must be positive")
    grid = np.linspace(0.0, t_max, n_points)
    vals = np.array([kernel.value(t) for t in grid])
    if np.any(vals < 0.0):
        msgs.append("f takes negative values")
    if np.any(np.diff(vals) > _MONOTONE_SLACK):
        msgs.append("f is not nonincreasing on the validation grid")
    try:
        mass = kernel.total_mass
        if not np.isfinite(mass):
            msgs.append("kernel mass is not finite")
    except NonIntegrableTailError as exc:
        msgs.append(str(exc))
    return KernelCheck(passed=not msgs, messages=tuple(msgs))


def analyze_kernel(
    kernel,
    a_sup=1.0,
    lambda0=1.0,
    deltas=(1e-1, 1e-2, 1e-3, 1e-4),
    t_grid=None,
) -> KernelAnalysis:
    """Collect the kernel-derived scalars and tables used by the gates."""
    if t_grid is None:
        t_grid = np.geomspace(1e-3, 100.0, 25)
        t_grid = np.concatenate(([0.0], t_grid))
    F_table = [(float(t), kernel.tail_integral(t)) for t in t_grid]
    M_table = {float(d): weighted_mass(kernel, d) for d in deltas}
    return KernelAnalysis(
        ell=residual_stiffness(kernel, a_sup, lambda0),
        f0=kernel.value0,
        total_mass=kernel.total_mass,
        F_table=F_table,
        M_table=M_table,
    )
