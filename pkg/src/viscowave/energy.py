"""Energy functionals, the well-posedness gate and the runtime diagnostics.

Every quantity is evaluated against the kernel the run actually convolved
with, so the discrete identities (lower bounds, dissipation budget) close
to rounding plus scheme order, never to kernel-approximation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kernels import ConvexityData

LAMBDA_INFINITE = float("inf")


# ---------------------------------------------------------------------------
# functional evaluation on simulation states
# ---------------------------------------------------------------------------


def memory_discrepancy(state, kernel=None):
    """The nonnegative gradient-discrepancy functional at the current step.

    Expands the squared difference so the stored sums suffice:
    sum_m w_m f(t-t_m) (e_n - 2 <g_n, g_m>_a + e_m).  Rounding can push
    the cancellation marginally negative, so the result is clamped at 0.
    """
    if kernel is not None and kernel is not state.kernel:
        return _discrepancy_from_history(state, kernel)
    vec, A, D = state.kernel_sums("value")
    e_n = state.e_hist[state.t_index]
    val = A * e_n - 2.0 * state.inner_a(state.g, vec) + D
    return max(val, 0.0)


def memory_discrepancy_rate(state):
    """-(f' o grad u)(t) >= 0, same quadrature with the kernel derivative."""
    if state.kernel is None:
        return 0.0
    vec, A, D = state.kernel_sums("derivative")
    e_n = state.e_hist[state.t_index]
    val = A * e_n - 2.0 * state.inner_a(state.g, vec) + D
    return max(-val, 0.0)


def gradient_spread_integral(state):
    """Integral over past times of |grad(u(t) - u(s))|^2 weighted by a."""
    vec, A, D = state.kernel_sums("unit")
    e_n = state.e_hist[state.t_index]
    val = A * e_n - 2.0 * state.inner_a(state.g, vec) + D
    return max(val, 0.0)


def _discrepancy_from_history(state, kernel):
    n = state.t_index
    if n == 0 or kernel is None:
        return 0.0
    if state.g_hist is None:
        raise ConfigError("cross-kernel evaluation requires the stored history")
    from .solver import trapezoid_weights

    times = (n - np.arange(n + 1)) * state.dt
    coeffs = trapezoid_weights(n, state.dt) * kernel.value(times)
    vec = coeffs @ state.g_hist[: n + 1]
    A = float(np.sum(coeffs))
    D = float(np.dot(coeffs, state.e_hist[: n + 1]))
    e_n = state.e_hist[n]
    return max(A * e_n - 2.0 * state.inner_a(state.g, vec) + D, 0.0)


def f_circ_grad(state, kernel=None, t_n=None):
    """Energy-module surface for the memory-discrepancy functional."""
    if t_n is not None and abs(t_n - state.t) > 1e-12 * max(1.0, t_n):
        raise ConfigError("requested time does not match the state")
    return memory_discrepancy(state, kernel)


def static_parts(state, config):
    """Everything in the energy sample that does not need the velocity."""
    n = state.t_index
    t = n * state.dt
    kernel = state.kernel
    e_n = float(state.e_hist[n])
    grad2 = state.grad_norm2()
    if kernel is None:
        mass_0t = 0.0
        f_t = 0.0
        fcg = 0.0
        mu = 0.0
    else:
        # partial kernel mass by closed form, so it never exceeds the
        # total mass and the energy lower bound holds exactly
        if hasattr(kernel, "partial_mass"):
            mass_0t = kernel.partial_mass(t)
        else:
            mass_0t = kernel.total_mass - kernel.tail_integral(t)
        f_t = float(kernel.value(t))
        fcg = memory_discrepancy(state)
        mu = memory_discrepancy_rate(state)
    psi_int = gradient_spread_integral(state)
    u = state.u
    h = state.h
    elastic = 0.5 * float(np.dot(config.coeff_A * state.g, state.g)) * h
    if config.k_sup > 0.0:
        source_term = float(np.dot(config.coeff_k, np.abs(u) ** config.p)) * h / config.p
    else:
        source_term = 0.0
    l2_u = math.sqrt(h * float(np.dot(u, u)))
    ell = state_ell(state, config)
    E_static = elastic - 0.5 * mass_0t * e_n + 0.5 * fcg - source_term
    return {
        "idx": n,
        "t": t,
        "e_n": e_n,
        "grad2": grad2,
        "f_circ_grad": fcg,
        "mu": mu,
        "psi_int": psi_int,
        "f_t": f_t,
        "source_term": source_term,
        "l2_u": l2_u,
        "E_static": E_static,
        "Lambda": math.sqrt(max(ell * grad2 + fcg, 0.0)),
    }


def velocity_parts(config, u, v):
    """Velocity-dependent pieces; v is the centered velocity at the index."""
    h = config.length / config.n_cells
    kinetic = 0.5 * h * float(np.dot(v, v))
    l2_ut = math.sqrt(h * float(np.dot(v, v)))
    F3 = h * float(np.dot(v, u))
    damp = h * float(np.dot(config.coeff_b * config.damping.apply(v), v))
    return {"kinetic": kinetic, "l2_ut": l2_ut, "F3": F3, "damp_int": damp}


def dissipation_residual(E_prev, E_next, dt, mu, f_t, e_n, damp_int):
    """Centered discrete energy rate minus the exact dissipation rate.

    The rate identity says E' equals -(1/2) mu - (f(t)/2) int a|grad u|^2
    - int b h(u_t) u_t; the residual of its discretization over three
    consecutive steps measures scheme fidelity, at O(dt + h^2).
    """
    dEdt = (E_next - E_prev) / (2.0 * dt)
    rhs = -0.5 * mu - 0.5 * f_t * e_n - damp_int
    return dEdt - rhs


def assemble_sample(samples, idx, dt, have_prev, have_next):
    """Finish one recorded row, including the dissipation residual over
    the two adjacent true steps (NaN where a neighbour is missing)."""
    parts = samples[idx]
    E = parts["E_static"] + parts["kinetic"]
    parts["E"] = E
    bbE = E + parts["source_term"]
    if have_prev and have_next:
        residual = dissipation_residual(
            samples[idx - 1]["E_static"] + samples[idx - 1]["kinetic"],
            samples[idx + 1]["E_static"] + samples[idx + 1]["kinetic"],
            dt,
            parts["mu"],
            parts["f_t"],
            parts["e_n"],
            parts["damp_int"],
        )
    else:
        residual = float("nan")
    return {
        "t": parts["t"],
        "E": E,
        "bbE": bbE,
        "Lambda": parts["Lambda"],
        "f_circ_grad": parts["f_circ_grad"],
        "mu": parts["mu"],
        "dissipation_residual": residual,
        "F3": parts["F3"],
        "source_term": parts["source_term"],
        "l2_u": parts["l2_u"],
        "l2_ut": parts["l2_ut"],
        "psi_int": parts["psi_int"],
        "grad2": parts["grad2"],
    }


def state_ell(state, config):
    kernel = state.kernel
    mass = 0.0 if kernel is None else kernel.total_mass
    return config.lam_min - config.a_sup * mass


def energy_value(state, config, velocity=None):
    """E at the current index; velocity defaults to the state's estimate."""
    parts = static_parts(state, config)
    v = state.v if velocity is None else velocity
    vp = velocity_parts(config, state.u, v)
    return parts["E_static"] + vp["kinetic"]


def diagnostics_F3_mu(state, config, velocity=None):
    """(F3, mu): displacement-velocity overlap and the discrepancy rate."""
    v = state.v if velocity is None else velocity
    F3 = state.h * float(np.dot(v, state.u))
    return F3, memory_discrepancy_rate(state)


# ---------------------------------------------------------------------------
# Sobolev embedding bound
# ---------------------------------------------------------------------------


def sobolev_bound(length, r):
    """Computable 1-D bound B_r <= L * (L/2)**(r/2) for ||w||_r^r <= B_r ||w'||_2^r.

    Conservative (at least the optimal constant), which only tightens the
    admission gate where B appears; the monitored thresholds derived from
    it err on the strict side.
    """
    if r < 2.0:
        raise ValueError("the embedding bound requires r >= 2")
    if length <= 0.0:
        raise ValueError("domain length must be positive")
    return length * (0.5 * length) ** (0.5 * r)


# ---------------------------------------------------------------------------
# well-posedness gate
# ---------------------------------------------------------------------------


@dataclass
class WellPosednessReport:
    ell: float
    sobolev_p: float          # B_p bound for the source exponent
    k_sup: float
    p: float
    lambda_limit: float       # radius of the potential well
    energy_ceiling: float     # well depth
    energy0: float
    lambda_initial: float
    admission_threshold: float
    source_ratio: float       # coefficient bounding source by energy
    verdict: bool
    lambda_infinite: bool = False
    gate_relax: float = 1.0

    def to_json(self):
        def enc(x):
            return None if not math.isfinite(x) else x

        return {
            "schema_version": 1,
            "ell": enc(self.ell),
            "B_p_bound": enc(self.sobolev_p),
            "K": enc(self.k_sup),
            "p": self.p,
            "Lambda1": enc(self.lambda_limit),
            "E1": enc(self.energy_ceiling),
            "E0": enc(self.energy0),
            "Lambda0": enc(self.lambda_initial),
            "threshold": enc(self.admission_threshold),
            "tilde_C": enc(self.source_ratio),
            "verdict": bool(self.verdict),
            "lambda1_infinite": bool(self.lambda_infinite),
            "gate_relax": self.gate_relax,
        }


def source_ratio_from(k_sup, B, p, lam):
    """2 K B lam^(p-2) / (p - 2 K B lam^(p-2)); positive inside the well."""
    a = 2.0 * k_sup * B * lam ** (p - 2.0)
    if a >= p:
        return float("inf")
    return a / (p - a)


def wellposedness_gate(config) -> WellPosednessReport:
    """Evaluate the small-data admission conditions at t = 0.

    The unknown interior radius of the well is replaced by the initial
    value Lambda(0); the run monitor re-checks with the observed maximum
    afterwards (see potential_well_report).  With no source (K = 0) the
    gate passes unconditionally and the well radius is flagged infinite.
    """
    from .solver import midpoint_gradient

    kernel = config.effective_kernel()
    mass = 0.0 if kernel is None else kernel.total_mass
    ell = config.lam_min - config.a_sup * mass
    h = config.h
    g0 = midpoint_gradient(config.u0, h)
    grad2 = h * float(np.dot(g0, g0))
    elastic = 0.5 * h * float(np.dot(config.coeff_A * g0, g0))
    kinetic = 0.5 * h * float(np.dot(config.v0, config.v0))
    K = config.k_sup
    if K > 0.0:
        source0 = h * float(np.dot(config.coeff_k, np.abs(config.u0) ** config.p)) / config.p
    else:
        source0 = 0.0
    E0 = kinetic + elastic - source0
    lam0 = math.sqrt(max(ell, 0.0) * grad2)
    relax = config.gate_relax
    if config.p <= 2.0:
        # outside the admission theory (forced runs only): fail cleanly
        return WellPosednessReport(
            ell=ell,
            sobolev_p=float("nan"),
            k_sup=config.k_sup,
            p=config.p,
            lambda_limit=float("nan"),
            energy_ceiling=float("nan"),
            energy0=E0,
            lambda_initial=lam0,
            admission_threshold=float("nan"),
            source_ratio=float("nan"),
            verdict=False,
            gate_relax=relax,
        )
    Bp = sobolev_bound(config.length, config.p)
    if ell <= 0.0:
        return WellPosednessReport(
            ell=ell,
            sobolev_p=Bp,
            k_sup=K,
            p=config.p,
            lambda_limit=float("nan"),
            energy_ceiling=float("nan"),
            energy0=E0,
            lambda_initial=lam0,
            admission_threshold=float("nan"),
            source_ratio=float("nan"),
            verdict=False,
            gate_relax=relax,
        )
    if K == 0.0:
        return WellPosednessReport(
            ell=ell,
            sobolev_p=Bp,
            k_sup=0.0,
            p=config.p,
            lambda_limit=LAMBDA_INFINITE,
            energy_ceiling=LAMBDA_INFINITE,
            energy0=E0,
            lambda_initial=lam0,
            admission_threshold=LAMBDA_INFINITE,
            source_ratio=0.0,
            verdict=True,
            lambda_infinite=True,
            gate_relax=relax,
        )
    B = Bp * ell ** (-0.5 * config.p)
    lambda_limit = (1.0 / (K * B)) ** (1.0 / (config.p - 2.0))
    energy_ceiling = (0.5 - 1.0 / config.p) * lambda_limit**2
    ratio = source_ratio_from(K, B, config.p, lam0)
    if math.isfinite(ratio):
        threshold = min(
            energy_ceiling,
            (ell / (8.0 * K * Bp)) ** (2.0 / (config.p - 2.0)) * ell / (2.0 * (1.0 + ratio)),
        )
    else:
        threshold = float("nan")
    verdict = (
        math.isfinite(ratio)
        and E0 < relax * energy_ceiling
        and lam0 < relax * lambda_limit
        and E0 < relax * threshold
    )
    return WellPosednessReport(
        ell=ell,
        sobolev_p=Bp,
        k_sup=K,
        p=config.p,
        lambda_limit=lambda_limit,
        energy_ceiling=energy_ceiling,
        energy0=E0,
        lambda_initial=lam0,
        admission_threshold=threshold,
        source_ratio=ratio,
        verdict=bool(verdict),
        gate_relax=relax,
    )


# ---------------------------------------------------------------------------
# trace-level monitors and reports
# ---------------------------------------------------------------------------


@dataclass
class MonitorReport:
    passed: bool
    max_ratio: float
    flagged_infinite: bool
    asserted: bool


def lambda_monitor(trace, gate: WellPosednessReport) -> MonitorReport:
    """Check the recorded well indicator stays strictly inside the well."""
    lam = trace["Lambda"]
    if gate.lambda_infinite:
        return MonitorReport(True, 0.0, True, asserted=False)
    if not gate.verdict:
        ratio = float(np.max(lam) / gate.lambda_limit) if len(lam) else 0.0
        return MonitorReport(True, ratio, False, asserted=False)
    ratio = float(np.max(lam) / gate.lambda_limit)
    return MonitorReport(ratio < 1.0, ratio, False, asserted=True)


@dataclass
class PotentialWellReport:
    passed: bool
    source_ratio_posthoc: float
    lambda2: float
    lower_bound_margin: float   # min of bbE - (ell/2) |grad u|^2 over the trace
    source_bound_margin: float  # min of ratio*E - source over the trace
    aux_bound_margin: float     # min of (1+ratio) E0 - bbE over the trace
    tol: float


def potential_well_report(trace, gate: WellPosednessReport, tol_scale=1e-10):
    """Re-assert the well bounds with the observed maximal indicator.

    The interior radius the theory guarantees is not constructive, so the
    gate's ratio uses Lambda(0); here it is recomputed with the observed
    maximum and the source/energy bounds re-checked across the trace.
    """
    E = trace["E"]
    bbE = trace["bbE"]
    lam = trace["Lambda"]
    fcg = trace["f_circ_grad"]
    src = trace["source_term"]
    scale = max(1.0, abs(float(E[0])))
    tol = tol_scale * scale
    # ell * |grad u|^2 recovered from the recorded indicator
    ell_grad2 = lam**2 - fcg
    lower_margin = float(np.min(bbE - 0.5 * ell_grad2))
    if gate.lambda_infinite or not gate.verdict:
        return PotentialWellReport(
            passed=lower_margin >= -tol,
            source_ratio_posthoc=gate.source_ratio,
            lambda2=float(np.max(lam)) if len(lam) else 0.0,
            lower_bound_margin=lower_margin,
            source_bound_margin=float("nan"),
            aux_bound_margin=float("nan"),
            tol=tol,
        )
    lam2 = max(float(np.max(lam)), gate.lambda_initial)
    B = gate.sobolev_p * gate.ell ** (-0.5 * gate.p)
    ratio = source_ratio_from(gate.k_sup, B, gate.p, lam2)
    src_margin = float(np.min(ratio * E - src)) if math.isfinite(ratio) else float("-inf")
    aux_margin = float(np.min((1.0 + ratio) * E[0] - bbE)) if math.isfinite(ratio) else float("-inf")
    passed = (
        lam2 < gate.lambda_limit
        and lower_margin >= -tol
        and src_margin >= -tol
        and aux_margin >= -tol
    )
    return PotentialWellReport(
        passed=bool(passed),
        source_ratio_posthoc=ratio,
        lambda2=lam2,
        lower_bound_margin=lower_margin,
        source_bound_margin=src_margin,
        aux_bound_margin=aux_margin,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# smoothed discrete rates and the monotonicity / dissipation diagnostics
# ---------------------------------------------------------------------------


def moving_average(x, window=5):
    """Centered moving average with truncated ends; window must be odd."""
    x = np.asarray(x, dtype=float)
    half = window // 2
    out = np.empty_like(x)
    for i in range(x.size):
        lo = max(0, i - half)
        hi = min(x.size, i + half + 1)
        out[i] = np.mean(x[lo:hi])
    return out


def smoothed_energy_rate(t, E, window=5):
    """Centered differences of the smoothed energy over the recorded grid.

    Raw forward differences alias the leapfrog oscillation, hence the
    smoothing window before any sign or inequality check.
    """
    t = np.asarray(t, dtype=float)
    Es = moving_average(E, window)
    out = np.empty_like(Es)
    out[1:-1] = (Es[2:] - Es[:-2]) / (t[2:] - t[:-2])
    out[0] = (Es[1] - Es[0]) / (t[1] - t[0])
    out[-1] = (Es[-1] - Es[-2]) / (t[-1] - t[-2])
    return out


@dataclass
class MonotonicityReport:
    passed: bool
    max_increase: float
    tol: float


def energy_monotonicity_report(trace, tol_factor=1e-6, window=5):
    """Smoothed discrete E must be nonincreasing within tol_factor * E(0)."""
    E = trace["E"]
    Es = moving_average(E, window)
    increases = np.diff(Es)
    max_inc = float(np.max(increases)) if increases.size else 0.0
    tol = tol_factor * max(abs(float(E[0])), 1e-300)
    return MonotonicityReport(passed=max_inc <= tol, max_increase=max_inc, tol=tol)


@dataclass
class RateBoundReport:
    passed: bool
    fraction_ok: float
    n_checked: int


def discrepancy_rate_bound_report(trace, min_fraction=0.99, window=5):
    """Check mu(t) <= -2 * smoothed E'(t) + slack at the recorded steps.

    The slack combines a tiny absolute floor with a few percent of the
    local scale; the margin in the underlying inequality is the damping
    dissipation, which dominates both at scheme order.
    """
    t = trace["t"]
    E = trace["E"]
    mu = trace["mu"]
    rate = smoothed_energy_rate(t, E, window)
    scale0 = max(abs(float(E[0])), 1e-300)
    ok = 0
    n = len(t)
    for i in range(n):
        slack = 1e-6 * scale0 + 0.05 * (abs(2.0 * rate[i]) + mu[i])
        if mu[i] <= -2.0 * rate[i] + slack:
            ok += 1
    frac = ok / max(n, 1)
    return RateBoundReport(passed=frac >= min_fraction, fraction_ok=frac, n_checked=n)


# ---------------------------------------------------------------------------
# convexity-based runtime bound
# ---------------------------------------------------------------------------


@dataclass
class JensenReport:
    passed: bool
    fraction_ok: float
    n_checked: int
    n_skipped: int
    n_saturated: int


def jensen_bound_check(trace, kernel, cx: ConvexityData, q, rel_slack=1e-6,
                       psi_floor=1e-14, min_fraction=0.99):
    """Convexity bound on the memory discrepancy along a recorded trace.

    For each recorded time with a usable normalizer gamma, checks
    (f o grad u)(t) <= (1/gamma) Ginv(gamma mu / xi)      for q = 1
    (f o grad u)(t) <= (t/gamma) Ginv(gamma mu / (t xi))  for q > 1
    against the extended modulus inverse, with a small relative slack for
    quadrature rounding.  Times with negligible history spread are skipped.
    """
    t = trace["t"]
    fcg = trace["f_circ_grad"]
    mu = trace["mu"]
    psi_int = trace["psi_int"]
    checked = skipped = saturated = ok = 0
    for i in range(len(t)):
        ti = float(t[i])
        if psi_int[i] < psi_floor or ti <= 0.0:
            skipped += 1
            continue
        xi_t = cx.rate(ti)
        if q == 1.0:
            gamma = 1.0 / psi_int[i]
            arg = gamma * mu[i] / xi_t
            scale = 1.0 / gamma
        else:
            gamma = ti / psi_int[i]
            arg = gamma * mu[i] / (ti * xi_t)
            scale = ti / gamma
        try:
            bound = scale * cx.modulus_ext_inverse(arg)
        except Exception:
            saturated += 1
            continue
        checked += 1
        if fcg[i] <= bound * (1.0 + rel_slack) + 1e-300:
            ok += 1
    frac = ok / checked if checked else 1.0
    return JensenReport(
        passed=frac >= min_fraction,
        fraction_ok=frac,
        n_checked=checked,
        n_skipped=skipped,
        n_saturated=saturated,
    )
