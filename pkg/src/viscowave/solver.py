"""Finite-difference solver for the 1-D viscoelastic wave model.

Flux-form second-order stencil in space, explicit leapfrog in time with
the nonlinear damping treated implicitly through pointwise scalar solves.
The hereditary term is evaluated either by direct trapezoid quadrature
over the stored gradient history or by recursive exponential-mode
accumulators that reproduce the same quadrature exactly for
sum-of-exponentials kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BlowUpDetected,
    ConfigError,
    UnsupportedStrategyError,
)
from .kernels import KernelSpec
from .prony import PronyModes, modes_for_kernel

BLOWUP_CAP = 1e12
CFL_SAFETY = 0.9


@dataclass(frozen=True)
class DampingSpec:
    """Monotone damping h(s) = scale*s for |s|>1, scale*s*|s|**(q-1) for |s|<=1."""

    q: float
    scale: float = 1.0

    def __post_init__(self):
        if self.q < 1.0:
            raise ConfigError("damping exponent q must be >= 1")
        if self.scale <= 0.0:
            raise ConfigError("damping scale must be positive")

    def apply(self, s):
        s = np.asarray(s, dtype=float)
        mag = np.abs(s)
        out = self.scale * np.where(mag <= 1.0, np.sign(s) * mag**self.q, s)
        return out

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        mag = np.abs(s)
        with np.errstate(divide="ignore"):
            inner = np.where(mag < 1.0, self.q * mag ** (self.q - 1.0), 1.0)
        return self.scale * np.where(np.isfinite(inner), inner, 1.0)


@dataclass
class ProblemConfig:
    """Sampled problem data on a uniform grid over (0, length).

    Coefficient arrays live where the stencil reads them: the principal
    and memory coefficients at flux midpoints, the damping and source
    coefficients at nodes.
    """

    length: float
    n_cells: int
    dt: float
    t_end: float
    coeff_A: np.ndarray
    coeff_a: np.ndarray
    coeff_b: np.ndarray
    coeff_k: np.ndarray
    p: float
    damping: DampingSpec
    kernel: KernelSpec | None
    u0: np.ndarray
    v0: np.ndarray
    conv_strategy: str = "direct"
    prony_modes: PronyModes | None = None
    gate_relax: float = 1.0
    label: str = ""

    @property
    def h(self):
        return self.length / self.n_cells

    @property
    def q(self):
        return self.damping.q

    @property
    def lam_min(self):
        return float(np.min(self.coeff_A))

    @property
    def lam_max(self):
        return float(np.max(self.coeff_A))

    @property
    def a_sup(self):
        return float(np.max(self.coeff_a))

    @property
    def k_sup(self):
        return float(np.max(self.coeff_k))

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def node_values_of_a(self):
        mids = np.asarray(self.coeff_a, dtype=float)
        nodes = np.empty(self.n_cells + 1)
        nodes[1:-1] = 0.5 * (mids[1:] + mids[:-1])
        nodes[0] = mids[0]
        nodes[-1] = mids[-1]
        return nodes

    def effective_kernel(self):
        """The kernel the time stepper actually convolves with.

        Direct strategy uses the configured kernel itself; the prony
        strategy uses the exact single mode for shifted-exponential
        kernels or the supplied mode set otherwise, and every energy
        functional of the run is evaluated against the same object so
        that all discrete identities close.
        """
        if self.kernel is None and self.prony_modes is None:
            return None
        if self.conv_strategy == "direct":
            return self.kernel
        if self.conv_strategy == "prony":
            if self.prony_modes is not None:
                return self.prony_modes
            if self.kernel is None:
                return None
            return modes_for_kernel(self.kernel)
        raise ConfigError(f"unknown convolution strategy {self.conv_strategy!r}")

    def to_json(self):
        out = {
            "schema_version": 1,
            "length": self.length,
            "n_cells": self.n_cells,
            "dt": self.dt,
            "t_end": self.t_end,
            "p": self.p,
            "q": self.damping.q,
            "damping_scale": self.damping.scale,
            "conv_strategy": self.conv_strategy,
            "gate_relax": self.gate_relax,
            "label": self.label,
            "A": {"values": [float(v) for v in self.coeff_A]},
            "a": {"values": [float(v) for v in self.coeff_a]},
            "b": {"values": [float(v) for v in self.coeff_b]},
            "k": {"values": [float(v) for v in self.coeff_k]},
            "initial": {
                "u0": [float(v) for v in self.u0],
                "v0": [float(v) for v in self.v0],
            },
            "kernel": None if self.kernel is None else self.kernel.to_json(),
        }
        if self.prony_modes is not None:
            out["prony"] = self.prony_modes.to_json()
        return out


# -- coefficient and initial-data presets for the JSON wire format ----------


def _eval_field(spec, x, length):
    if isinstance(spec, (int, float)):
        return np.full_like(x, float(spec))
    if isinstance(spec, dict) and "values" in spec:
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != x.shape:
            raise ConfigError(
                f"sampled field has {vals.size} values, grid expects {x.size}"
            )
        return vals
    if isinstance(spec, dict) and "preset" in spec:
        name = spec["preset"]
        if name == "constant":
            return np.full_like(x, float(spec.get("value", 1.0)))
        if name == "bump":
            base = float(spec.get("base", 0.0))
            height = float(spec.get("height", 1.0))
            center = float(spec.get("center", 0.5 * length))
            width = float(spec.get("width", 0.1 * length))
            return base + height * np.exp(-(((x - center) / width) ** 2))
        if name == "ramp":
            lo = float(spec.get("lo", 0.0))
            hi = float(spec.get("hi", 1.0))
            return lo + (hi - lo) * x / length
        raise ConfigError(f"unknown coefficient preset {name!r}")
    raise ConfigError(f"cannot interpret coefficient field {spec!r}")


def _eval_initial(spec, x, length):
    if spec is None or spec == "zero":
        return np.zeros_like(x), np.zeros_like(x)
    if isinstance(spec, dict) and "u0" in spec:
        u0 = np.asarray(spec["u0"], dtype=float)
        v0 = np.asarray(spec.get("v0", np.zeros_like(u0)), dtype=float)
        return u0, v0
    if isinstance(spec, dict) and spec.get("preset") == "sine":
        amp = float(spec.get("amplitude", 1.0))
        mode = int(spec.get("mode", 1))
        u0 = amp * np.sin(mode * np.pi * x / length)
        v0 = np.zeros_like(x)
        u0[0] = u0[-1] = 0.0
        return u0, v0
    raise ConfigError(f"cannot interpret initial data {spec!r}")


def config_from_json(obj) -> ProblemConfig:
    try:
        length = float(obj["length"])
        n_cells = int(obj["n_cells"])
    except KeyError as exc:
        raise ConfigError(f"config is missing required field {exc}")
    h = length / n_cells
    x_nodes = np.linspace(0.0, length, n_cells + 1)
    x_mids = 0.5 * (x_nodes[1:] + x_nodes[:-1])
    kernel_obj = obj.get("kernel")
    kernel = None if kernel_obj is None else KernelSpec.from_json(kernel_obj)
    u0, v0 = _eval_initial(obj.get("initial"), x_nodes, length)
    prony = obj.get("prony")
    return ProblemConfig(
        length=length,
        n_cells=n_cells,
        dt=float(obj.get("dt", CFL_SAFETY * h)),
        t_end=float(obj["t_end"]),
        coeff_A=_eval_field(obj.get("A", 1.0), x_mids, length),
        coeff_a=_eval_field(obj.get("a", 1.0), x_mids, length),
        coeff_b=_eval_field(obj.get("b", 1.0), x_nodes, length),
        coeff_k=_eval_field(obj.get("k", 0.0), x_nodes, length),
        p=float(obj.get("p", 3.0)),
        damping=DampingSpec(
            q=float(obj.get("q", 1.0)), scale=float(obj.get("damping_scale", 1.0))
        ),
        kernel=kernel,
        u0=np.asarray(u0, dtype=float),
        v0=np.asarray(v0, dtype=float),
        conv_strategy=obj.get("conv_strategy", "direct"),
        prony_modes=None if prony is None else PronyModes.from_json(prony),
        gate_relax=float(obj.get("gate_relax", 1.0)),
        label=obj.get("label", ""),
    )


# -- structural validation ---------------------------------------------------


@dataclass(frozen=True)
class CflReport:
    ok: bool
    dt: float
    dt_max: float

    def message(self):
        state = "within" if self.ok else "exceeds"
        return f"dt={self.dt:.6g} {state} the stability bound dt_max={self.dt_max:.6g}"


def cfl_check(config: ProblemConfig) -> CflReport:
    """Explicit-scheme stability gate dt <= 0.9 * h / sqrt(max A)."""
    dt_max = CFL_SAFETY * config.h / math.sqrt(config.lam_max)
    return CflReport(ok=config.dt <= dt_max, dt=config.dt, dt_max=dt_max)


def validate_config(config: ProblemConfig) -> list:
    """Collect structural violations; empty list means the config is admissible."""
    problems = []
    if config.n_cells < 16:
        problems.append("n_cells must be at least 16")
    if config.length <= 0.0 or config.dt <= 0.0 or config.t_end <= 0.0:
        problems.append("length, dt and t_end must be positive")
    if config.lam_min <= 0.0:
        problems.append("principal coefficient A must be strictly positive")
    if np.any(config.coeff_a < 0.0):
        problems.append("memory coefficient a must be nonnegative")
    if np.any(config.coeff_b < 0.0):
        problems.append("damping coefficient b must be nonnegative")
    if np.any(config.coeff_k < 0.0):
        problems.append("source coefficient k must be nonnegative")
    a_nodes = config.node_values_of_a()
    if float(np.min(a_nodes + config.coeff_b)) <= 0.0:
        problems.append("a + b must be bounded below by a positive constant")
    if max(config.coeff_a[0], config.coeff_a[-1]) <= 0.0:
        problems.append("a must not vanish identically near the boundary")
    if config.p <= 2.0:
        problems.append("source exponent p must exceed 2")
    for name, arr in (("u0", config.u0), ("v0", config.v0)):
        if arr.shape != (config.n_cells + 1,):
            problems.append(f"{name} must have n_cells+1 nodal values")
        elif arr[0] != 0.0 or arr[-1] != 0.0:
            problems.append(f"{name} must vanish at the boundary nodes")
    cfl = cfl_check(config)
    if not cfl.ok:
        problems.append(cfl.message())
    if config.conv_strategy not in ("direct", "prony"):
        problems.append(f"unknown convolution strategy {config.conv_strategy!r}")
    elif config.conv_strategy == "prony" and config.kernel is not None:
        if config.prony_modes is None and config.kernel.family != "shifted-exponential":
            problems.append(
                "prony strategy needs a shifted-exponential kernel or explicit modes"
            )
    return problems


# -- spatial operators --------------------------------------------------------


def midpoint_gradient(u, h):
    return np.diff(u) / h


def flux_divergence(q_mid, h):
    """Nodal divergence of a midpoint flux; boundary entries are zero."""
    out = np.zeros(q_mid.size + 1)
    out[1:-1] = np.diff(q_mid) / h
    return out


def apply_div_A_grad(u, coeff_mid, h):
    """Flux-form stencil (c_{i+1/2}(u_{i+1}-u_i) - c_{i-1/2}(u_i-u_{i-1})) / h^2."""
    return flux_divergence(coeff_mid * midpoint_gradient(u, h), h)


def trapezoid_weights(n, dt):
    """Composite trapezoid weights for nodes 0..n with spacing dt."""
    if n == 0:
        return np.zeros(1)
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


# -- damping solves -----------------------------------------------------------


def _solve_damping_array(r, c, damping: DampingSpec, tol=1e-13, max_iter=200):
    """Solve v + c*h(v) = r elementwise by safeguarded Newton.

    The map is a strictly increasing bijection for every c >= 0, so the
    root is unique and bracketed by [min(0, r), max(0, r)].  A Newton
    step is taken only while it stays inside the bracket and keeps
    making progress; otherwise the bracket is bisected, which breaks the
    cycles Newton can fall into around the |v| = 1 kink of h.
    """
    r = np.asarray(r, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), r.shape).copy()
    v = r / (1.0 + c * damping.scale)
    if damping.q == 1.0:
        return v  # h is globally linear, the division is the exact solve
    lo = np.minimum(r, 0.0)
    hi = np.maximum(r, 0.0)
    target = tol * (1.0 + np.abs(r))
    dxold = hi - lo
    for _ in range(max_iter):
        fv = v + c * damping.apply(v) - r
        lo = np.where(fv < 0.0, v, lo)
        hi = np.where(fv > 0.0, v, hi)
        if np.all(np.abs(fv) <= target):
            break
        fp = 1.0 + c * damping.slope(v)
        newton = v - fv / fp
        use_newton = (
            (newton > lo)
            & (newton < hi)
            & (np.abs(2.0 * fv) <= np.abs(dxold * fp))
            & np.isfinite(newton)
        )
        dxold = np.where(use_newton, np.abs(fv / fp), 0.5 * (hi - lo))
        v = np.where(use_newton, newton, 0.5 * (lo + hi))
    return v


def solve_damping_pointwise(r, c, damping: DampingSpec):
    """Unique v with v + c*h(v) = r; residual <= 1e-12 * (1 + |r|)."""
    if c < 0.0:
        raise ConfigError("damping weight c must be nonnegative")
    return float(_solve_damping_array(np.array([r]), np.array([c]), damping)[0])


# -- simulation state ---------------------------------------------------------


class SimulationState:
    """Grid solution plus whatever the convolution strategy needs to remember.

    The direct strategy stores every midpoint gradient row; the prony
    strategy stores one vector accumulator per exponential mode.  Both
    keep running unit-kernel accumulators so the gradient-discrepancy
    integrals used by the diagnostics stay O(1) per step.
    """

    def __init__(self, config: ProblemConfig):
        self.config = config
        self.kernel = config.effective_kernel()
        self.strategy = config.conv_strategy
        n = config.n_cells
        self.h = config.h
        self.dt = config.dt
        self.t_index = 0
        self.u = config.u0.astype(float).copy()
        self.u_prev = np.zeros_like(self.u)  # unused until the first step
        self.v = config.v0.astype(float).copy()
        self.g = midpoint_gradient(self.u, self.h)
        self._aw = config.coeff_a * self.h  # weight for the a-inner product
        cap = config.n_steps + 2
        self.e_hist = np.zeros(cap)
        self.e_hist[0] = self.energy_density(self.g)
        self.g_first = self.g.copy()
        self.e_first = self.e_hist[0]
        if self.strategy == "direct" and self.kernel is not None:
            self.g_hist = np.zeros((cap, n))
            self.g_hist[0] = self.g
        else:
            self.g_hist = None
        if self.strategy == "prony" and self.kernel is not None:
            modes = self.kernel
            if not isinstance(modes, PronyModes):
                raise UnsupportedStrategyError(
                    "prony strategy requires an exponential-sum kernel"
                )
            J = modes.amps.size
            self.mode_decay = np.exp(-modes.rates * self.dt)
            self.mode_P = np.tile(self.dt * self.g, (J, 1))
            self.mode_s0 = np.full(J, self.dt)
            self.mode_se = np.full(J, self.dt * self.e_hist[0])
        # unit-kernel accumulators, maintained for every strategy
        self.unit_P = self.dt * self.g.copy()
        self.unit_s0 = self.dt
        self.unit_se = self.dt * self.e_hist[0]
        self.memory_term = np.zeros(n + 1)
        self._sum_cache = {}

    # -- small helpers --------------------------------------------------------

    @property
    def t(self):
        return self.t_index * self.dt

    def energy_density(self, g_mid):
        """Integral of a |grad u|^2 by the midpoint rule."""
        return float(np.dot(self._aw, g_mid * g_mid))

    def inner_a(self, x_mid, y_mid):
        return float(np.dot(self._aw * x_mid, y_mid))

    def grad_norm2(self):
        return float(self.h * np.dot(self.g, self.g))

    # -- kernel-weighted trapezoid sums over the history ----------------------

    def kernel_sums(self, kind):
        """Trapezoid sums sum_m w_m K(t_n - t_m) (g_m, 1, e_m).

        kind selects the weight K: 'value' for f, 'derivative' for f',
        'unit' for the constant 1.  Returns (vector, scalar, scalar).
        """
        n = self.t_index
        key = (kind, n)
        hit = self._sum_cache.get(key)
        if hit is not None:
            return hit
        if kind == "unit":
            if n == 0:
                res = (np.zeros_like(self.g), 0.0, 0.0)
            else:
                half = 0.5 * self.dt
                vec = self.unit_P - half * (self.g_first + self.g)
                res = (
                    vec,
                    self.unit_s0 - 2.0 * half,
                    self.unit_se - half * (self.e_first + self.e_hist[n]),
                )
        elif self.kernel is None:
            res = (np.zeros_like(self.g), 0.0, 0.0)
        elif n == 0:
            res = (np.zeros_like(self.g), 0.0, 0.0)
        elif self.strategy == "prony":
            modes = self.kernel
            coeff = modes.amps if kind == "value" else -modes.amps * modes.rates
            t_n = n * self.dt
            k_tn = float(np.dot(coeff, np.exp(-modes.rates * t_n)))
            k_0 = float(np.sum(coeff))
            half = 0.5 * self.dt
            vec = coeff @ self.mode_P - half * (k_tn * self.g_first + k_0 * self.g)
            A = float(np.dot(coeff, self.mode_s0)) - half * (k_tn + k_0)
            D = float(np.dot(coeff, self.mode_se)) - half * (
                k_tn * self.e_first + k_0 * self.e_hist[n]
            )
            res = (vec, A, D)
        else:
            times = (n - np.arange(n + 1)) * self.dt
            if kind == "value":
                kv = self.kernel.value(times)
            else:
                # the s = 0 endpoint multiplies the vanishing integrand
                # |grad(u(t) - u(t))|^2, so its weight is exactly zero;
                # this also sidesteps kernels with f'(0) unbounded
                kv = np.empty_like(times)
                kv[:-1] = self.kernel.derivative(times[:-1])
                kv[-1] = 0.0
            w = trapezoid_weights(n, self.dt)
            coeffs = w * kv
            vec = coeffs @ self.g_hist[: n + 1]
            A = float(np.sum(coeffs))
            D = float(np.dot(coeffs, self.e_hist[: n + 1]))
            res = (vec, A, D)
        self._sum_cache[key] = res
        return res

    def _advance_history(self, u_next):
        g_next = midpoint_gradient(u_next, self.h)
        e_next = self.energy_density(g_next)
        n1 = self.t_index + 1
        self.e_hist[n1] = e_next
        if self.g_hist is not None:
            self.g_hist[n1] = g_next
        if self.strategy == "prony" and self.kernel is not None:
            self.mode_P *= self.mode_decay[:, None]
            self.mode_P += self.dt * g_next
            self.mode_s0 = self.mode_s0 * self.mode_decay + self.dt
            self.mode_se = self.mode_se * self.mode_decay + self.dt * e_next
        self.unit_P += self.dt * g_next
        self.unit_s0 += self.dt
        self.unit_se += self.dt * e_next
        self.u_prev = self.u
        self.u = u_next
        self.g = g_next
        self.t_index = n1
        self._sum_cache.clear()


def init_state(config: ProblemConfig) -> SimulationState:
    return SimulationState(config)


# -- memory-term evaluators ----------------------------------------------------


def conv_memory_direct(state: SimulationState, kernel, t_n=None) -> np.ndarray:
    """Trapezoid quadrature of the hereditary term against the stored history."""
    n = state.t_index
    if t_n is not None and abs(t_n - n * state.dt) > 1e-12 * max(1.0, t_n):
        raise ConfigError("requested time does not match the state history")
    if kernel is None or n == 0:
        return np.zeros(state.config.n_cells + 1)
    if state.g_hist is None:
        raise ConfigError("direct evaluation requires the stored gradient history")
    times = (n - np.arange(n + 1)) * state.dt
    coeffs = trapezoid_weights(n, state.dt) * kernel.value(times)
    if coeffs.size != n + 1:
        raise ConfigError("history length does not match the step index")
    q_mid = coeffs @ state.g_hist[: n + 1]
    return flux_divergence(state.config.coeff_a * q_mid, state.h)


def conv_memory_prony(state: SimulationState, modes: PronyModes, t_n=None) -> np.ndarray:
    """Recursive evaluation of the hereditary term for exponential-sum kernels.

    Reproduces the direct trapezoid quadrature exactly (up to rounding)
    because the per-mode accumulators are the uniform-weight sums and the
    end-point corrections are applied in closed form.
    """
    if not isinstance(modes, PronyModes):
        raise UnsupportedStrategyError("prony evaluation needs an exponential-sum kernel")
    if state.strategy != "prony":
        raise UnsupportedStrategyError("state was not built with prony accumulators")
    vec, _, _ = state.kernel_sums("value")
    return flux_divergence(state.config.coeff_a * vec, state.h)


def memory_term(state: SimulationState) -> np.ndarray:
    if state.kernel is None:
        return np.zeros(state.config.n_cells + 1)
    if state.strategy == "prony":
        return conv_memory_prony(state, state.kernel)
    return conv_memory_direct(state, state.kernel)


# -- time stepping --------------------------------------------------------------


def _source(config: ProblemConfig, u):
    if config.k_sup == 0.0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = config.coeff_k * np.abs(u) ** (config.p - 2.0) * u
    # |u|^(p-2) u -> 0 with u for every p > 1; guards forced runs with p < 2
    return np.where(u == 0.0, 0.0, out)


def step(state: SimulationState, config: ProblemConfig) -> SimulationState:
    """Advance one leapfrog step; sets state.v to the velocity at the old index.

    The damping is applied through the implicit midpoint velocity: v*
    solves v + (dt/2) b h(v) = r pointwise, which makes v* exactly the
    centered difference (u_next - u_prev) / (2 dt) of the update.
    """
    dt = state.dt
    n = state.t_index
    mem = memory_term(state)
    state.memory_term = mem
    lap = apply_div_A_grad(state.u, config.coeff_A, state.h)
    accel = lap - mem + _source(config, state.u)
    c = 0.5 * dt * config.coeff_b
    if n == 0:
        # second-order start: u1 = u0 + dt * v_half with the damping implicit
        r = state.v + 0.5 * dt * accel
        v_half = _solve_damping_array(r, c, config.damping)
        v_half[0] = v_half[-1] = 0.0
        u_next = state.u + dt * v_half
        v_at_n = state.v.copy()  # the configured initial velocity
    else:
        r = (state.u - state.u_prev) / dt + 0.5 * dt * accel
        v_star = _solve_damping_array(r, c, config.damping)
        v_star[0] = v_star[-1] = 0.0
        u_next = 2.0 * state.u - state.u_prev + dt * dt * (
            accel - config.coeff_b * config.damping.apply(v_star)
        )
        v_at_n = v_star
    u_next[0] = u_next[-1] = 0.0
    if not np.all(np.isfinite(u_next)) or float(np.max(np.abs(u_next))) > BLOWUP_CAP:
        raise BlowUpDetected(n + 1, (n + 1) * dt)
    state.v = v_at_n
    state._advance_history(u_next)
    return state


def run(config: ProblemConfig, record_stride=1, progress=None, skip_validation=False):
    """Evolve the configured problem and record the energy trace.

    The well-posedness gate is evaluated up front and its verdict stored
    in the trace metadata; a blow-up signal truncates the trace and sets
    the corresponding flag instead of raising.  skip_validation runs a
    config that fails the assumption validators anyway (the CFL gate is
    never skipped, the scheme would be unstable).
    """
    from . import energy as energy_mod
    from .trace import EnergyTrace

    if skip_validation:
        if not cfl_check(config).ok:
            raise ConfigError(cfl_check(config).message())
    else:
        problems = validate_config(config)
        if problems:
            raise ConfigError(problems)
    if record_stride < 1:
        raise ConfigError("record_stride must be >= 1")

    gate = energy_mod.wellposedness_gate(config)
    state = init_state(config)
    n_steps = config.n_steps
    recorded = [m for m in range(0, n_steps, record_stride)]
    needed = set()
    for m in recorded:
        needed.update((m - 1, m, m + 1))
    needed = {m for m in needed if 0 <= m <= n_steps - 1}

    pending = {}
    samples = {}
    blown_up = False
    blowup_step = None

    def finalize(idx):
        parts = pending.pop(idx)
        parts.update(energy_mod.velocity_parts(state.config, parts.pop("_u"), parts["_v"]))
        samples[idx] = parts

    try:
        for n in range(n_steps):
            if n in needed:
                parts = energy_mod.static_parts(state, config)
                parts["_u"] = state.u.copy()
                pending[n] = parts
            step(state, config)
            if n in pending:
                pending[n]["_v"] = state.v.copy()
                finalize(n)
            if progress is not None and n % 5000 == 0:
                progress(n, n_steps)
    except BlowUpDetected as sig:
        blown_up = True
        blowup_step = sig.t_index

    rows = []
    for m in recorded:
        if m not in samples:
            continue
        sample = energy_mod.assemble_sample(
            samples, m, config.dt, have_prev=(m - 1 in samples), have_next=(m + 1 in samples)
        )
        rows.append(sample)

    trace = EnergyTrace.from_samples(rows)
    trace.metadata = {
        "schema_version": 1,
        "label": config.label,
        "dt": config.dt,
        "h": config.h,
        "n_cells": config.n_cells,
        "t_end": config.t_end,
        "p": config.p,
        "q": config.damping.q,
        "record_stride": record_stride,
        "conv_strategy": config.conv_strategy,
        "ell": gate.ell,
        "E0": gate.energy0,
        "blown_up": blown_up,
        "blowup_step": blowup_step,
        "gate": gate.to_json(),
    }
    trace.gate = gate
    return trace
