"""Spatial stencil, memory evaluators, damping solves and time stepping."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_config
from viscowave.errors import BlowUpDetected, ConfigError, UnsupportedStrategyError
from viscowave.kernels import KernelSpec
from viscowave.prony import modes_for_kernel
from viscowave.solver import (
    DampingSpec,
    apply_div_A_grad,
    cfl_check,
    config_from_json,
    conv_memory_direct,
    conv_memory_prony,
    init_state,
    run,
    solve_damping_pointwise,
    step,
    trapezoid_weights,
    validate_config,
)

SHIFTED = KernelSpec("shifted-exponential", 0.1, 1.0)


class TestStencil:
    def test_laplacian_of_sine_converges_second_order(self):
        errs = []
        for n in (64, 128, 256):
            h = 1.0 / n
            x = np.linspace(0.0, 1.0, n + 1)
            u = np.sin(np.pi * x)
            u[0] = u[-1] = 0.0
            lap = apply_div_A_grad(u, np.ones(n), h)
            exact = -np.pi**2 * u
            errs.append(float(np.max(np.abs(lap[1:-1] - exact[1:-1]))))
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 1.95

    def test_zero_input(self):
        out = apply_div_A_grad(np.zeros(33), np.ones(32), 1.0 / 32)
        assert np.array_equal(out, np.zeros(33))

    def test_hand_stencil_on_clamped_ramp(self):
        # nodes 0, h, 2h, ... clamped to zero at both ends: the interior
        # second difference is zero except next to the clamped ends
        n = 8
        h = 1.0 / n
        u = np.linspace(0.0, 1.0, n + 1)
        u[0] = u[-1] = 0.0
        out = apply_div_A_grad(u, np.ones(n), h)
        # hand evaluation: (u[i+1] - 2 u[i] + u[i-1]) / h^2
        expected = np.zeros(n + 1)
        for i in range(1, n):
            expected[i] = (u[i + 1] - 2 * u[i] + u[i - 1]) / h**2
        assert np.allclose(out, expected, rtol=0, atol=1e-12)


class TestTrapezoidWeights:
    def test_empty_interval(self):
        assert np.array_equal(trapezoid_weights(0, 0.1), np.zeros(1))

    def test_interior_weights(self):
        w = trapezoid_weights(3, 0.5)
        assert np.allclose(w, [0.25, 0.5, 0.5, 0.25])


class TestMemoryEvaluators:
    def test_zero_at_initial_time(self):
        cfg = make_config(n_cells=32, kernel=SHIFTED, b=1.0)
        state = init_state(cfg)
        assert np.array_equal(conv_memory_direct(state, SHIFTED), np.zeros(33))

    def test_absent_kernel_gives_zero_forever(self):
        cfg = make_config(n_cells=32, kernel=None, b=1.0, t_end=0.5)
        state = init_state(cfg)
        for _ in range(cfg.n_steps):
            step(state, cfg)
            assert np.max(np.abs(state.memory_term)) == 0.0

    def test_two_point_hand_trapezoid(self):
        # constant-in-time hat profile: the kernel-weighted gradient sum is
        # 0.05 (e^{-0.1} + 1) per midpoint, and the divergence of the hat
        # gradient concentrates at the peak node
        n = 32
        cfg = make_config(n_cells=n, kernel=KernelSpec("shifted-exponential", math.e, 1.0),
                          dt=0.1, t_end=1.0)
        # this kernel has f(s) = e * e^{-(1+s)} = e^{-s}
        state = init_state(cfg)
        x = np.linspace(0.0, 1.0, n + 1)
        hat = np.minimum(x, 1.0 - x)
        g_hat = np.diff(hat) / cfg.h
        state.g_hist[0] = g_hat
        state.g_hist[1] = g_hat
        state.g = g_hat
        state.t_index = 1
        state._sum_cache.clear()
        out = conv_memory_direct(state, state.kernel)
        c = 0.05 * (math.exp(-0.1) + 1.0)
        mid = n // 2
        expected_peak = c * (g_hat[mid] - g_hat[mid - 1]) / cfg.h
        assert out[mid] == pytest.approx(expected_peak, rel=1e-12)
        assert expected_peak == pytest.approx(-2.0 * c / cfg.h, rel=1e-12)
        interior = np.delete(out[1:-1], mid - 1)
        assert np.max(np.abs(interior)) < 1e-12

    def test_single_step_prony_matches_direct(self):
        cfg_d = make_config(n_cells=24, kernel=SHIFTED, b=0.3, dt=0.1, t_end=1.0)
        cfg_p = make_config(n_cells=24, kernel=SHIFTED, b=0.3, dt=0.1, t_end=1.0,
                            strategy="prony")
        sd, sp = init_state(cfg_d), init_state(cfg_p)
        step(sd, cfg_d)
        step(sp, cfg_p)
        md = conv_memory_direct(sd, sd.kernel)
        mp = conv_memory_prony(sp, sp.kernel)
        assert np.allclose(md, mp, rtol=1e-12, atol=1e-300)

    def test_200_step_equivalence(self):
        cfg_d = make_config(n_cells=48, kernel=SHIFTED, b=0.5, steps_per_unit=200, t_end=1.0)
        cfg_p = make_config(n_cells=48, kernel=SHIFTED, b=0.5, steps_per_unit=200, t_end=1.0,
                            strategy="prony")
        sd, sp = init_state(cfg_d), init_state(cfg_p)
        worst = 0.0
        for _ in range(200):
            md = conv_memory_direct(sd, sd.kernel)
            mp = conv_memory_prony(sp, sp.kernel)
            scale = max(float(np.max(np.abs(md))), 1e-300)
            worst = max(worst, float(np.max(np.abs(md - mp))) / scale)
            step(sd, cfg_d)
            step(sp, cfg_p)
        assert worst <= 1e-10

    def test_prony_rejects_plain_kernel(self):
        cfg = make_config(n_cells=24, kernel=SHIFTED, dt=0.1, t_end=1.0, strategy="prony")
        state = init_state(cfg)
        with pytest.raises(UnsupportedStrategyError):
            conv_memory_prony(state, SHIFTED)

    def test_prony_strategy_needs_modes_for_other_families(self):
        stretched = KernelSpec("stretched-exponential", 0.2, 0.5)
        cfg = make_config(n_cells=24, kernel=stretched, dt=0.01, t_end=0.1, strategy="prony")
        problems = validate_config(cfg)
        assert any("prony" in msg for msg in problems)


class TestDampingSolve:
    def test_linear_damping_closed_form(self):
        d = DampingSpec(q=1.0, scale=2.0)
        assert solve_damping_pointwise(3.0, 0.5, d) == pytest.approx(3.0 / 2.0, rel=1e-14)

    def test_no_damping(self):
        d = DampingSpec(q=2.0)
        assert solve_damping_pointwise(-1.7, 0.0, d) == -1.7

    def test_quadratic_oracle(self):
        # v + v|v| = 1.5 on (0, 1): v = (-1 + sqrt 7) / 2
        d = DampingSpec(q=2.0, scale=1.0)
        v = solve_damping_pointwise(1.5, 1.0, d)
        assert v == pytest.approx((-1.0 + math.sqrt(7.0)) / 2.0, rel=1e-12)

    def test_random_instances_residual_and_monotone(self):
        rng = np.random.default_rng(283749)
        for _ in range(40):
            q = float(rng.uniform(1.0, 4.0))
            c = float(rng.uniform(0.0, 10.0))
            d = DampingSpec(q=q, scale=float(rng.uniform(0.1, 3.0)))
            r = np.sort(rng.uniform(-20.0, 20.0, 25))
            v = np.array([solve_damping_pointwise(ri, c, d) for ri in r])
            res = np.abs(v + c * d.apply(v) - r)
            assert np.all(res <= 1e-12 * (1.0 + np.abs(r)))
            assert np.all(np.diff(v) >= -1e-14)

    @settings(max_examples=80, deadline=None, derandomize=True)
    @given(
        r=st.floats(-50.0, 50.0),
        c=st.floats(0.0, 20.0),
        q=st.floats(1.0, 5.0),
    )
    def test_residual_contract(self, r, c, q):
        d = DampingSpec(q=q)
        v = solve_damping_pointwise(r, c, d)
        assert abs(v + c * d.apply(v) - r) <= 1e-12 * (1.0 + abs(r))

    @settings(max_examples=100, deadline=None, derandomize=True)
    @given(s=st.floats(-3.0, 3.0), q=st.floats(1.0, 4.0), scale=st.floats(0.1, 5.0))
    def test_damping_envelope(self, s, q, scale):
        # the canonical h realizes the two-sided growth envelope with all
        # four constants equal to the scale
        d = DampingSpec(q=q, scale=scale)
        h = float(d.apply(s))
        assert h * s >= 0.0
        if abs(s) > 1.0:
            assert scale * abs(s) - 1e-12 <= abs(h) <= scale * abs(s) + 1e-12
        elif s != 0.0:
            assert scale * abs(s) ** q <= abs(h) * (1.0 + 1e-12)
            assert abs(h) <= scale * abs(s) ** (1.0 / q) * (1.0 + 1e-12)


class TestCfl:
    def test_bound_values(self):
        cfg = make_config(n_cells=100, dt=0.001)
        assert cfl_check(cfg).dt_max == pytest.approx(0.9 * 0.01, rel=1e-14)
        cfg4 = make_config(n_cells=100, dt=0.001)
        cfg4.coeff_A = 4.0 * np.ones(100)
        assert cfl_check(cfg4).dt_max == pytest.approx(0.0045, rel=1e-14)

    def test_rejection(self):
        cfg = make_config(n_cells=64, dt=0.5)
        report = cfl_check(cfg)
        assert not report.ok
        assert "exceeds" in report.message()
        assert any("stability" in p for p in validate_config(cfg))


class TestStepAndRun:
    def test_standing_wave_convergence(self):
        errs = []
        for n, spu in ((64, 160), (128, 320), (256, 640)):
            cfg = make_config(n_cells=n, steps_per_unit=spu, t_end=0.9)
            state = init_state(cfg)
            for _ in range(cfg.n_steps):
                step(state, cfg)
            x = np.linspace(0.0, 1.0, n + 1)
            exact = np.sin(np.pi * x) * math.cos(math.pi * state.t)
            errs.append(math.sqrt(cfg.h * float(np.dot(state.u - exact, state.u - exact))))
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 1.9

    def test_zero_data_stays_zero(self):
        cfg = make_config(n_cells=32, kernel=SHIFTED, b=1.0, k=1.0, amplitude=0.0,
                          t_end=0.5)
        trace = run(cfg, record_stride=4)
        assert np.max(np.abs(trace["E"])) == 0.0
        assert np.max(np.abs(trace["l2_u"])) == 0.0

    def test_boundary_nodes_exactly_zero(self):
        cfg = make_config(n_cells=48, kernel=SHIFTED, b=1.0, k=0.01, t_end=1.0)
        state = init_state(cfg)
        for _ in range(cfg.n_steps):
            step(state, cfg)
            assert state.u[0] == 0.0 and state.u[-1] == 0.0

    def test_blowup_signal_fires(self):
        n = 64
        cfg = make_config(n_cells=n, k=1.0, p=4.0, amplitude=20.0, t_end=3.0)
        state = init_state(cfg)
        with pytest.raises(BlowUpDetected) as info:
            for _ in range(cfg.n_steps):
                step(state, cfg)
        assert info.value.t_index > 0

    def test_run_flags_blowup_instead_of_raising(self):
        cfg = make_config(n_cells=64, k=1.0, p=4.0, amplitude=20.0, t_end=3.0)
        trace = run(cfg, record_stride=5)
        assert trace.metadata["blown_up"]
        assert trace.metadata["blowup_step"] > 0
        assert len(trace) >= 1

    def test_determinism_bit_identical(self, tmp_path):
        cfg = make_config(n_cells=64, kernel=SHIFTED, b=1.0, k=0.01, t_end=2.0,
                          strategy="prony")
        run(cfg, record_stride=10).write_csv(tmp_path / "a.csv")
        run(cfg, record_stride=10).write_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestConfigValidation:
    def test_clean_config(self):
        assert validate_config(make_config(kernel=SHIFTED, b=1.0)) == []

    def test_violations_are_listed(self):
        cfg = make_config(n_cells=32, kernel=SHIFTED, b=0.0, a=0.0, p=1.5)
        problems = validate_config(cfg)
        assert any("a + b" in m for m in problems)
        assert any("exponent p" in m for m in problems)
        assert any("boundary" in m for m in problems)

    def test_nonzero_boundary_data_rejected(self):
        cfg = make_config(n_cells=32)
        cfg.u0 = cfg.u0 + 0.1
        assert any("vanish at the boundary" in m for m in validate_config(cfg))

    def test_run_raises_config_error(self):
        cfg = make_config(n_cells=32, dt=1.0)
        with pytest.raises(ConfigError):
            run(cfg)

    def test_json_round_trip(self):
        cfg = make_config(n_cells=32, kernel=SHIFTED, b=0.7, k=0.02, q=2.0,
                          strategy="prony")
        again = config_from_json(cfg.to_json())
        assert again.n_cells == cfg.n_cells
        assert again.damping == cfg.damping
        assert again.kernel == cfg.kernel
        assert np.array_equal(again.u0, cfg.u0)
        assert np.array_equal(again.coeff_k, cfg.coeff_k)
        assert again.conv_strategy == "prony"

    def test_coefficient_presets(self):
        obj = {
            "length": 1.0,
            "n_cells": 32,
            "t_end": 1.0,
            "dt": 0.01,
            "A": {"preset": "constant", "value": 2.0},
            "a": {"preset": "bump", "base": 0.5, "height": 1.0},
            "b": {"preset": "ramp", "lo": 0.0, "hi": 1.0},
            "k": 0.0,
            "initial": {"preset": "sine", "amplitude": 0.3},
        }
        cfg = config_from_json(obj)
        assert cfg.lam_min == 2.0
        assert cfg.coeff_b[0] == 0.0 and cfg.coeff_b[-1] == pytest.approx(1.0)
        assert np.max(cfg.coeff_a) <= 1.5 + 1e-12
