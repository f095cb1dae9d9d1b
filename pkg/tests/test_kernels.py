"""Kernel families, analytic derived quantities and the decay maps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscowave.errors import (
    KernelError,
    NonIntegrableTailError,
    SingularDerivativeError,
)
from viscowave.kernels import (
    ConvexityData,
    KernelSpec,
    analyze_kernel,
    canonical_convexity,
    check_domination,
    extend_modulus,
    log_slope_shifted,
    modulus_integral,
    modulus_integral_inverse,
    modulus_slope_map,
    modulus_slope_map_inverse,
    predicted_envelope,
    residual_stiffness,
    smallness_profile,
    validate_convexity,
    validate_kernel,
    weighted_mass,
)

SHIFTED = KernelSpec("shifted-exponential", 0.1, 1.0)
STRETCHED = KernelSpec("stretched-exponential", 0.2, 0.5)
POWER = KernelSpec("power-law", 0.05, 2.0)
FAMILIES = (SHIFTED, STRETCHED, POWER)


class TestEvaluation:
    def test_shifted_value_at_zero(self):
        assert SHIFTED.value(0.0) == pytest.approx(0.1 * math.exp(-1.0), rel=1e-14)

    def test_power_value_at_zero(self):
        assert POWER.value(0.0) == 0.05

    def test_stretched_value(self):
        assert STRETCHED.value(4.0) == pytest.approx(0.2 * math.exp(-2.0), rel=1e-14)

    def test_negative_argument_rejected(self):
        with pytest.raises(KernelError):
            SHIFTED.value(-0.5)

    def test_shifted_derivative(self):
        assert SHIFTED.derivative(0.0) == pytest.approx(-0.1 * math.exp(-1.0), rel=1e-14)

    def test_power_derivative_at_zero(self):
        assert POWER.derivative(0.0) == pytest.approx(-0.1, rel=1e-14)

    def test_stretched_derivative_singular_at_zero(self):
        with pytest.raises(SingularDerivativeError):
            STRETCHED.derivative(0.0)

    @pytest.mark.parametrize("kernel", FAMILIES, ids=lambda k: k.family)
    def test_derivative_nonpositive(self, kernel):
        grid = np.geomspace(1e-4, 40.0, 100)
        assert np.all(kernel.derivative(grid) <= 0.0)

    @pytest.mark.parametrize("kernel", FAMILIES, ids=lambda k: k.family)
    def test_derivative_matches_central_differences(self, kernel):
        for t in (0.3, 1.7, 6.0):
            eps = 1e-6 * max(t, 1.0)
            fd = (kernel.value(t + eps) - kernel.value(t - eps)) / (2.0 * eps)
            assert kernel.derivative(t) == pytest.approx(fd, rel=1e-6)

    def test_family_parameter_validation(self):
        with pytest.raises(KernelError):
            KernelSpec("shifted-exponential", -1.0, 1.0)
        with pytest.raises(KernelError):
            KernelSpec("stretched-exponential", 0.2, 1.5)
        with pytest.raises(KernelError):
            KernelSpec("nope", 1.0, 1.0)


class TestTailIntegral:
    def test_shifted_closed_form(self):
        assert SHIFTED.tail_integral(0.0) == pytest.approx(0.1 * math.exp(-1.0), rel=1e-14)

    def test_power_closed_form(self):
        assert POWER.tail_integral(0.0) == pytest.approx(0.05, rel=1e-14)

    def test_stretched_mass(self):
        # substitution gives mass alpha * Gamma(1 + 1/beta)
        assert STRETCHED.total_mass == pytest.approx(0.2 * math.gamma(3.0), rel=1e-12)

    @pytest.mark.parametrize("kernel", FAMILIES, ids=lambda k: k.family)
    def test_tail_vanishes(self, kernel):
        assert kernel.tail_integral(500.0) < kernel.tail_integral(1.0)
        assert kernel.tail_integral(2000.0) < 1e-3 * kernel.total_mass

    @pytest.mark.parametrize("kernel", FAMILIES, ids=lambda k: k.family)
    def test_tail_derivative_is_minus_f(self, kernel):
        for t in (0.5, 2.0, 10.0):
            eps = 1e-4
            fd = (kernel.tail_integral(t + eps) - kernel.tail_integral(t - eps)) / (2 * eps)
            assert fd == pytest.approx(-kernel.value(t), abs=1e-8, rel=1e-6)

    def test_power_nonintegrable_tail(self):
        bad = KernelSpec("power-law", 0.05, 0.5)
        with pytest.raises(NonIntegrableTailError):
            bad.total_mass


class TestResidualStiffness:
    def test_shifted_example(self):
        assert residual_stiffness(SHIFTED, 1.0, 1.0) == pytest.approx(
            1.0 - 0.1 * math.exp(-1.0), rel=1e-12
        )

    def test_no_memory_coupling(self):
        assert residual_stiffness(SHIFTED, 0.0, 2.5) == 2.5
        assert residual_stiffness(None, 1.0, 2.5) == 2.5

    def test_power_example(self):
        assert residual_stiffness(POWER, 2.0, 1.0) == pytest.approx(0.9, rel=1e-12)


class TestLogSlope:
    def test_shifted_constant(self):
        for s in (0.0, 1.3, 9.0):
            assert log_slope_shifted(SHIFTED, 0.1, s) == pytest.approx(1.1, rel=1e-12)

    def test_power_values(self):
        assert log_slope_shifted(POWER, 0.1, 0.0) == pytest.approx(2.1, rel=1e-12)
        assert log_slope_shifted(POWER, 0.1, 9.0) == pytest.approx(0.3, rel=1e-12)

    def test_delta_domain(self):
        with pytest.raises(KernelError):
            log_slope_shifted(SHIFTED, 1.5, 0.0)

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(
        delta=st.floats(1e-4, 0.99),
        s=st.floats(1e-3, 50.0),
        pick=st.integers(0, 2),
    )
    def test_always_at_least_delta(self, delta, s, pick):
        kernel = FAMILIES[pick]
        assert log_slope_shifted(kernel, delta, s) >= delta


class TestWeightedMass:
    def test_shifted_closed_form(self):
        for delta in (0.1, 0.01):
            expected = SHIFTED.total_mass / (SHIFTED.beta + delta)
            assert weighted_mass(SHIFTED, delta) == pytest.approx(expected, rel=1e-8)

    def test_power_closed_form(self):
        # beta = 2: integral reduces to (alpha/2) log((2 + delta)/delta)
        for delta in (0.5, 0.01):
            expected = 0.5 * POWER.alpha * math.log((2.0 + delta) / delta)
            assert weighted_mass(POWER, delta) == pytest.approx(expected, rel=1e-8)

    def test_bounded_by_mass_over_delta(self):
        assert weighted_mass(POWER, 0.5) <= POWER.total_mass / 0.5

    @pytest.mark.parametrize("kernel", FAMILIES, ids=lambda k: k.family)
    def test_smallness_profile_decreasing(self, kernel):
        rows = smallness_profile(kernel)
        dm = [row[2] for row in rows]
        assert all(dm[i + 1] < dm[i] for i in range(len(dm) - 1))
        assert dm[-1] < 0.05 * dm[0]


class TestConvexityData:
    def test_canonical_triples_dominate(self):
        grid = np.geomspace(1e-3, 50.0, 300)
        for kernel in FAMILIES:
            cx = canonical_convexity(kernel)
            report = check_domination(kernel, cx, grid, tol=1e-10)
            assert report.passed, (kernel.family, report.max_violation)

    def test_linear_triple_is_exact(self):
        cx = canonical_convexity(SHIFTED)
        grid = np.geomspace(1e-3, 50.0, 100)
        report = check_domination(SHIFTED, cx, grid, tol=0.0)
        assert report.max_violation == pytest.approx(0.0, abs=1e-15)

    def test_constructed_failure(self):
        cx = ConvexityData(
            rate=lambda t: 1e6,
            modulus=lambda t: t**2,
            modulus_prime=lambda t: 2 * t,
            modulus_second=lambda t: 2.0,
            f0=SHIFTED.value0,
        )
        report = check_domination(SHIFTED, cx, np.array([0.1, 1.0]), tol=1e-10)
        assert not report.passed
        assert report.max_violation > 0.0

    def test_grid_validation(self):
        for kernel in FAMILIES:
            assert validate_convexity(canonical_convexity(kernel)).passed


class TestExtension:
    def test_linear_modulus_extends_to_identity(self):
        cx = canonical_convexity(SHIFTED)
        for t in (0.05, 0.4, 3.0):
            assert cx.modulus_ext(t) == pytest.approx(t, rel=1e-14)

    def test_quadratic_reproduces_itself(self):
        cx = ConvexityData(
            rate=lambda t: 1.0,
            modulus=lambda t: t**2,
            modulus_prime=lambda t: 2 * t,
            modulus_second=lambda t: 2.0,
            f0=1.0,
        )
        assert cx.extension_coeffs == (1.0, 2.0, 2.0)
        for t in (1.5, 2.0, 7.0):
            assert extend_modulus(cx, t) == pytest.approx(t**2, rel=1e-14)

    def test_continuity_at_f0(self):
        for kernel in FAMILIES:
            cx = canonical_convexity(kernel)
            below = cx.modulus_ext(cx.f0)
            if not math.isfinite(below):
                continue  # modulus exhausts [0, inf) on its own, no extension
            above = cx.modulus_ext(cx.f0 * (1.0 + 1e-12))
            assert above == pytest.approx(below, rel=1e-9, abs=1e-14)


class TestModulusIntegral:
    def test_linear_closed_form(self):
        cx = canonical_convexity(SHIFTED)
        f0 = cx.f0
        for t in (0.9 * f0, 0.3 * f0, 1e-4 * f0):
            assert modulus_integral(cx, t) == pytest.approx(math.log(f0 / t), rel=1e-9)

    def test_zero_at_upper_end(self):
        cx = canonical_convexity(SHIFTED)
        assert modulus_integral(cx, cx.f0) == 0.0

    def test_inverse_round_trip(self):
        for kernel in FAMILIES:
            cx = canonical_convexity(kernel)
            for y in (0.0, 0.3, 2.0, 10.0):
                t, saturated = modulus_integral_inverse(cx, y)
                assert not saturated
                assert abs(modulus_integral(cx, t) - y) <= 1e-9 * (1.0 + y)

    def test_saturation_flag(self):
        cx = canonical_convexity(SHIFTED)
        _, saturated = modulus_integral_inverse(cx, 1e6)
        assert saturated

    def test_strictly_decreasing(self):
        cx = canonical_convexity(STRETCHED)
        ts = np.geomspace(1e-4 * cx.f0, cx.f0, 12)
        vals = [modulus_integral(cx, t) for t in ts]
        assert all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))


class TestModulusSlopeMap:
    def test_linear_is_identity(self):
        cx = canonical_convexity(SHIFTED)
        for t in (0.0, 0.01, 5.0):
            assert modulus_slope_map(cx, 1.0, t) == pytest.approx(t, rel=1e-14)
            assert modulus_slope_map_inverse(cx, 1.0, t) == pytest.approx(t, rel=1e-9, abs=1e-12)

    def test_power_rule(self):
        cx = ConvexityData(
            rate=lambda t: 1.0,
            modulus=lambda t: t**1.5,
            modulus_prime=lambda t: 1.5 * t**0.5,
            modulus_second=lambda t: 0.75 * t**-0.5,
            f0=1.0,
        )
        assert modulus_slope_map(cx, 1.0, 0.25) == pytest.approx(1.5 * 0.25**1.5, rel=1e-12)
        y = 0.5
        assert modulus_slope_map_inverse(cx, 1.0, y) == pytest.approx(
            (2.0 * y / 3.0) ** (2.0 / 3.0), rel=1e-9
        )

    @settings(max_examples=40, deadline=None, derandomize=True)
    @given(t1=st.floats(1e-6, 10.0), t2=st.floats(1e-6, 10.0))
    def test_strictly_increasing(self, t1, t2):
        if t1 == t2:
            return
        cx = canonical_convexity(POWER)
        lo, hi = sorted((t1, t2))
        assert modulus_slope_map(cx, 0.5, lo) < modulus_slope_map(cx, 0.5, hi)


class TestPredictedEnvelope:
    def test_linear_modulus_gives_exponential_shape(self):
        cx = canonical_convexity(SHIFTED)
        env = predicted_envelope(SHIFTED, cx, 1.0, {"k1": 0.4, "eps1": 1.0, "t0": 1.0})
        beta = SHIFTED.beta
        ts = np.linspace(1.0, 12.0, 30)
        vals = np.array([env.evaluate(t) for t in ts])
        expected = cx.f0 * np.exp(-0.4 * beta * (ts - 1.0))
        assert np.allclose(vals, expected, rtol=1e-7)

    def test_polynomial_form(self):
        env = predicted_envelope(SHIFTED, None, 2.0, {"C": 3.0, "E0": 2.0}, refined=False)
        for t in (0.0, 1.0, 7.0):
            assert env.evaluate(t) == pytest.approx(6.0 * (1.0 + t) ** (-2.0 / 3.0), rel=1e-14)

    def test_q_below_one_rejected(self):
        with pytest.raises(KernelError):
            predicted_envelope(SHIFTED, None, 0.5, {}, refined=False)

    def test_stretched_envelope_dominated_by_closed_form(self):
        # the linear-in-log bound on the integral map transfers to the
        # envelope: value(t) <= (alpha/eps1) exp(-(k1 (t - t0))**beta)
        cx = canonical_convexity(STRETCHED)
        k1, t0 = 0.7, 0.5
        env = predicted_envelope(STRETCHED, cx, 1.0, {"k1": k1, "eps1": 1.0, "t0": t0})
        alpha, beta = STRETCHED.alpha, STRETCHED.beta
        for t in np.linspace(1.0, 40.0, 25):
            bound = alpha * math.exp(-((k1 * (t - t0)) ** beta))
            assert env.evaluate(t) <= bound * (1.0 + 1e-6)

    def test_refined_envelope_monotone(self):
        cx = canonical_convexity(POWER)
        env = predicted_envelope(POWER, cx, 2.0, {"k2": 1.0, "eps1": 0.5, "t0": 1.0, "E0": 1.0})
        env.check_shape(2.0, 80.0)


class TestTabulated:
    def _samples(self):
        ts = np.concatenate(([0.0], np.geomspace(0.05, 20.0, 80)))
        return np.column_stack([ts, SHIFTED.value(ts)])

    def test_values_interpolate(self):
        tab = KernelSpec("tabulated", samples=self._samples())
        assert tab.value(0.0) == pytest.approx(SHIFTED.value0, rel=1e-12)
        assert tab.value(1.234) == pytest.approx(SHIFTED.value(1.234), rel=2e-3)

    def test_monotonicity_enforced_at_load(self):
        bad = np.array([[0.0, 1.0], [1.0, 0.5], [2.0, 0.7]])
        with pytest.raises(KernelError):
            KernelSpec("tabulated", samples=bad)

    def test_derivative_nonpositive(self):
        tab = KernelSpec("tabulated", samples=self._samples())
        grid = np.linspace(0.0, 25.0, 60)
        assert np.all(tab.derivative(grid) <= 0.0)

    def test_tail_integral_close_to_closed_form(self):
        tab = KernelSpec("tabulated", samples=self._samples())
        assert tab.total_mass == pytest.approx(SHIFTED.total_mass, rel=2e-2)
        assert tab.tail_integral(30.0) > 0.0

    def test_weighted_mass_runs(self):
        tab = KernelSpec("tabulated", samples=self._samples())
        m = weighted_mass(tab, 0.1)
        assert m == pytest.approx(weighted_mass(SHIFTED, 0.1), rel=5e-2)


class TestAnalysisRecord:
    def test_validate_and_analyze(self):
        for kernel in FAMILIES:
            assert validate_kernel(kernel).passed
        analysis = analyze_kernel(SHIFTED, a_sup=1.0, lambda0=1.0, deltas=(0.1,))
        assert analysis.ell == pytest.approx(1.0 - 0.1 * math.exp(-1.0), rel=1e-10)
        assert analysis.f0 == pytest.approx(SHIFTED.value0)
        F_vals = [v for _, v in analysis.F_table]
        assert all(F_vals[i] >= F_vals[i + 1] for i in range(len(F_vals) - 1))
        assert analysis.F_table[0][1] == pytest.approx(analysis.total_mass)

    def test_json_round_trip(self):
        for kernel in FAMILIES:
            again = KernelSpec.from_json(kernel.to_json())
            assert again == kernel
        tab = KernelSpec(
            "tabulated", samples=np.array([[0.0, 1.0], [1.0, 0.5], [2.0, 0.25]])
        )
        again = KernelSpec.from_json(tab.to_json())
        assert np.array_equal(again.samples, tab.samples)
