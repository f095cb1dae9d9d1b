"""Exponential-sum kernels and their certified fits."""

import math

import numpy as np
import pytest

from viscowave.errors import UnsupportedStrategyError
from viscowave.kernels import KernelSpec
from viscowave.prony import PronyModes, fit_exponential_sum, modes_for_kernel


def test_exact_single_mode_matches_kernel():
    kernel = KernelSpec("shifted-exponential", 0.1, 1.0)
    modes = modes_for_kernel(kernel)
    assert modes.amps.size == 1
    ts = np.linspace(0.0, 30.0, 50)
    assert np.allclose(modes.value(ts), kernel.value(ts), rtol=1e-14)
    assert np.allclose(modes.derivative(ts), kernel.derivative(ts), rtol=1e-14)
    assert modes.total_mass == pytest.approx(kernel.total_mass, rel=1e-14)
    assert modes.tail_integral(5.0) == pytest.approx(kernel.tail_integral(5.0), rel=1e-14)


def test_partial_mass_closed_form():
    modes = PronyModes(amps=np.array([0.3, 0.2]), rates=np.array([1.0, 4.0]))
    t = 2.5
    expected = 0.3 * (1 - math.exp(-t)) / 1.0 + 0.2 * (1 - math.exp(-4 * t)) / 4.0
    assert modes.partial_mass(t) == pytest.approx(expected, rel=1e-14)
    assert modes.partial_mass(t) + modes.tail_integral(t) == pytest.approx(
        modes.total_mass, rel=1e-14
    )


def test_no_exact_form_for_other_families():
    with pytest.raises(UnsupportedStrategyError):
        modes_for_kernel(KernelSpec("stretched-exponential", 0.2, 0.5))


@pytest.mark.parametrize(
    "kernel",
    [KernelSpec("stretched-exponential", 0.2, 0.5), KernelSpec("power-law", 0.05, 2.0)],
    ids=["stretched", "power"],
)
def test_fitted_sum_is_certified(kernel):
    modes = fit_exponential_sum(kernel, t_max=150.0, t_min=1e-3)
    assert np.all(modes.amps > 0.0)
    assert np.all(modes.rates > 0.0)
    assert modes.fit_error <= 5e-5
    # spot-check beyond the certification grid resolution
    ts = np.geomspace(2e-3, 149.0, 777)
    rel = np.abs(modes.value(ts) - kernel.value(ts)) / kernel.value(ts)
    assert float(np.max(rel)) <= 1e-4
    assert modes.total_mass == pytest.approx(kernel.total_mass, rel=5e-3)


def test_fit_is_deterministic():
    kernel = KernelSpec("power-law", 0.05, 2.0)
    a = fit_exponential_sum(kernel, t_max=50.0, t_min=1e-3)
    b = fit_exponential_sum(kernel, t_max=50.0, t_min=1e-3)
    assert np.array_equal(a.amps, b.amps)
    assert np.array_equal(a.rates, b.rates)


def test_positive_mode_validation():
    with pytest.raises(ValueError):
        PronyModes(amps=np.array([1.0, -0.1]), rates=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        PronyModes(amps=np.array([1.0]), rates=np.array([1.0, 2.0]))


def test_json_round_trip():
    modes = PronyModes(amps=np.array([0.5, 0.1]), rates=np.array([2.0, 0.3]), fit_error=1e-6)
    again = PronyModes.from_json(modes.to_json())
    assert np.array_equal(again.amps, modes.amps)
    assert np.array_equal(again.rates, modes.rates)
    assert again.fit_error == modes.fit_error
