import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cold.pulses import (
    BarePulse,
    CrabPulse,
    GrapePulse,
    pulse_from_spec,
    randomize_crab,
    shape,
    shape_derivative,
    split_params,
    zero_like,
)

coeff_lists = st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=8)


def make(kind, coeffs, offsets=None):
    if kind == "bare-full":
        return BarePulse(coeffs)
    if kind == "bare-half":
        return BarePulse(coeffs, mode="half")
    if kind == "crab":
        return CrabPulse(coeffs, tuple(offsets or [0.17] * len(coeffs)))
    return GrapePulse(coeffs)


KINDS = ["bare-full", "bare-half", "crab", "grape"]
INTERIOR = np.linspace(0.02, 0.98, 97)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(KINDS), coeff_lists)
def test_every_pulse_vanishes_at_both_ends(kind, coeffs):
    p = make(kind, coeffs)
    assert abs(p.value(0.0)) < 1e-12
    assert abs(p.value(1.0)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(KINDS), coeff_lists)
def test_pulses_are_linear_in_coefficients(kind, coeffs):
    p = make(kind, coeffs)
    doubled = p.with_coeffs(2 * np.asarray(coeffs))
    lam = np.linspace(0, 1, 41)
    np.testing.assert_allclose(doubled.value(lam), 2 * p.value(lam), atol=1e-12)
    np.testing.assert_allclose(doubled.derivative(lam), 2 * p.derivative(lam), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(KINDS), coeff_lists)
def test_derivative_matches_finite_differences(kind, coeffs):
    p = make(kind, coeffs)
    h = 1e-6
    fd = (p.value(INTERIOR + h) - p.value(INTERIOR - h)) / (2 * h)
    scale = max(1.0, np.abs(coeffs).max())
    np.testing.assert_allclose(p.derivative(INTERIOR), fd, atol=1e-6 * scale * 100)


def test_bare_pulse_values():
    p = BarePulse((1.0, -0.5))
    lam = np.array([0.125, 0.25, 0.6])
    want = np.sin(2 * np.pi * lam) - 0.5 * np.sin(4 * np.pi * lam)
    np.testing.assert_allclose(p.value(lam), want, atol=1e-15)
    half = BarePulse((1.0,), mode="half")
    assert half.value(0.5) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(coeff_lists)
def test_crab_without_offsets_equals_full_bare(coeffs):
    lam = np.linspace(0, 1, 51)
    crab = CrabPulse(coeffs, (0.0,) * len(coeffs))
    bare = BarePulse(coeffs)
    np.testing.assert_allclose(crab.value(lam), bare.value(lam), atol=1e-12)
    np.testing.assert_allclose(crab.derivative(lam), bare.derivative(lam), atol=1e-10)


def test_randomize_crab_is_deterministic_and_supported():
    template = BarePulse((0.0,) * 6)
    a = randomize_crab(template, 1234)
    b = randomize_crab(template, 1234)
    c = randomize_crab(template, 1235)
    assert a.offsets == b.offsets
    assert a.offsets != c.offsets
    assert all(abs(r) <= 0.5 for r in a.offsets)


def test_randomize_crab_offsets_are_centred():
    draws = randomize_crab(BarePulse((0.0,) * 100_000), 99).offsets
    assert abs(np.mean(draws)) < 0.01
    assert max(abs(r) for r in draws) <= 0.5


def test_shape_values():
    assert shape(0.0, 30) == 0.0
    assert shape(1.0, 30) == pytest.approx(0.0, abs=1e-15)
    assert shape(0.5, 30) == pytest.approx(1.0, abs=1e-9)


def test_shape_derivative_matches_finite_differences():
    h = 1e-6
    fd = (shape(INTERIOR + h) - shape(INTERIOR - h)) / (2 * h)
    np.testing.assert_allclose(shape_derivative(INTERIOR), fd, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=10))
def test_grape_spline_hits_midpoints(coeffs):
    p = GrapePulse(coeffs)
    np.testing.assert_allclose(p.amplitude(p.knots), coeffs, atol=1e-12)


def test_single_slice_sharp_grape_is_flat():
    p = GrapePulse((2.5,), kappa=300.0)
    lam = np.linspace(0.1, 0.9, 81)
    assert np.max(np.abs(p.value(lam) - 2.5)) < 1e-3


def test_grape_derivative_against_splined_waveform():
    p = GrapePulse((1.0, -3.0, 0.5, 2.0, -1.0, 4.0))
    h = 1e-6
    fd = (p.value(INTERIOR + h) - p.value(INTERIOR - h)) / (2 * h)
    assert np.max(np.abs(p.derivative(INTERIOR) - fd)) < 1e-6


def test_pulse_domain_checked():
    with pytest.raises(ValueError):
        BarePulse((1.0,)).value(1.1)
    with pytest.raises(ValueError):
        GrapePulse((1.0, 2.0)).derivative(-0.2)


def test_split_params_and_helpers():
    templates = (BarePulse((0.0, 0.0)), GrapePulse((0.0, 0.0, 0.0)))
    a, b = split_params(templates, [1, 2, 3, 4, 5])
    assert a.coeffs == (1.0, 2.0) and b.coeffs == (3.0, 4.0, 5.0)
    with pytest.raises(ValueError):
        split_params(templates, [1, 2])
    assert zero_like(b).coeffs == (0.0, 0.0, 0.0)
    assert isinstance(pulse_from_spec("crab", 3, seed=5), CrabPulse)
    with pytest.raises(ValueError):
        pulse_from_spec("sawtooth", 2)
