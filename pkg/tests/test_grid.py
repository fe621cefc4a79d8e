import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lphodge.grid import (
    DataError, GridFunction, GridSpec, ParameterError, SpectralField, circular_convolve, forward_transform,
    get_threads, inverse_transform, lp_norm, set_threads, spectral_derivative,
)

from conftest import bandlimited


def random_field(spec, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(spec, rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape))


@pytest.mark.parametrize("kw", [dict(d=0, n=8), dict(d=2, n=12), dict(d=2, n=2), dict(d=1, n=8, period=0.0)])
def test_gridspec_rejects_bad_parameters(kw):
    with pytest.raises(ParameterError):
        GridSpec(**kw)


def test_gridspec_spacing():
    s = GridSpec(3, 16, period=4.0)
    assert s.h == 0.25 and s.shape == (16, 16, 16)


def test_gridfunction_rejects_nonfinite_and_bad_shape():
    s = GridSpec(1, 8)
    bad = np.zeros(8)
    bad[3] = np.nan
    with pytest.raises(DataError):
        GridFunction(s, bad)
    with pytest.raises((DataError, ParameterError)):
        GridFunction(s, np.zeros(7))


def test_constant_maps_to_mean_coefficient():
    s = GridSpec(2, 8)
    F = forward_transform(GridFunction(s, np.full(s.shape, 2.5 - 1j)))
    assert F.coefficient((0, 0)) == pytest.approx(2.5 - 1j, abs=1e-15)
    c = F.coefficients.copy()
    c.flat[0] = 0
    assert np.max(np.abs(c)) < 1e-15


def test_pure_mode_has_one_coefficient():
    s = GridSpec(2, 16)
    x = s.coordinates()
    F = forward_transform(GridFunction(s, np.exp(1j * x[0]) * np.ones(s.shape)))
    assert F.coefficient((1, 0)) == pytest.approx(1.0, abs=1e-14)
    c = F.coefficients.copy()
    c[1, 0] = 0
    assert np.max(np.abs(c)) < 1e-14


def test_inverse_of_single_coefficient_and_zero():
    s = GridSpec(2, 16)
    c = np.zeros(s.shape, dtype=complex)
    assert inverse_transform(SpectralField(s, c)).max_abs() == 0.0
    c[1, 0] = 1.0
    f = inverse_transform(SpectralField(s, c))
    assert np.max(np.abs(f.samples - np.exp(1j * s.coordinates()[0]))) < 1e-14


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.sampled_from([1, 2, 3]), n=st.sampled_from([4, 8, 16]))
def test_round_trips(seed, d, n):
    s = GridSpec(d, n)
    f = random_field(s, seed)
    back = inverse_transform(forward_transform(f))
    assert np.max(np.abs(back.samples - f.samples)) <= 1e-12 * f.max_abs()
    F = forward_transform(f)
    again = forward_transform(inverse_transform(F))
    assert np.max(np.abs(again.coefficients - F.coefficients)) <= 1e-12 * np.max(np.abs(F.coefficients))


def test_parseval():
    s = GridSpec(2, 32, period=3.0)
    f = random_field(s, 7)
    F = forward_transform(f)
    lhs = lp_norm(f, 2.0) ** 2
    rhs = s.period**s.d * np.sum(np.abs(F.coefficients) ** 2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_derivative_of_constant_and_sine():
    s = GridSpec(2, 32)
    assert spectral_derivative(GridFunction(s, np.full(s.shape, 3.0)), 0).max_abs() == 0.0
    x = s.coordinates()
    f = GridFunction(s, np.sin(x[0]) * np.ones(s.shape))
    df = spectral_derivative(f, 0, 1)
    assert np.max(np.abs(df.samples - np.cos(x[0]))) < 1e-12


def test_derivative_matches_eighth_order_difference():
    s = GridSpec(1, 64)
    f = bandlimited(s, 3, 1, 4)
    h = s.h
    coef = [4 / 5, -1 / 5, 4 / 105, -1 / 280]
    a = f.samples
    fd = sum(c * (np.roll(a, -m - 1) - np.roll(a, m + 1)) for m, c in enumerate(coef)) / h
    err = np.max(np.abs(fd - spectral_derivative(f, 0, 1).samples))
    # truncation error is O((k h)^8) with k <= 4
    assert err < 10 * (4 * h) ** 8


def test_nyquist_zeroed_for_odd_order_only():
    s = GridSpec(1, 8)
    f = GridFunction(s, np.cos(4 * s.coordinates()[0]))
    assert spectral_derivative(f, 0, 1).max_abs() < 1e-14
    second = spectral_derivative(f, 0, 2)
    assert np.max(np.abs(second.samples + 16 * f.samples)) < 1e-12


def test_derivative_axis_errors():
    f = GridFunction.zeros(GridSpec(2, 8))
    with pytest.raises(ParameterError):
        spectral_derivative(f, 2)
    with pytest.raises(ParameterError):
        spectral_derivative(f, 0, 0)


def test_mixed_derivatives_commute_exactly():
    s = GridSpec(2, 16)
    f = random_field(s, 1)
    a = spectral_derivative(spectral_derivative(f, 0), 1)
    b = spectral_derivative(spectral_derivative(f, 1), 0)
    assert np.max(np.abs(a.samples - b.samples)) <= 1e-12 * a.max_abs()


def test_convolution_with_scaled_delta_is_identity():
    s = GridSpec(2, 16)
    f = random_field(s, 2)
    k = np.zeros(s.shape)
    k[0, 0] = 1 / s.h**2
    out = circular_convolve(f, GridFunction(s, k))
    assert np.max(np.abs(out.samples - f.samples)) < 1e-12 * f.max_abs()


def test_convolution_matches_direct_sum():
    s = GridSpec(2, 8)
    f, g = random_field(s, 3), random_field(s, 4)
    n = s.n
    direct = np.zeros(s.shape, dtype=complex)
    for x0 in range(n):
        for x1 in range(n):
            acc = 0j
            for y0 in range(n):
                for y1 in range(n):
                    acc += g.samples[y0, y1] * f.samples[(x0 - y0) % n, (x1 - y1) % n]
            direct[x0, x1] = acc * s.h**2
    out = circular_convolve(f, g)
    assert np.max(np.abs(out.samples - direct)) < 1e-12 * np.max(np.abs(direct))


def test_convolution_of_modes():
    s = GridSpec(2, 16)
    e = GridFunction(s, np.exp(1j * s.coordinates()[0]) * np.ones(s.shape))
    out = circular_convolve(e, e)
    # int_T e^{iy} e^{i(x-y)} dy = |T| e^{ix}
    assert np.max(np.abs(out.samples - s.period**2 * e.samples)) < 1e-11


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_convolution_commutative_and_bilinear(seed, a, b):
    s = GridSpec(2, 8)
    f, g, k = (random_field(s, seed + i) for i in range(3))
    fg, gf = circular_convolve(f, g), circular_convolve(g, f)
    scale = max(fg.max_abs(), 1.0)
    assert np.max(np.abs(fg.samples - gf.samples)) <= 1e-12 * scale
    lhs = circular_convolve(f * a + g * b, k)
    rhs = circular_convolve(f, k) * a + circular_convolve(g, k) * b
    assert np.max(np.abs(lhs.samples - rhs.samples)) <= 1e-12 * max(lhs.max_abs(), rhs.max_abs(), 1.0) * 10


def test_convolution_spec_mismatch():
    with pytest.raises(ParameterError):
        circular_convolve(GridFunction.zeros(GridSpec(1, 8)), GridFunction.zeros(GridSpec(1, 16)))


def test_lp_norm_examples():
    s = GridSpec(2, 16)
    assert lp_norm(GridFunction.zeros(s), 2.0) == 0.0
    c = GridFunction(s, np.full(s.shape, -3.0))
    assert lp_norm(c, 2.0) == pytest.approx(3 * 2 * math.pi, rel=1e-14)
    assert lp_norm(c, math.inf) == 3.0
    with pytest.raises(ParameterError):
        lp_norm(c, 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), p=st.sampled_from([1.2, 1.5, 2.0, 3.0, 7.5, 40.0]))
def test_lp_norm_matches_direct_summation(seed, p):
    s = GridSpec(2, 16, period=5.0)
    f = random_field(s, seed)
    direct = math.fsum(abs(v) ** p for v in f.samples.ravel()) * s.h**2
    assert lp_norm(f, p) == pytest.approx(direct ** (1 / p), rel=1e-13)


def test_threads_knob():
    old = get_threads()
    try:
        set_threads(2)
        assert get_threads() == 2
        with pytest.raises(ParameterError):
            set_threads(0)
    finally:
        set_threads(old)
