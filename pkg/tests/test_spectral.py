import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chcook.spectral import (
    SpectralField,
    analyze,
    apply_A,
    apply_A_power,
    apply_heat_semigroup,
    basis_matrix,
    eigenvalue,
    eigenvalues,
    grid_points,
    heat_factors,
    norm,
    q_n,
    q_weights,
    scalar_product,
    seminorm,
    smoothing_operator_norm,
    smoothing_sum,
    smoothing_sum_asymptote,
    synthesize,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def coeff_arrays(max_M=20):
    return st.integers(1, max_M).flatmap(lambda M: arrays(float, M + 1, elements=finite))


def test_eigenvalue_oracles():
    assert eigenvalue(0) == 0.0
    assert eigenvalue(1) == pytest.approx(float(mpmath.pi**2), rel=1e-15)
    assert eigenvalue(3) == pytest.approx(float(9 * mpmath.pi**2), rel=1e-15)
    assert eigenvalue(1) == pytest.approx(9.8696044, abs=1e-7)
    assert eigenvalue(3) == pytest.approx(88.8264396, abs=1e-7)
    a = eigenvalues(10)
    assert np.all(np.diff(a) > 0)
    with pytest.raises(ValueError):
        eigenvalue(-1)


def test_synthesize_simple_fields():
    assert np.allclose(synthesize([1.0], 5), 1.0)
    P = 4
    j = np.arange(P)
    expected = math.sqrt(2) * np.cos(np.pi * (j + 0.5) / P)
    assert np.allclose(synthesize([0.0, 1.0], P), expected, atol=1e-15)
    with pytest.raises(ValueError):
        synthesize(np.zeros(6), 4)


def test_analyze_constant_and_basis_matrix():
    c = analyze(np.ones(8), 3)
    assert np.allclose(c, [1, 0, 0, 0], atol=1e-15)
    B = basis_matrix(5, 16)
    rng = np.random.default_rng(0)
    x = rng.normal(size=6)
    assert np.allclose(x @ B, synthesize(x, 16), atol=1e-13)
    assert np.allclose(grid_points(4), [0.125, 0.375, 0.625, 0.875])


@given(coeff_arrays())
@settings(max_examples=60, deadline=None)
def test_transform_pair_roundtrip(c):
    M = c.size - 1
    for P in (M + 1, 2 * (M + 1), 2 * (M + 1) + 3):
        back = analyze(synthesize(c, P), M)
        assert np.allclose(back, c, atol=1e-12 * (1 + np.abs(c).max()))


@given(coeff_arrays())
@settings(max_examples=60, deadline=None)
def test_mean_is_mode_zero_and_parseval(c):
    P = 2 * c.size
    g = synthesize(c, P)
    assert np.mean(g) == pytest.approx(c[0], abs=1e-12 * (1 + np.abs(c).max()))
    assert np.mean(g**2) == pytest.approx(np.sum(c**2), rel=1e-10, abs=1e-12)


@given(coeff_arrays(), st.floats(-3, 3))
@settings(max_examples=60, deadline=None)
def test_norms(c, gamma):
    s = seminorm(c, gamma)
    assert s >= 0
    const = np.zeros_like(c)
    const[0] = c[0]
    assert seminorm(const, gamma) == 0.0
    assert norm(c, gamma) ** 2 == pytest.approx(s**2 + c[0] ** 2, rel=1e-12, abs=1e-300)
    assert scalar_product(c, c, gamma) == pytest.approx(s**2, rel=1e-12, abs=1e-300)


def test_A_and_powers():
    c = np.array([2.0, 1.0, -1.0, 0.5])
    a = eigenvalues(3)
    assert np.allclose(apply_A(c), -a * c)
    assert np.allclose(apply_A_power(c, 1.0), np.r_[2.0, a[1:] * c[1:]])
    assert np.allclose(apply_A_power(apply_A_power(c, 0.5), -0.5), c)
    # |h|_{-1}^2 = (h, (-A)^{-1} h)
    assert seminorm(c, -1.0) ** 2 == pytest.approx(np.sum(c[1:] ** 2 / a[1:]))


def test_q_weights_literal_prefactor():
    w = q_weights(2, 4)
    assert np.allclose(w, [1.5, 1.0, 0.5, 0.0, 0.0])
    assert np.sum(q_weights(2, 4)[1:] ** 2) == pytest.approx(1.25)
    assert np.sum(q_weights(4, 8)[1:] ** 2) == pytest.approx(1.875)
    assert np.allclose(q_n(np.ones(5), 2), w)
    with pytest.raises(ValueError):
        q_weights(0, 3)


def test_heat_semigroup():
    c = np.array([0.3, 1.0, 1.0])
    assert np.allclose(apply_heat_semigroup(c, 0.0), c)
    out = apply_heat_semigroup(c, 0.01)
    a = eigenvalues(2)
    assert out[0] == 0.3
    assert np.allclose(out[1:], np.exp(-0.5 * a[1:] ** 2 * 0.01))
    f1, f2 = heat_factors(4, 0.01), heat_factors(4, 0.02)
    assert np.allclose(f1 * f1, f2)
    with pytest.raises(ValueError):
        heat_factors(3, -1.0)


def test_smoothing_sum_rates():
    # s_M(t) grows like t^{-3/4}; the operator norm like t^{-1/2}
    for t in (1e-4, 1e-5):
        assert smoothing_sum(t, 4000) == pytest.approx(smoothing_sum_asymptote(t), rel=0.02)
    r = [math.sqrt(t) * smoothing_operator_norm(t, 128, 512) for t in (4**-5, 4**-6, 4**-7)]
    assert max(r) / min(r) < 1.05
    with pytest.raises(ValueError):
        smoothing_sum(0.0, 4)


def test_spectral_field_type():
    h = SpectralField([0.5, 1.0])
    assert h.M == 1 and h.mean == 0.5
    assert np.allclose((h + h).coeffs, [1.0, 2.0])
    assert np.allclose((2 * h - h).coeffs, h.coeffs)
    assert np.allclose(SpectralField.mode(2, 3, 0.5).coeffs, [0, 0, 0.5, 0])
    assert h.seminorm(-1.0) == pytest.approx(1 / math.pi)
    with pytest.raises(ValueError):
        SpectralField([np.nan])
    with pytest.raises(ValueError):
        h.coeffs[0] = 1.0
