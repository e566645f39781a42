import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chcook.gaussian import NoiseStream
from chcook.measures import (
    DegenerateEnsemble,
    MeasureSample,
    constant_one,
    estimate_log_Z,
    exceedance_mass,
    expectation,
    importance_sample,
    log_weights,
    neg_norm_sq,
    paired_difference,
    rows_to_csv,
    spatial_mean,
    weak_convergence_report,
)
from chcook.potential import PotentialSpec
from chcook.spectral import eigenvalues

SPEC = PotentialSpec(lam=1.0, n=4)


def _sample(kind="nu_n", count=4000, c=0.0, spec=SPEC):
    return importance_sample(NoiseStream(11), c, 8, 32, spec, kind, count)


@pytest.mark.parametrize("kind", ["mu_c", "nu_n", "nu_limit"])
def test_constant_observable_is_exact(kind):
    est, se = expectation(_sample(kind, 500), constant_one)
    assert est == 1.0 and se == 0.0


def test_mean_observable_equals_c():
    s = _sample(c=0.2)
    est, _ = expectation(s, spatial_mean)
    assert est == pytest.approx(0.2, abs=1e-12)


def test_neg_norm_under_reference():
    s = _sample("mu_c", 20000)
    est, se = expectation(s, neg_norm_sq)
    a = eigenvalues(8)[1:]
    assert abs(est - np.sum(1 / a**2)) < 4 * se


def test_limit_weights_vanish_outside_physical_range():
    g = np.array([[0.0, 0.5, 1.1], [0.1, -0.2, 0.3]])
    lw = log_weights(g, SPEC, "nu_limit")
    assert lw[0] == -np.inf and np.isfinite(lw[1])
    assert np.all(log_weights(g, SPEC, "mu_c") == 0)
    with pytest.raises(ValueError):
        log_weights(g, SPEC, "other")


@given(st.floats(-20, 20))
@settings(max_examples=30, deadline=None)
def test_weight_shift_invariance(shift):
    s = _sample(count=300)
    t = MeasureSample(s.fields, s.log_weights + shift, s.kind, s.P, s.grid)
    assert np.allclose(s.weights, t.weights, rtol=1e-10)
    assert estimate_log_Z(t) == pytest.approx(estimate_log_Z(s) + shift, abs=1e-9)


def test_log_Z_of_reference_is_zero():
    assert estimate_log_Z(_sample("mu_c", 100)) == 0.0


def test_degenerate_sample_raises():
    s = _sample(count=50)
    t = MeasureSample(s.fields, np.full(50, -np.inf), "nu_limit", s.P, s.grid)
    assert t.ess == 0.0
    with pytest.raises(DegenerateEnsemble):
        expectation(t, constant_one)


def test_paired_difference_of_same_weighting_is_zero():
    s = _sample(count=1000)
    d, se = paired_difference(s, s, exceedance_mass(0.5))
    assert d == 0.0 and se == 0.0
    with pytest.raises(ValueError):
        paired_difference(s, _sample(count=999), constant_one)


def test_same_stream_reuses_draws():
    a = _sample(count=200)
    b = _sample(kind="nu_limit", count=200)
    assert np.array_equal(a.fields, b.fields)


def test_weak_convergence_report_structure():
    rows, gap = weak_convergence_report(0.0, 8, 32, 1.0, [1, 2, 4], [exceedance_mass(0.5)],
                                        count=4000, stream=3)
    assert [r.n for r in rows] == [1, 2, 4, None]
    assert math.isnan(rows[0].diff_prev) and not math.isnan(rows[1].diff_prev)
    assert gap == pytest.approx(abs(rows[-2].estimate - rows[-1].estimate))
    text = rows_to_csv(rows)
    assert text.splitlines()[0].startswith("n,psi_id,estimate")
    assert text.splitlines()[-1].startswith("inf,")
