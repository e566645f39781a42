import math
import warnings

import numpy as np
import pytest

from chcook.dynamics import (
    DIAG_NONE,
    DIAG_REFLECTION,
    NumericalBlowup,
    SolverConfig,
    energy_check,
    run_ensemble,
    simulate,
    simulate_pair,
    step,
    trace_term,
)
from chcook.gaussian import NoiseStream
from chcook.potential import PotentialSpec
from chcook.spectral import apply_heat_semigroup, eigenvalues


def _cfg(**kw):
    base = dict(M=8, P=32, dt=1e-4, T=0.01, spec=PotentialSpec(n=4), c=0.1)
    base.update(kw)
    return SolverConfig(**base)


def _x0(M=8, c=0.1):
    x = np.zeros(M + 1)
    x[0], x[1], x[3] = c, 0.3, -0.1
    return x


def test_config_validation():
    with pytest.raises(ValueError, match=r"P >= 2\*\(M\+1\)"):
        SolverConfig(M=8, P=17, dt=1e-3, T=0.1)
    with pytest.raises(ValueError):
        SolverConfig(M=8, P=32, dt=0.0, T=0.1)
    with pytest.raises(ValueError):
        SolverConfig(M=8, P=32, dt=0.3, T=1.0)
    assert _cfg().n_steps == 100


def test_zero_horizon_returns_initial_state():
    x = _x0()
    out, diag = simulate(x, _cfg(T=0.0))
    assert np.array_equal(out.coeffs, x)
    assert diag.snapshots.shape == (1, 9)


def test_mean_is_conserved_exactly():
    res = run_ensemble(_x0(), _cfg(T=0.05), range(4), record_steps=range(0, 501, 50))
    assert np.all(res.records[..., 0] == 0.1)


def test_linear_limit_is_heat_semigroup():
    cfg = _cfg(drift="zero", noise_scale=0.0, T=0.02)
    out, _ = simulate(_x0(), cfg)
    assert np.allclose(out.coeffs, apply_heat_semigroup(_x0(), 0.02), rtol=1e-12, atol=1e-15)


def test_determinism_and_thread_independence():
    cfg = _cfg(T=0.02)
    a = run_ensemble(_x0(), cfg, range(10), chunk_size=3, threads=1).final
    b = run_ensemble(_x0(), cfg, range(10), chunk_size=3, threads=4).final
    c = run_ensemble(_x0(), cfg, range(10), chunk_size=3, threads=4).final
    assert np.array_equal(a, b) and np.array_equal(b, c)
    # a member's path depends on its stream id; batch width only moves BLAS round-off
    d = run_ensemble(_x0(), cfg, [7], chunk_size=3).final
    assert np.allclose(d[0], a[7], rtol=1e-12, atol=1e-15)


def test_step_matches_simulate():
    cfg = _cfg(T=1e-4)
    x1 = step(_x0(), cfg, NoiseStream(cfg.seed, 5, 0))
    x2, _ = simulate(_x0(), cfg, 5)
    assert np.array_equal(x1.coeffs, x2.coeffs)


def test_pair_with_identical_start_stays_together():
    cfg = _cfg(T=0.01)
    res = simulate_pair(_x0(), _x0(), cfg, 3)
    assert np.all(res.distances == 0.0)
    y = _x0()
    y[2] = 0.2
    res = simulate_pair(_x0(), y, cfg, 3)
    assert res.distances[-1] < res.distances[0]
    with pytest.raises(ValueError):
        y[0] = 0.0
        simulate_pair(_x0(), y, cfg, 3)


def test_stability_warning_and_blowup():
    cfg = _cfg(dt=1e-2, T=0.5, spec=PotentialSpec(n=16), max_substep_level=0, c=0.0)
    x = np.zeros(9)
    x[1] = 0.9
    with warnings.catch_warnings(record=True) as rec, np.errstate(all="ignore"):
        warnings.simplefilter("always")
        with pytest.raises(NumericalBlowup) as exc:
            run_ensemble(x, cfg, [0, 1], diag=DIAG_NONE)
    assert any("stability number" in str(w.message) for w in rec)
    assert exc.value.step >= 0 and exc.value.partial is not None


def test_trace_term():
    assert trace_term(2) == pytest.approx(1.25)
    assert trace_term(4) == pytest.approx(1.875)


def test_energy_identity_deterministic_linear():
    # without noise and drift the discrete identity holds up to O(dt)
    cfg = _cfg(drift="zero", noise_scale=0.0, T=0.01, dt=1e-6)
    r = energy_check(_x0(), cfg, [0], N=4, windows=2)
    scale = np.max(np.abs(r.terms["dissipation"]))
    assert np.max(np.abs(r.residuals)) < 1e-2 * scale


def test_energy_identity_noisy_mean_zero():
    cfg = _cfg(T=0.02, dt=1e-5)
    r = energy_check(_x0(), cfg, range(64), N=4, windows=1)
    res = r.residuals[:, 0]
    assert abs(res.mean()) <= 3 * res.std(ddof=1) / math.sqrt(res.size)
    assert np.allclose(r.terms["trace"], 0.02 * trace_term(4))


def test_invariant_variance_of_linear_chain():
    # drift-free chain keeps the Gaussian reference law: Var x_i = 1/a_i
    cfg = _cfg(drift="zero", T=0.0, burn_in=0.5, dt=1e-3, c=0.0)
    res = run_ensemble(np.zeros(9), cfg, range(4000))
    a = eigenvalues(8)[1:]
    v = res.final[:, 1:].var(axis=0) * a
    assert np.all(np.abs(v - 1) < 5 * math.sqrt(2 / 4000))


def test_profile_windows_with_several_members():
    cfg = _cfg(T=0.004, spec=PotentialSpec(n=2), c=0.0)
    x = np.zeros(9)
    x[1] = 0.7
    res = run_ensemble(x, cfg, range(5), diag=DIAG_REFLECTION, profile_windows=4, chunk_size=2)
    assert res.profiles.shape == (5, 4, 2, 32)
    one = run_ensemble(x, cfg, [3], diag=DIAG_REFLECTION, profile_windows=4)
    assert np.allclose(one.profiles[0], res.profiles[3], rtol=1e-12, atol=1e-15)
    again = run_ensemble(x, cfg, range(5), diag=DIAG_REFLECTION, profile_windows=4,
                         chunk_size=2, threads=3)
    assert np.array_equal(again.profiles, res.profiles)
