"""Compiled and numpy kernels must agree, including the substep path."""
import numpy as np
import pytest

from chcook import kernels
from chcook.dynamics import DIAG_REFLECTION, ExactNoise, Integrator, SolverConfig
from chcook.potential import PotentialSpec

compiled = pytest.mark.skipif(kernels.compiled_advance is None,
                              reason="compiled kernel not built")


def _run(fn, cfg, x0, E=6, K=300, diag=DIAG_REFLECTION, seed=0):
    integ = Integrator(cfg, fn)
    nz = ExactNoise(cfg.M, cfg.dt, seed).block(range(E), 0, K)
    st = np.tile(x0, (E, 1))
    acc = np.zeros((E, kernels.N_ACC))
    prof = np.zeros((E, 2, cfg.P))
    xs = np.zeros((K, E, cfg.M + 1))
    fs = np.zeros((K, E, cfg.M + 1))
    bad = integ.advance(st, nz, acc, diag, prof=prof, x_out=xs, f_out=fs)
    return st, acc, prof, xs, fs, bad


CASES = [
    ("poly", PotentialSpec(n=2)),
    ("poly", PotentialSpec(n=8, lam=1.0)),
    ("delta", PotentialSpec(lam=1.0, delta=0.2)),
    ("zero", PotentialSpec()),
]


@compiled
@pytest.mark.parametrize("drift,spec", CASES)
def test_parity(drift, spec):
    M = 16
    cfg = SolverConfig(M=M, P=64, dt=1e-4, T=0.0, spec=spec, drift=drift)
    x0 = np.zeros(M + 1)
    x0[0], x0[1], x0[2] = 0.1, 0.65, 0.1
    a = _run(kernels.compiled_advance, cfg, x0)
    b = _run(kernels.python_advance, cfg, x0)
    assert a[-1] == b[-1] == -1
    for u, v in zip(a[:-1], b[:-1]):
        assert np.allclose(u, v, rtol=1e-11, atol=1e-13)


@compiled
def test_substeps_trigger_and_agree():
    M = 16
    cfg = SolverConfig(M=M, P=64, dt=1e-4, T=0.0, spec=PotentialSpec(n=8, lam=1.0))
    x0 = np.zeros(M + 1)
    x0[1] = 0.75
    a = _run(kernels.compiled_advance, cfg, x0, K=256)
    b = _run(kernels.python_advance, cfg, x0, K=256)
    assert a[1][:, kernels.ACC_SUBSTEPS].sum() > 0
    assert np.array_equal(a[1][:, kernels.ACC_SUBSTEPS], b[1][:, kernels.ACC_SUBSTEPS])
    assert np.allclose(a[0], b[0], rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("fn", [kernels.python_advance, kernels.compiled_advance])
def test_blowup_index_reported(fn):
    if fn is None:
        pytest.skip("compiled kernel not built")
    M = 16
    cfg = SolverConfig(M=M, P=64, dt=1e-2, T=0.0, spec=PotentialSpec(n=16),
                       max_substep_level=0)
    x0 = np.zeros(M + 1)
    x0[1] = 0.9
    with np.errstate(all="ignore"):
        bad = _run(fn, cfg, x0, E=2, K=50)[-1]
    assert 0 <= bad < 50


def test_no_substeps_is_plain_exponential_euler():
    M = 8
    cfg = SolverConfig(M=M, P=32, dt=1e-4, T=0.0, spec=PotentialSpec(n=2))
    integ = Integrator(cfg, kernels.python_advance)
    x = np.zeros((1, M + 1))
    x[0, 1] = 0.3
    nz = np.zeros((1, 1, M + 1))
    ref = x.copy()
    integ.advance(x, nz, np.zeros((1, kernels.N_ACC)))
    from chcook.potential import f_n
    from chcook.spectral import analyze, synthesize
    F = analyze(f_n(synthesize(ref[0], 32), cfg.spec), M)
    expect = integ.decay * ref[0] + integ.gain * F
    assert np.allclose(x[0], expect, rtol=1e-13, atol=1e-16)


def test_backend_selection():
    assert kernels.BACKEND in ("compiled", "python")
    assert kernels.advance in (kernels.compiled_advance, kernels.python_advance)
