"""Acceptance criteria C1 to C13 at their stated tolerances.

Each test records one PASS/FAIL line (printed again in the terminal
summary) and then asserts the same verdict.  Runtime budgets are part of
the verdict.
"""
import io
import math

import mpmath
import numpy as np
import pytest

from chcook import cli
from chcook.config import parse_config
from chcook.dynamics import SolverConfig
from chcook.experiments import (
    contraction_check,
    control_residual,
    energy_report,
    gibbs_consistency,
    invariant_convergence,
    linear_covariance,
    mass_conservation,
    mixing_estimate,
    mixing_report,
    random_pairs,
    reflection_profile,
    reflection_report,
    smoothing_check,
    strong_feller_check,
)
from chcook.measures import constant_one, exceedance_mass, gaussian_bump, tanh_mode
from chcook.potential import PotentialSpec, f_log, f_n

pytestmark = pytest.mark.slow


def test_c01_mass_conservation(criterion):
    rec = criterion("C1", 60)
    cfg = SolverConfig(M=32, P=128, dt=1e-4, T=10.0, spec=PotentialSpec(lam=1.0, n=2), c=0.3,
                       seed=1)
    assert cfg.n_steps == 100_000
    rep = mass_conservation(cfg, tol=1e-12)
    dev = rep.summary["max_mean_deviation"]
    assert rec(rep.passed, f"max |mean - c| = {dev:.3g} over {cfg.n_steps} steps (tol 1e-12)")


def test_c02_linear_covariance(criterion):
    rec = criterion("C2", 120)
    cfg = SolverConfig(M=16, P=64, dt=0.01, T=0.0, drift="zero", seed=2)
    rep = linear_covariance(cfg, modes=8, samples=10_000)
    z = np.abs(rep.column("z"))
    assert rec(rep.passed and z.max() <= 3.0, f"modes 1..8, max |z| = {z.max():.2f} (tol 3)")


def test_c03_polynomial_tail_bound(criterion):
    rec = criterion("C3", 1)
    worst = 0.0
    ok = True
    # the bound drops to ~1e-85, so the gap is evaluated in 150-digit arithmetic
    with mpmath.workdps(150):
        for n in (5, 10, 20, 40):
            spec = PotentialSpec(n=n)
            for x in (0.9, 0.5, 0.1, -0.1, -0.5, -0.9):
                xm = mpmath.mpf(x)
                gap = abs(f_n(xm, spec) - f_log(xm, spec))
                bound = 2 * abs(xm) ** (2 * n + 3) / ((2 * n + 3) * (1 - xm**2))
                ok &= bool(gap <= bound)
                worst = max(worst, float(gap / bound))
    assert rec(ok, f"max gap/bound = {worst:.4f} over 24 cases (must be <= 1)")


def test_c04_contraction(criterion):
    rec = criterion("C4", 60)
    pairs = random_pairs(5, 0.0, 16, 64, seed=3)
    parts = []
    ok = True
    for lam in (0.0, 1.0):
        cfg = SolverConfig(M=16, P=64, dt=1e-4, T=1.0, spec=PotentialSpec(lam=lam, n=2), seed=3)
        rep = contraction_check(cfg, pairs, step_tol=1e-10, envelope_tol=0.01)
        ok &= bool(rep.passed)
        if lam == 0:
            parts.append(f"lambda=0 max step increase {max(rep.column('max_step_increase')):.2g}")
        else:
            parts.append(f"lambda=1 max envelope ratio {max(rep.column('max_envelope_ratio')):.4f}")
    assert rec(ok, "; ".join(parts))


def test_c05_invariant_convergence(criterion):
    rec = criterion("C5", 300)
    rep = invariant_convergence(0.0, 16, 64, 0.0, [1, 2, 4, 8, 16], [exceedance_mass(1.0)],
                                count=200_000, seed=5)
    est = [f"{v:.4f}" for v in rep.column("estimate")]
    assert rec(rep.passed, f"exceedance along n=1,2,4,8,16,limit: {', '.join(est)}")


def test_c06_gibbs_consistency(criterion):
    rec = criterion("C6", 600)
    cfg = SolverConfig(M=16, P=64, dt=2e-4, T=10.0, burn_in=0.5,
                       spec=PotentialSpec(lam=0.0, n=2), seed=7)
    rep = gibbs_consistency(cfg, ensemble=128, sample_every=50, reference_count=400_000)
    z = ", ".join(f"{v:+.2f}" for v in rep.column("z"))
    assert rec(rep.passed, f"z-scores {z} (tol 3)")


def test_c07_energy_identity(criterion):
    rec = criterion("C7", 300)
    cfg = SolverConfig(M=16, P=64, dt=1e-4, T=0.5, burn_in=0.5,
                       spec=PotentialSpec(lam=0.0, n=2), seed=3)
    rep = energy_report(cfg, 200, 4)
    s = rep.summary
    assert rec(rep.passed, f"mean residual {s['mean_residual']:.3g}, SE {s['se']:.3g}, "
                           f"Tr_4 = {s['trace_N']:.4g}")


def test_c08_reflection_emergence(criterion):
    rec = criterion("C8", 600)
    cfg = SolverConfig(M=16, P=64, dt=1e-5, T=0.2, burn_in=0.3,
                       spec=PotentialSpec(lam=0.0, n=2), seed=9)
    est = reflection_profile(cfg, [2, 4, 8], ensemble=32, windows=4, chunk_size=16)
    rep = reflection_report(est)
    pair = ", ".join(f"{e.contact_pairing_plus[0]:.4f}" for e in est)
    mass = ", ".join(f"{e.total_mass_plus[0]:.4f}" for e in est)
    s = rep.summary
    assert rec(rep.passed, f"pairing(n=2,4,8) {pair}; mass {mass}; "
                           f"pairing decreasing={s['pairing_decreasing']} "
                           f"mass no growth={s['mass_no_growth']}")


def test_c09_control_residual(criterion):
    rec = criterion("C9", 10)
    x = [0.0, 0.4, 0.0, 0.1]
    y = [0.0, -0.3, 0.2]
    rep = control_residual(x, y, 0.1, PotentialSpec(lam=1.0, delta=0.2),
                           [8, 16, 32, 64, 128, 256], floor=1e-10)
    res = ", ".join(f"{v:.2g}" for v in rep.column("residual"))
    assert rec(rep.passed, f"residual for P=8..256: {res}")


def test_c10_smoothing(criterion):
    rec = criterion("C10", 1)
    rep = smoothing_check((64, 128), k_max=8, tol=0.01)
    assert rec(rep.passed, f"relative change of sup sqrt(t) s_M = {rep.summary['rel_change']:.3g}")


def _lags():
    fine = np.arange(0.0, 0.2, 0.0025)
    coarse = np.arange(0.2, 2.0 + 1e-9, 0.05)
    return np.unique(np.round(np.concatenate([fine, coarse]) / 1e-4).astype(int)) * 1e-4


def test_c11_mixing(criterion):
    rec = criterion("C11", 900)
    cfg = SolverConfig(M=32, P=128, dt=1e-4, T=0.0, spec=PotentialSpec(lam=0.0, n=2), seed=4)
    x = np.zeros(33)
    x[1] = 0.6
    est = mixing_estimate(cfg, [x, -x], _lags(), 500, [tanh_mode(1, 2.0), constant_one],
                          reference_count=200_000)
    rep = mixing_report(est, level=0.95, r2_min=0.9)
    fit = est.fits["tanh_mode1"]
    zero = float(np.max(est.observable_gaps["constant_one"]))
    ok = rep.passed and fit.ci[0] > 0 and fit.r2 >= 0.9 and zero == 0.0
    assert rec(ok, f"beta {fit.beta:.3g} (95% CI {fit.ci[0]:.3g}..{fit.ci[1]:.3g}), "
                   f"R^2 {fit.r2:.3f}, max gap for phi=1: {zero}")


def test_c12_strong_feller(criterion):
    rec = criterion("C12", 600)
    phis = [tanh_mode(1, 2.0), gaussian_bump(10.0), exceedance_mass(0.5)]
    pairs = random_pairs(5, 0.0, 16, 64, seed=12, modes=4)
    ok = True
    worst = -math.inf
    for t in (0.1, 0.5):
        cfg = SolverConfig(M=16, P=64, dt=1e-4, T=t, spec=PotentialSpec(lam=1.0, n=2), seed=12)
        for k, (x, y) in enumerate(pairs):
            rep = strong_feller_check(x, y, cfg, phis, 400, pair_id=k)
            for r in rep.rows:
                est, se, bound = r[4], r[5], r[6]
                ok &= bool(est <= bound + 3 * se)
                worst = max(worst, (est - 3 * se) / bound)
    assert rec(ok, f"max (estimate - 3SE)/bound = {worst:.3f} over 5 pairs x 3 phi x 2 t")


TINY = {
    "simulate": "T = 0.002\nrecord_every = 5\n",
    "sample-measure": "count = 500\nkeep = 20\n",
    "invariant-convergence": "count = 2000\nn_list = 1, 2\n",
    "reflection": "T = 0.002\nburn_in = 0.001\nensemble = 6\nn_list = 2, 4\nwindows = 2\n",
    "semigroup": "T = 0.002\nensemble = 6\nn_list = 2, 4\ninit = mode\ninit_amplitude = 0.3\n",
    "strong-feller": "T = 0.002\nensemble = 6\npairs = 2\nlambda = 1\n",
    "control": "T = 0.002\nensemble = 6\nP_list = 8, 16\nnoise_scales = 0, 0.05\ndelta = 0.2\n",
    "mixing": ("ensemble = 6\nlag_max = 0.004\nlag_fine_until = 0.002\nlag_fine_step = 0.0005\n"
               "lag_coarse_step = 0.001\nreference_count = 500\ninit_amplitude = 0.3\n"),
    "energy": "T = 0.002\nensemble = 6\n",
}


def _tiny_config(name):
    base = (f"experiment = {name}\nseed = 21\nlambda = 0\nn = 2\nc = 0\nM = 8\nP = 32\n"
            "dt = 1e-4\nchunk_size = 2\n")
    extra = TINY[name]
    if "T =" not in extra:
        base += "T = 0\n"
    if "lambda =" in extra:
        base = base.replace("lambda = 0\n", "")
    return parse_config(base + extra)


def test_c13_reproducibility(criterion, tmp_path):
    rec = criterion("C13", None)
    bad = []
    for name in cli.DRIVERS:
        rc = _tiny_config(name)
        bodies = []
        for run_no, threads in enumerate((1, 8, 1)):
            out = tmp_path / f"{name}-{run_no}"
            code = cli.run(rc, str(out), threads=threads, stream=io.StringIO())
            if code != 0:
                bad.append(f"{name} exit {code}")
            bodies.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if not bodies[0] or any(b != bodies[0] for b in bodies[1:]):
            bad.append(name)
    assert rec(not bad, f"{len(cli.DRIVERS)} experiments at 1/8/1 workers"
                        + (f"; differing: {', '.join(bad)}" if bad else "; CSVs byte-identical"))
