"""Penalization densities of the polynomial system and their reflection limit.

For finite ``n`` the drift splits as ``xi_+ = -f^n(X) 1{X>0}`` and
``xi_- = f^n(X) 1{X<=0}``.  The approximating reflection measures are

    eta^n_+ = xi_+ - (-f(X)) 1{0<X<=1}
    eta^n_- = xi_- - f(X) 1{-1<=X<=0}

where the correction should be evaluated on the limit process; along a
single run it is evaluated on ``X`` itself (``-f`` is only defined inside
``(-1, 1)``).  :func:`stationary_reflection_terms` gives the stationary
expectation of the same quantities with the correction taken under the
limit Gibbs measure, by importance sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from ..dynamics import DIAG_REFLECTION, SolverConfig, run_ensemble
from ..gaussian import NoiseStream
from ..measures import MeasureSample, importance_sample, log_weights
from ..potential import PotentialSpec, f_n
from .report import ExperimentReport


@dataclass
class ReflectionEstimate:
    """Per-``n`` penalization statistics, time-averaged (per unit time)."""

    n: int
    density_plus: np.ndarray      # (windows, P) ensemble mean of xi_+ per unit time
    density_minus: np.ndarray
    total_mass_plus: tuple        # (mean, se)
    total_mass_minus: tuple
    contact_pairing_plus: tuple
    contact_pairing_minus: tuple
    xi_mass_plus: tuple
    xi_mass_minus: tuple
    drift_l1: tuple
    exceed_fraction: tuple
    overshoot: float
    substep_fraction: float


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def reflection_profile(cfg: SolverConfig, n_list, ensemble: int = 32, windows: int = 4,
                       x0=None, threads: int = 1, chunk_size: int = 16):
    """Stationary penalization statistics of the polynomial system for each ``n``.

    Each member starts from ``x0`` (default ``c e_0``), runs ``cfg.burn_in``
    without diagnostics and then accumulates over ``cfg.T``.  Members use
    stream ids ``0 .. ensemble-1`` for every ``n``.
    """
    if cfg.T <= 0:
        raise ValueError("T must be positive")
    out = []
    x0 = np.eye(1, cfg.M + 1)[0] * cfg.c if x0 is None else np.asarray(x0, dtype=float)
    for n in n_list:
        cfg_n = replace(cfg, spec=replace(cfg.spec, n=int(n)))
        res = run_ensemble(x0, cfg_n, range(ensemble), diag=DIAG_REFLECTION,
                           profile_windows=windows, threads=threads, chunk_size=chunk_size)
        a = res.acc / cfg.T
        wlen = cfg.T / windows
        dens = res.profiles.mean(axis=0) / wlen
        out.append(ReflectionEstimate(
            n=int(n),
            density_plus=dens[:, 0],
            density_minus=dens[:, 1],
            total_mass_plus=_mean_se(a[:, kernels.ACC_ETA_PLUS]),
            total_mass_minus=_mean_se(a[:, kernels.ACC_ETA_MINUS]),
            contact_pairing_plus=_mean_se(a[:, kernels.ACC_PAIR_PLUS]),
            contact_pairing_minus=_mean_se(a[:, kernels.ACC_PAIR_MINUS]),
            xi_mass_plus=_mean_se(a[:, kernels.ACC_XI_PLUS]),
            xi_mass_minus=_mean_se(a[:, kernels.ACC_XI_MINUS]),
            drift_l1=_mean_se(a[:, kernels.ACC_DRIFT_L1]),
            exceed_fraction=_mean_se(a[:, kernels.ACC_EXCEED]),
            overshoot=float(res.acc[:, kernels.ACC_OVERSHOOT].max()),
            substep_fraction=float(res.acc[:, kernels.ACC_SUBSTEPS].sum()
                                   / (ensemble * cfg.n_steps)),
        ))
    return out


def _trend(n_list, values, ses):
    """Weighted slope of ``values`` against ``log2 n`` and its standard error."""
    x = np.log2(np.asarray(n_list, dtype=float))
    y = np.asarray(values, dtype=float)
    w = 1.0 / np.maximum(np.asarray(ses, dtype=float), 1e-300) ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * y) / sxx
    return float(slope), float(np.sqrt(1.0 / sxx))


def reflection_report(estimates, name: str = "reflection") -> ExperimentReport:
    """Table of the per-``n`` scalars and the trend verdicts.

    The contact pairings are signed; their size is compared in absolute
    value.  ``pairing_decreasing`` requires each doubling of ``n`` to shrink
    ``|<1-X, eta^n_+>|`` by more than three combined standard errors;
    ``mass_no_growth`` requires the fitted slope of the ``eta^n_+`` and
    ``eta^n_-`` masses against ``log2 n`` not to be positive beyond three
    standard errors.
    """
    cols = ["n", "mass_plus", "mass_plus_se", "mass_minus", "mass_minus_se",
            "pairing_plus", "pairing_plus_se", "pairing_minus", "pairing_minus_se",
            "xi_plus", "xi_minus", "drift_l1", "drift_l1_se", "exceed_fraction",
            "overshoot", "substep_fraction"]
    rows = []
    for e in estimates:
        rows.append([e.n, *e.total_mass_plus, *e.total_mass_minus, *e.contact_pairing_plus,
                     *e.contact_pairing_minus, e.xi_mass_plus[0], e.xi_mass_minus[0],
                     *e.drift_l1, e.exceed_fraction[0], e.overshoot, e.substep_fraction])
    decreasing = True
    steps = []
    for a, b in zip(estimates, estimates[1:]):
        pa, sa = abs(a.contact_pairing_plus[0]), a.contact_pairing_plus[1]
        pb, sb = abs(b.contact_pairing_plus[0]), b.contact_pairing_plus[1]
        z = (pa - pb) / np.hypot(sa, sb)
        steps.append(float(z))
        decreasing &= bool(z > 3.0)
    ns = [e.n for e in estimates]
    trends = {}
    growth = False
    for key in ("total_mass_plus", "total_mass_minus"):
        slope, se = _trend(ns, [getattr(e, key)[0] for e in estimates],
                           [getattr(e, key)[1] for e in estimates])
        trends[key] = {"slope_per_doubling": slope, "se": se}
        growth |= slope > 3.0 * se
    summary = {"pairing_decrease_z": steps, "pairing_decreasing": decreasing,
               "mass_trend": trends, "mass_no_growth": not growth}
    return ExperimentReport(name, cols, rows, summary, passed=bool(decreasing and not growth))


def stationary_reflection_terms(c: float, M: int, P: int, lam: float, n_list, count: int,
                                stream: NoiseStream | int = 0):
    """Stationary per-unit-time expectations of ``eta^n_+`` mass and contact pairing.

    Uses ``E_{nu^n}[xi term] - E_{nu_limit}[f-correction]``, i.e. the
    correction is taken under the limit measure as in the definition, with
    all weightings sharing the same ``mu_c`` draws.  Returns rows
    ``(n, mass, pairing)``.
    """
    if not isinstance(stream, NoiseStream):
        stream = NoiseStream(int(stream))
    base = importance_sample(stream, c, M, P, PotentialSpec(lam=lam), "mu_c", count)
    g = base.grid
    lim = MeasureSample(base.fields, log_weights(g, PotentialSpec(lam=lam), "nu_limit"),
                        "nu_limit", P, g)
    inside = (g > 0) & (g <= 1)
    gc = np.clip(g, -1 + 1e-15, 1 - 1e-15)
    flog = np.log1p(-gc) - np.log1p(gc) + lam * gc
    w = lim.weights
    corr_mass = np.sum(w * np.mean(np.where(inside, -flog, 0.0), axis=-1))
    corr_pair = np.sum(w * np.mean(np.where(inside, (1 - g) * (-flog), 0.0), axis=-1))
    rows = []
    for n in n_list:
        spec = PotentialSpec(lam=lam, n=int(n))
        s = MeasureSample(base.fields, log_weights(g, spec, "nu_n"), "nu_n", P, g)
        fn = f_n(g, spec)
        xi = np.where(g > 0, -fn, 0.0)
        mass = np.sum(s.weights * np.mean(xi, axis=-1)) - corr_mass
        pair = np.sum(s.weights * np.mean((1 - g) * xi, axis=-1)) - corr_pair
        rows.append((int(n), float(mass), float(pair)))
    return rows
