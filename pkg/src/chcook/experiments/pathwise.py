"""Pathwise checks: mass conservation, contraction, energy balance, refinement."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .. import kernels
from ..dynamics import (
    DIAG_BASIC,
    DIAG_NONE,
    CoarsenedNoise,
    ExactNoise,
    SolverConfig,
    energy_check,
    run_ensemble,
    trace_term,
)
from ..gaussian import LANE_MEASURE, NoiseStream, sample_mu_c
from ..spectral import seminorm
from .report import ExperimentReport


def initial_ensemble(cfg: SolverConfig, count: int, stream_id: int = 0) -> np.ndarray:
    """``count`` draws of ``mu_c`` on the measure lane (deterministic in ``cfg.seed``)."""
    s = NoiseStream(cfg.seed, stream_id=stream_id, lane=LANE_MEASURE)
    return np.atleast_2d(sample_mu_c(s, cfg.c, cfg.M, count=count))


def mass_conservation(cfg: SolverConfig, x0=None, record_every: int = 1, tol: float = 1e-12,
                      threads: int = 1) -> ExperimentReport:
    """Track ``|mean(X(t)) - c|`` along one trajectory (stream 0).

    Rows hold the running maximum at every 1000th recorded step and at the end.
    """
    x0 = initial_ensemble(cfg, 1)[0] if x0 is None else np.asarray(x0, dtype=float)
    if abs(x0[0] - cfg.c) > 0:
        x0 = x0.copy()
        x0[0] = cfg.c
    steps = np.arange(0, cfg.n_steps + 1, record_every)
    res = run_ensemble(x0, cfg, [0], record_steps=steps, observe=lambda s: s[:, 0].copy(),
                       diag=DIAG_BASIC, threads=threads)
    dev = np.abs(res.records[0] - cfg.c)
    run_max = np.maximum.accumulate(dev)
    keep = sorted(set(range(0, dev.size, 1000)) | {dev.size - 1})
    rows = [[int(steps[k]), float(steps[k] * cfg.dt), float(dev[k]), float(run_max[k])]
            for k in keep]
    worst = float(run_max[-1])
    summary = {"max_mean_deviation": worst, "tol": tol, "steps": cfg.n_steps,
               "overshoot": float(res.acc[0, kernels.ACC_OVERSHOOT])}
    return ExperimentReport("mass-conservation", ["step", "t", "deviation", "running_max"],
                            rows, summary, passed=worst <= tol)


def contraction_check(cfg: SolverConfig, pairs, step_tol: float = 1e-10,
                      envelope_tol: float = 0.01) -> ExperimentReport:
    """Shared-noise distances ``|X(t,x) - X(t,y)|_{-1}`` for each pair.

    For ``lam <= 0`` a pair passes if no step increases the distance by more
    than ``step_tol``; for ``lam > 0`` if ``d(t) <= e^{lam t} d(0) (1 + envelope_tol)``.
    Pair ``k`` is driven by stream ``k``.
    """
    lam = cfg.spec.lam
    steps = np.arange(cfg.n_steps + 1)
    t = steps * cfg.dt
    cols = ["pair", "d0", "d_final", "max_step_increase", "max_envelope_ratio", "pass"]
    rows = []
    ok = True
    for k, (x, y) in enumerate(pairs):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if abs(x[0] - y[0]) > 1e-14:
            raise ValueError("pairs must share their mean")
        res = run_ensemble(np.stack([x, y]), cfg, [k, k], record_steps=steps, diag=DIAG_NONE,
                           observe=lambda s: s.copy())
        d = seminorm(res.records[0] - res.records[1], -1.0)
        inc = float(np.max(np.diff(d))) if d.size > 1 else 0.0
        env = d / (np.exp(lam * t) * d[0]) if d[0] > 0 else np.zeros_like(d)
        ratio = float(env.max())
        passed = inc <= step_tol if lam <= 0 else ratio <= 1.0 + envelope_tol
        ok &= bool(passed)
        rows.append([k, float(d[0]), float(d[-1]), inc, ratio, passed])
    return ExperimentReport("contraction", cols, rows,
                            {"lambda": lam, "T": cfg.T, "step_tol": step_tol,
                             "envelope_tol": envelope_tol}, passed=ok)


def energy_report(cfg: SolverConfig, ensemble: int, N: int, windows: int = 1,
                  x0=None) -> ExperimentReport:
    """Mean residual of the ``|Q_N X|_{-1}^2`` Ito balance over an ensemble.

    Members start from ``mu_c`` draws (or ``x0``) and use streams ``0..E-1``.
    Passes iff the mean residual lies within 3 SE of zero.
    """
    x0 = initial_ensemble(cfg, ensemble) if x0 is None else x0
    er = energy_check(x0, cfg, range(ensemble), N, windows=windows)
    r = er.residuals.sum(axis=1)
    mean = float(r.mean())
    se = float(r.std(ddof=1) / math.sqrt(ensemble))
    cols = ["member", "residual"] + list(er.terms)
    rows = [[e, float(r[e])] + [float(v[e].sum()) for v in er.terms.values()]
            for e in range(ensemble)]
    summary = {"mean_residual": mean, "se": se, "z": mean / se if se > 0 else float("nan"),
               "trace_N": trace_term(N), "N": N,
               "term_means": {k: float(v.sum(axis=1).mean()) for k, v in er.terms.items()}}
    return ExperimentReport("energy", cols, rows, summary, passed=abs(mean) <= 3.0 * se)


def resolution_invariance(x, cfg: SolverConfig, P_list, ensemble: int = 8) -> ExperimentReport:
    """Same noise and start, increasing ``P``: terminal states should agree.

    Reports ``|X_P(T) - X_{P_max}(T)|_{-1}`` averaged over the ensemble.
    """
    x = np.asarray(x, dtype=float)
    finals = {}
    for P in P_list:
        c = replace(cfg, P=int(P))
        finals[P] = run_ensemble(x, c, range(ensemble), diag=DIAG_NONE).final
    ref = finals[P_list[-1]]
    rows = [[int(P), float(seminorm(finals[P] - ref, -1.0).mean())] for P in P_list]
    return ExperimentReport("resolution", ["P", "dist_to_finest"], rows, {"T": cfg.T})


def dt_self_convergence(x, cfg: SolverConfig, levels: int = 4, ensemble: int = 16,
                        min_order: float = 0.5) -> ExperimentReport:
    """Strong error between ``dt`` and ``dt/2`` runs driven by the same Wiener path.

    Level ``k`` uses step ``cfg.dt / 2**k``; every level is built from the
    finest-level increments.  The measured order is ``log2`` of successive
    error ratios.
    """
    x = np.asarray(x, dtype=float)
    finest = levels
    dt_f = cfg.dt / 2**finest
    finals = []
    for k in range(levels + 1):
        factor = 2 ** (finest - k)
        c = replace(cfg, dt=cfg.dt / 2**k)
        noise = CoarsenedNoise(cfg.M, dt_f, factor, cfg.seed, cfg.noise_scale) if factor > 1 \
            else ExactNoise(cfg.M, dt_f, cfg.seed, cfg.noise_scale)
        finals.append(run_ensemble(x, c, range(ensemble), diag=DIAG_NONE, noise=noise).final)
    errs = [float(np.sqrt(np.mean(seminorm(finals[k] - finals[k + 1], -1.0) ** 2)))
            for k in range(levels)]
    rows = []
    orders = []
    for k, e in enumerate(errs):
        o = math.log2(errs[k - 1] / e) if k > 0 and e > 0 else float("nan")
        if k > 0:
            orders.append(o)
        rows.append([k, cfg.dt / 2**k, e, o])
    order = float(np.nanmean(orders)) if orders else float("nan")
    return ExperimentReport("dt-refinement", ["level", "dt", "error_vs_half", "order"], rows,
                            {"mean_order": order, "min_order": min_order},
                            passed=bool(order >= min_order))
