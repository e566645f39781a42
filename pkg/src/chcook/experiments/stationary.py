"""Stationary statistics: Gaussian covariance, Gibbs consistency, weak convergence in ``n``."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..dynamics import DIAG_NONE, SolverConfig, run_ensemble
from ..gaussian import NoiseStream
from ..measures import (
    KINDS,
    clipped_square,
    estimate_log_Z,
    evaluate,
    exceedance_mass,
    expectation,
    gaussian_bump,
    importance_sample,
    neg_norm_sq,
    spatial_mean,
    weak_convergence_report,
)
from ..spectral import eigenvalues
from .pathwise import initial_ensemble
from .report import ExperimentReport

# stream id of importance-sampling references, disjoint from dynamics members
REFERENCE_STREAM = 2**40


def linear_covariance(cfg: SolverConfig, modes: int = 8, samples: int = 10_000,
                      sample_every: int = 10, ensemble: int = 10) -> ExperimentReport:
    """Per-mode variance of the drift-free chain against ``1 / a_i``.

    ``samples`` values are split over ``ensemble`` members started from
    ``mu_c``; consecutive samples are ``sample_every`` steps apart.  ``cfg.T``
    is ignored.  Passes iff every mode is within 3 SE.
    """
    if cfg.drift != "zero":
        raise ValueError("linear_covariance needs drift='zero'")
    per = -(-samples // ensemble)
    run_cfg = replace(cfg, T=per * sample_every * cfg.dt, burn_in=0.0)
    steps = np.arange(1, per + 1) * sample_every
    res = run_ensemble(initial_ensemble(cfg, ensemble), run_cfg, range(ensemble),
                       record_steps=steps, diag=DIAG_NONE)
    x = res.records[:, :, 1:modes + 1].reshape(-1, modes)[:samples]
    a = eigenvalues(modes)[1:]
    sq = x**2
    var = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(sq.shape[0])
    # lag-one correlation of the squared samples, to document decorrelation
    rho = [float(np.corrcoef(res.records[:, :-1, i + 1].ravel() ** 2,
                             res.records[:, 1:, i + 1].ravel() ** 2)[0, 1]) for i in range(modes)]
    z = (var - 1.0 / a) / se
    rows = [[i + 1, float(var[i]), float(se[i]), float(1.0 / a[i]), float(z[i]), rho[i]]
            for i in range(modes)]
    return ExperimentReport("linear-covariance", ["mode", "variance", "se", "target", "z",
                                                  "lag1_corr_sq"], rows,
                            {"samples": int(sq.shape[0]), "max_abs_z": float(np.max(np.abs(z)))},
                            passed=bool(np.all(np.abs(z) <= 3.0)))


def default_observables():
    return [exceedance_mass(0.5), clipped_square, gaussian_bump(10.0)]


def gibbs_consistency(cfg: SolverConfig, phi_list=None, ensemble: int = 128,
                      sample_every: int = 50, reference_count: int = 400_000,
                      threads: int = 1, chunk_size: int = 16) -> ExperimentReport:
    """Long-run time averages against importance-sampling ``nu^n`` estimates.

    Members start from ``mu_c``, discard ``cfg.burn_in`` and average each
    observable every ``sample_every`` steps over ``cfg.T``.  The member
    averages are independent, so their spread gives the dynamic SE.  Passes
    iff every observable agrees within 3 combined SE.
    """
    phi_list = default_observables() if phi_list is None else phi_list
    P = cfg.P
    ref_sample = importance_sample(NoiseStream(cfg.seed, stream_id=REFERENCE_STREAM), cfg.c,
                                   cfg.M, P, cfg.spec, "nu_n", reference_count)
    ref = [expectation(ref_sample, p) for p in phi_list]
    steps = np.arange(sample_every, cfg.n_steps + 1, sample_every)

    def observe(states):
        return np.stack([evaluate(p, states, P) for p in phi_list], axis=-1)

    res = run_ensemble(initial_ensemble(cfg, ensemble), cfg, range(ensemble),
                       record_steps=steps, observe=observe, diag=DIAG_NONE,
                       threads=threads, chunk_size=chunk_size)
    per = res.records.mean(axis=1)
    rows = []
    ok = True
    for j, p in enumerate(phi_list):
        m = float(per[:, j].mean())
        se = float(per[:, j].std(ddof=1) / math.sqrt(ensemble))
        r, rse = ref[j]
        z = (m - r) / math.hypot(se, rse)
        ok &= abs(z) <= 3.0
        rows.append([getattr(p, "__name__", f"phi{j}"), m, se, r, rse, z])
    return ExperimentReport("gibbs-consistency",
                            ["psi_id", "dynamics", "dynamics_se", "importance", "importance_se", "z"],
                            rows, {"ess": ref_sample.ess, "samples_per_member": int(steps.size)},
                            passed=bool(ok))


def invariant_convergence(c: float, M: int, P: int, lam: float, n_list, psi_list=None,
                          count: int = 200_000, seed: int = 0) -> ExperimentReport:
    """``nu^n[psi]`` along ``n_list`` and ``nu_limit[psi]`` on common draws.

    Passes iff, for the first observable, each step in ``n`` decreases the
    estimate by more than 3 paired SE and the estimates move toward the
    limit value.
    """
    psi_list = [exceedance_mass(1.0)] if psi_list is None else psi_list
    rows, gap = weak_convergence_report(c, M, P, lam, n_list, psi_list, count,
                                        NoiseStream(seed, stream_id=REFERENCE_STREAM))
    out = [["inf" if r.n is None else r.n, r.psi_id, r.estimate, r.se, r.ess, r.diff_prev,
            r.diff_prev_se] for r in rows]
    first = [r for r in rows if r.psi_id == rows[0].psi_id]
    seq = [r for r in first if r.n is not None]
    limit = first[-1].estimate
    decreasing = all(r.diff_prev < -3.0 * r.diff_prev_se for r in seq[1:])
    dist = [abs(r.estimate - limit) for r in seq]
    toward = all(b < a for a, b in zip(dist, dist[1:]))
    return ExperimentReport("invariant-convergence",
                            ["n", "psi_id", "estimate", "se", "ess", "diff_prev", "diff_prev_se"],
                            out, {"gap_to_limit": gap, "limit": limit, "monotone": decreasing,
                                  "toward_limit": toward},
                            passed=bool(decreasing and toward))


def sample_measure(c: float, M: int, P: int, spec, kind: str = "nu_n", count: int = 10_000,
                   seed: int = 0, keep: int = 1000) -> ExperimentReport:
    """Weighted draws of ``kind`` with standard expectations in the summary.

    The CSV lists the first ``keep`` members (index, log-weight, coefficients).
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    s = importance_sample(NoiseStream(seed, stream_id=REFERENCE_STREAM), c, M, P, spec, kind, count)
    cols = ["index", "log_weight"] + [f"c_{i}" for i in range(M + 1)]
    rows = [[i, float(s.log_weights[i])] + [float(v) for v in s.fields[i]]
            for i in range(min(keep, count))]
    est = {}
    for psi in (spatial_mean, neg_norm_sq, clipped_square, exceedance_mass(1.0)):
        est[getattr(psi, "__name__", "psi")] = list(expectation(s, psi))
    log_z = estimate_log_Z(s) if count >= 2 else float("nan")
    inside = float(np.mean(np.isfinite(s.log_weights)))
    return ExperimentReport("sample-measure", cols, rows,
                            {"kind": kind, "count": count, "ess": s.ess, "log_Z": log_z,
                             "finite_weight_fraction": inside, "expectations": est})
