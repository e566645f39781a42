"""Transition semigroup estimates: convergence in ``n`` and the strong Feller bound."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..dynamics import DIAG_NONE, SolverConfig, run_ensemble
from ..gaussian import LANE_MEASURE, NoiseStream, sample_mu_c
from ..measures import evaluate
from ..spectral import seminorm, synthesize
from .report import ExperimentReport


def _terminal(x, cfg, ids, phi_list, threads, chunk_size):
    """Observable values ``(E, len(phi_list))`` at ``cfg.T`` from ``x``."""
    x = np.asarray(x, dtype=float)
    if cfg.n_steps == 0:
        st = np.broadcast_to(x, (len(ids), x.size))
        return np.stack([evaluate(p, st, cfg.P) for p in phi_list], axis=-1)
    res = run_ensemble(x, cfg, ids, diag=DIAG_NONE, threads=threads, chunk_size=chunk_size)
    return np.stack([evaluate(p, res.final, cfg.P) for p in phi_list], axis=-1)


def semigroup_convergence(x, cfg: SolverConfig, phi_list, n_list, ensemble: int,
                          threads: int = 1, chunk_size: int = 64) -> ExperimentReport:
    """Monte-Carlo ``P^n_t phi(x)`` at ``t = cfg.T`` for each ``n``.

    Every ``n`` reuses stream ids ``0 .. ensemble-1`` so the successive gaps
    carry paired standard errors.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(synthesize(x, cfg.P)) > 1.0):
        raise ValueError("x must take values in [-1, 1] on the grid")
    cols = ["n", "psi_id", "estimate", "se", "gap_prev", "gap_prev_se"]
    rows = []
    prev = None
    for n in n_list:
        cfg_n = replace(cfg, spec=replace(cfg.spec, n=int(n)))
        v = _terminal(x, cfg_n, range(ensemble), phi_list, threads, chunk_size)
        for j, phi in enumerate(phi_list):
            est = v[:, j].mean()
            se = v[:, j].std(ddof=1) / math.sqrt(ensemble) if ensemble > 1 else float("nan")
            if prev is None:
                gap, gse = float("nan"), float("nan")
            else:
                d = v[:, j] - prev[:, j]
                gap = abs(d.mean())
                gse = d.std(ddof=1) / math.sqrt(ensemble) if ensemble > 1 else float("nan")
            rows.append([int(n), getattr(phi, "__name__", f"phi{j}"), est, se, gap, gse])
        prev = v
    gaps = [r[4] for r in rows if not math.isnan(r[4])]
    return ExperimentReport("semigroup", cols, rows,
                            {"t": cfg.T, "n_list": list(n_list), "max_gap": max(gaps, default=0.0)})


def strong_feller_bound(x, y, t: float, lam: float, sup_norm: float = 1.0) -> float:
    """``2 exp(lam^2 t / 4) / (lam sqrt(t)) * sup_norm * |x - y|_{-1}``; needs ``lam > 0``."""
    if lam <= 0:
        raise ValueError("the bound requires lambda > 0")
    if t <= 0:
        raise ValueError("t must be positive")
    d = float(seminorm(np.asarray(x, float) - np.asarray(y, float), -1.0))
    return 2.0 * math.exp(lam * lam * t / 4.0) / (lam * math.sqrt(t)) * sup_norm * d


def strong_feller_check(x, y, cfg: SolverConfig, phi_list, ensemble: int,
                        threads: int = 1, chunk_size: int = 64, pair_id: int = 0):
    """Compare ``|P_t phi(x) - P_t phi(y)|`` with the strong Feller envelope.

    The two expectations use independent ensembles.  A row passes iff the
    estimate is at most ``bound + 3 SE``.  A shared-noise run is added for
    observables exposing ``lipschitz_m1``; it is compared with
    ``Lip * exp(lam t) |x - y|_{-1}``, with a 1% allowance for the time
    step.  For ``lam <= 0`` only that contraction check is performed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if abs(x[0] - y[0]) > 1e-14:
        raise ValueError("x and y must have the same mean")
    lam, t = cfg.spec.lam, cfg.T
    d = float(seminorm(x - y, -1.0))
    base = 2 * pair_id * ensemble
    ids_x = range(base, base + ensemble)
    ids_y = range(base + ensemble, base + 2 * ensemble)
    vx = _terminal(x, cfg, ids_x, phi_list, threads, chunk_size)
    vy = _terminal(y, cfg, ids_y, phi_list, threads, chunk_size)
    vs = _terminal(y, cfg, ids_x, phi_list, threads, chunk_size)
    cols = ["pair", "psi_id", "t", "dist_m1", "estimate", "se", "bound", "pass",
            "shared_estimate", "shared_bound", "shared_pass"]
    rows = []
    ok = True
    for j, phi in enumerate(phi_list):
        est = abs(vx[:, j].mean() - vy[:, j].mean())
        se = math.sqrt(vx[:, j].var(ddof=1) / ensemble + vy[:, j].var(ddof=1) / ensemble)
        sup = getattr(phi, "sup_norm", None)
        if lam > 0 and sup is not None and t > 0:
            bound = strong_feller_bound(x, y, t, lam, sup)
            passed = est <= bound + 3.0 * se
        else:
            bound, passed = float("nan"), None
        shared = float(np.mean(np.abs(vx[:, j] - vs[:, j])))
        lip = getattr(phi, "lipschitz_m1", None)
        if lip is not None:
            sbound = lip * math.exp(lam * t) * d
            spass = shared <= sbound * 1.01
        else:
            sbound, spass = float("nan"), None
        for p in (passed, spass):
            if p is not None:
                ok &= bool(p)
        rows.append([pair_id, getattr(phi, "__name__", f"phi{j}"), t, d, est, se, bound,
                     passed, shared, sbound, spass])
    return ExperimentReport("strong-feller", cols, rows, {"lambda": lam, "t": t}, passed=ok)


def random_pairs(count: int, c: float, M: int, P: int, seed: int, sup: float = 1.0,
                 modes: int | None = None):
    """``count`` pairs of ``mu_c`` draws whose grid values stay in ``[-sup, sup]``.

    Draws are truncated to the first ``modes`` modes (default all) and
    rejected until inside; deterministic in ``seed``.
    """
    modes = M if modes is None else modes
    stream = NoiseStream(seed, stream_id=987_654_321, lane=LANE_MEASURE)
    out = []
    k = 0
    while len(out) < 2 * count:
        x = sample_mu_c(stream.at(k), c, M)
        k += 1
        c_ = np.asarray(x.coeffs).copy()
        c_[modes + 1:] = 0.0
        if np.max(np.abs(synthesize(c_, P))) <= sup:
            out.append(c_)
        if k > 100000:
            raise RuntimeError("rejection sampling did not terminate")
    return [(out[2 * i], out[2 * i + 1]) for i in range(count)]
