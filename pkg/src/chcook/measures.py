"""Gibbs measures ``nu_c^n``, ``nu_c`` and importance sampling over ``mu_c``.

Draws from ``mu_c`` are weighted by ``exp(-U^n)`` (kind ``'nu_n'``) or by
``exp(-U) 1_K`` (kind ``'nu_limit'``), with ``U`` the midpoint quadrature
on ``P`` grid points and ``K`` decided on the same grid.  The
pseudo-spectral dynamics with the same ``P`` has exactly ``nu_c^n`` (with
this quadrature) as its invariant law, so both routes estimate the same
object.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .gaussian import LANE_MEASURE, NoiseStream, sample_mu_c
from .potential import PotentialSpec, potential_U
from .spectral import seminorm, synthesize

KINDS = ("mu_c", "nu_n", "nu_limit")


class DegenerateEnsemble(RuntimeError):
    """All importance weights vanish."""


@dataclass
class MeasureSample:
    """Weighted ensemble; ``fields`` is ``(count, M+1)`` and ``grid`` the
    synthesized values on ``P`` points."""

    fields: np.ndarray
    log_weights: np.ndarray
    kind: str
    P: int
    grid: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.grid is None:
            self.grid = synthesize(self.fields, self.P)

    @property
    def count(self) -> int:
        return self.fields.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Normalized weights (sum to one); zeros if degenerate."""
        lw = self.log_weights
        if not np.any(np.isfinite(lw)):
            return np.zeros_like(lw)
        return np.exp(lw - logsumexp(lw))

    @property
    def ess(self) -> float:
        w = self.weights
        s = np.sum(w**2)
        return float(1.0 / s) if s > 0 else 0.0


def log_weights(grid, spec: PotentialSpec, kind: str) -> np.ndarray:
    """Un-normalized log-density of ``kind`` relative to ``mu_c`` at grid samples."""
    grid = np.asarray(grid, dtype=float)
    if kind == "mu_c":
        return np.zeros(grid.shape[:-1])
    if kind == "nu_n":
        return -potential_U(grid, spec, mode="poly")
    if kind == "nu_limit":
        return -potential_U(grid, spec, mode="log")
    raise ValueError(f"kind must be one of {KINDS}")


def importance_sample(stream: NoiseStream, c: float, M: int, P: int, spec: PotentialSpec,
                      kind: str = "nu_n", count: int = 1000, chunk: int = 4096) -> MeasureSample:
    """Draw ``count`` members of ``mu_c`` and attach Gibbs log-weights.

    Members use counters ``stream.counter ..`` of the measure lane, so two
    calls with the same stream reuse the same draws (common random numbers
    across ``spec`` or ``kind``).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if P < M + 1:
        raise ValueError("P must be >= M+1")
    s = stream.with_lane(LANE_MEASURE)
    fields = np.empty((count, M + 1))
    grid = np.empty((count, P))
    lw = np.empty(count)
    for lo in range(0, count, chunk):
        k = min(chunk, count - lo)
        x = sample_mu_c(s.advance(lo), c, M, count=k)
        g = synthesize(x, P)
        fields[lo:lo + k] = x
        grid[lo:lo + k] = g
        lw[lo:lo + k] = log_weights(g, spec, kind)
    return MeasureSample(fields, lw, kind, P, grid)


def _values(sample: MeasureSample, psi) -> np.ndarray:
    v = np.asarray(psi(sample), dtype=float)
    if v.shape != (sample.count,):
        raise ValueError("observable must return one value per member")
    return v


def expectation(sample: MeasureSample, psi, ess_warn: float = 50.0):
    """Self-normalized estimate of ``E[psi]`` and its delta-method standard error.

    ``psi`` maps a :class:`MeasureSample` to one value per member (see the
    observable constructors below).
    """
    w = sample.weights
    if not np.any(w > 0):
        raise DegenerateEnsemble("all importance weights are zero")
    if sample.ess < ess_warn:
        warnings.warn(f"effective sample size {sample.ess:.1f} is small", RuntimeWarning,
                      stacklevel=2)
    v = _values(sample, psi)
    keep = w > 0
    # dividing by the weight sum makes constant observables exact
    est = float(np.sum(w[keep] * v[keep]) / np.sum(w[keep]))
    se = float(np.sqrt(np.sum(w[keep] ** 2 * (v[keep] - est) ** 2)))
    return est, se


def paired_difference(s1: MeasureSample, s2: MeasureSample, psi):
    """``E_1[psi] - E_2[psi]`` and its SE for two weightings of the same draws."""
    if s1.count != s2.count or not np.array_equal(s1.fields, s2.fields):
        raise ValueError("samples must share their draws")
    w1, w2 = s1.weights, s2.weights
    v = _values(s1, psi)
    e1, e2 = np.sum(w1 * v) / np.sum(w1), np.sum(w2 * v) / np.sum(w2)
    infl = w1 * (v - e1) - w2 * (v - e2)
    return float(e1 - e2), float(np.sqrt(np.sum(infl**2)))


def estimate_log_Z(sample: MeasureSample) -> float:
    """``log((1/count) sum exp(log_weight))``; ``-inf`` if every weight vanishes."""
    if sample.count < 2:
        raise ValueError("count must be >= 2")
    return float(logsumexp(sample.log_weights) - np.log(sample.count))


# -- observables ----------------------------------------------------------------
# Each takes a MeasureSample (or anything with ``fields`` and ``grid``) and
# returns one value per member.

def exceedance_mass(level: float = 1.0):
    """Grid fraction where ``|x| > level``."""
    def psi(s):
        return np.mean(np.abs(s.grid) > level, axis=-1)
    psi.__name__ = f"exceed_{level:g}"
    psi.sup_norm = 1.0
    return psi


def spatial_mean(s):
    return s.fields[:, 0]


def neg_norm_sq(s):
    """``|x|_{-1}^2``."""
    return seminorm(s.fields, -1.0) ** 2


def constant_one(s):
    return np.ones(s.fields.shape[0])


constant_one.sup_norm = 1.0
constant_one.lipschitz_m1 = 0.0


def clipped_square(s):
    """Grid mean of ``min(x^2, 1)``."""
    return np.mean(np.minimum(s.grid**2, 1.0), axis=-1)


clipped_square.sup_norm = 1.0


def gaussian_bump(scale: float = 10.0):
    """``exp(-scale |x|_{-1}^2)``."""
    def psi(s):
        return np.exp(-scale * seminorm(s.fields, -1.0) ** 2)
    psi.__name__ = f"bump_{scale:g}"
    psi.sup_norm = 1.0
    return psi


def tanh_mode(i: int = 1, gain: float = 2.0):
    """``tanh(gain * x_i)``; Lipschitz in ``|.|_{-1}`` with constant
    ``gain * i * pi`` since ``|h_i| <= i pi |h|_{-1}``."""
    def psi(s):
        return np.tanh(gain * s.fields[:, i])
    psi.__name__ = f"tanh_mode{i}"
    psi.sup_norm = 1.0
    psi.lipschitz_m1 = gain * i * np.pi
    return psi


class _View:
    """Minimal stand-in so observables can run on raw coefficient arrays."""

    def __init__(self, fields, P):
        self.fields = np.atleast_2d(fields)
        self.grid = synthesize(self.fields, P)


def evaluate(psi, fields, P: int) -> np.ndarray:
    """Apply an observable to a ``(count, M+1)`` coefficient array."""
    return np.asarray(psi(_View(fields, P)), dtype=float)


# -- weak convergence ---------------------------------------------------------------

@dataclass
class WeakConvergenceRow:
    n: int | None
    psi_id: str
    estimate: float
    se: float
    ess: float
    diff_prev: float = float("nan")
    diff_prev_se: float = float("nan")


def weak_convergence_report(c: float, M: int, P: int, lam: float, n_list, psi_list,
                            count: int, stream: NoiseStream | int = 0):
    """Estimates of ``nu^n[psi]`` along ``n_list`` and of ``nu_limit[psi]``.

    All weightings share the same ``mu_c`` draws, so successive differences
    come with paired standard errors (``diff_prev``, ``diff_prev_se``).
    Returns the rows and ``max |nu^{n_max}[psi] - nu_limit[psi]|``.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    if not isinstance(stream, NoiseStream):
        stream = NoiseStream(int(stream))
    base = importance_sample(stream, c, M, P, PotentialSpec(lam=lam), "mu_c", count)
    samples = []
    for n in n_list:
        spec = PotentialSpec(lam=lam, n=n)
        samples.append((n, MeasureSample(base.fields, log_weights(base.grid, spec, "nu_n"),
                                         "nu_n", P, base.grid)))
    lim = MeasureSample(base.fields, log_weights(base.grid, PotentialSpec(lam=lam), "nu_limit"),
                        "nu_limit", P, base.grid)
    samples.append((None, lim))
    rows = []
    gap = 0.0
    for psi in psi_list:
        name = getattr(psi, "__name__", "psi")
        prev = None
        for n, s in samples:
            est, se = expectation(s, psi)
            row = WeakConvergenceRow(n, name, est, se, s.ess)
            if prev is not None:
                row.diff_prev, row.diff_prev_se = paired_difference(s, prev, psi)
            rows.append(row)
            prev = s
        gap = max(gap, abs(rows[-2].estimate - rows[-1].estimate))
    return rows, gap


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "psi_id", "estimate", "se", "ess", "diff_prev", "diff_prev_se"])
    for r in rows:
        w.writerow(["inf" if r.n is None else r.n, r.psi_id, repr(r.estimate), repr(r.se),
                    repr(r.ess), repr(r.diff_prev), repr(r.diff_prev_se)])
    return buf.getvalue()
