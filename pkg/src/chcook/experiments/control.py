"""Irreducibility control: the path ``u`` between two states and its forcing ``g0``.

With ``u(t) = (t/T) y + (1 - t/T) x`` the forcing

    g0(., t) = int_0^theta [(y - x)/T + (1/2) A(A u + f(u))] dvartheta

makes ``u`` a solution of ``du/dt = -(1/2) A(A u + f(u)) + B g0``.  The
integrand is computed in the cosine basis (``f(u)`` by analysis on ``P``
points); its antiderivative is then the matching sine series, which
vanishes at both ends, so ``g0(., t)`` lies in the domain of ``B = d/dtheta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..dynamics import DIAG_NONE, ExactNoise, ForcedNoise, SolverConfig, run_ensemble
from ..potential import PotentialSpec, f_delta, f_log
from ..spectral import (
    analyze,
    eigenvalue,
    eigenvalues,
    grid_points,
    seminorm,
    smoothing_operator_norm,
    smoothing_sum,
    synthesize,
)
from .report import ExperimentReport


class ControlOutOfRange(ValueError):
    """End states violate the sup-norm precondition."""


def _pad(c, n):
    out = np.zeros(n)
    c = np.asarray(c, dtype=float)
    out[:c.size] = c[:n]
    return out


def _sup(c, points: int = 2048) -> float:
    return float(np.max(np.abs(synthesize(c, max(points, len(c))))))


@dataclass
class ControlPath:
    """Linear interpolation ``u`` and the forcing that makes it a solution.

    ``drift`` is ``'log'`` for ``f`` or ``'delta'`` for ``f_delta``; they
    coincide along ``u`` when the precondition holds.
    """

    x: np.ndarray
    y: np.ndarray
    T: float
    P: int
    spec: PotentialSpec
    drift: str = "log"

    def u(self, t: float) -> np.ndarray:
        s = t / self.T
        n = max(self.x.size, self.y.size)
        return s * _pad(self.y, n) + (1 - s) * _pad(self.x, n)

    def r_coeffs(self, t: float, M: int | None = None) -> np.ndarray:
        """Cosine coefficients of ``(y - x)/T + (1/2) A(A u + f(u))`` (modes ``0..M``)."""
        P = self.P
        M = P - 1 if M is None else M
        n = max(self.x.size, self.y.size)
        if P < n:
            raise ValueError("P must be at least the number of modes of x and y")
        u = _pad(self.u(t), P)
        fn = f_log if self.drift == "log" else f_delta
        F = analyze(fn(synthesize(u, P), self.spec), P - 1)
        a = eigenvalues(P - 1)
        r = (_pad(self.y, P) - _pad(self.x, P)) / self.T + 0.5 * (a * a * u - a * F)
        r[0] = 0.0
        return _pad(r, M + 1)

    def g0(self, t: float, theta) -> np.ndarray:
        """``g0(theta, t)`` from the sine series of the integrand."""
        r = self.r_coeffs(t)
        i = np.arange(1, r.size)
        theta = np.asarray(theta, dtype=float)
        S = np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(theta, i)) / (np.pi * i)
        return S @ r[1:]

    def Bg0(self, t: float, theta) -> np.ndarray:
        """``d g0 / d theta``: the integrand truncated to ``P`` cosine modes."""
        r = self.r_coeffs(t)
        i = np.arange(1, r.size)
        theta = np.asarray(theta, dtype=float)
        C = np.sqrt(2.0) * np.cos(np.pi * np.multiply.outer(theta, i))
        return C @ r[1:]


def build_control(x, y, T: float, P: int, spec: PotentialSpec, n_times: int = 11,
                  drift: str = "log") -> ControlPath:
    """Control path between band-limited ``x`` and ``y`` with equal means.

    Raises :class:`ControlOutOfRange` unless ``sup |x|, sup |y| <= 1 - delta``.
    The returned object carries ``times``, ``u_grid`` and ``g0_grid``
    sampled on ``n_times`` times and the ``P`` midpoints.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if T <= 0:
        raise ValueError("T must be positive")
    if abs(x[0] - y[0]) > 1e-14:
        raise ValueError("x and y must have the same mean")
    lim = 1.0 - spec.delta
    for name, v in (("x", x), ("y", y)):
        if _sup(v) > lim:
            raise ControlOutOfRange(f"sup|{name}| = {_sup(v):.4g} exceeds 1 - delta = {lim:.4g}")
    path = ControlPath(x, y, float(T), int(P), spec, drift)
    theta = grid_points(P)
    path.times = np.linspace(0.0, T, n_times)
    path.u_grid = np.stack([synthesize(_pad(path.u(t), P), P) for t in path.times])
    path.g0_grid = np.stack([path.g0(t, theta) for t in path.times])
    return path


def exact_integrand(path: ControlPath, t: float, theta) -> np.ndarray:
    """``du/dt + (1/2) A(A u + f(u))`` by pointwise differentiation of ``u``.

    Uses ``(f(u))'' = f''(u) u'^2 + f'(u) u''`` with ``u`` differentiated
    term by term; independent of ``P``.
    """
    theta = np.asarray(theta, dtype=float)
    u = path.u(t)
    i = np.arange(u.size)
    k = np.pi * i
    arg = np.multiply.outer(theta, k)
    cos, sin = np.sqrt(2.0) * np.cos(arg), np.sqrt(2.0) * np.sin(arg)
    uu = u[0] + cos[:, 1:] @ u[1:]
    d1 = -(sin * k) @ u
    d2 = -(cos * k**2)[:, 1:] @ u[1:]
    d4 = (cos * k**4)[:, 1:] @ u[1:]
    lam = path.spec.lam
    fp = lam - 2.0 / (1.0 - uu**2)
    fpp = -4.0 * uu / (1.0 - uu**2) ** 2
    n = max(path.x.size, path.y.size)
    dudt = synthesize_points((_pad(path.y, n) - _pad(path.x, n)) / path.T, theta)
    return dudt + 0.5 * (d4 + fpp * d1**2 + fp * d2)


def synthesize_points(c, theta) -> np.ndarray:
    """Cosine series evaluated at arbitrary points."""
    c = np.asarray(c, dtype=float)
    arg = np.multiply.outer(np.asarray(theta, dtype=float), np.pi * np.arange(1, c.size))
    return c[0] + (np.sqrt(2.0) * np.cos(arg)) @ c[1:]


def control_residual(x, y, T: float, spec: PotentialSpec, P_list, n_times: int = 5,
                     n_eval: int = 1001, floor: float = 1e-10) -> ExperimentReport:
    """Sup-norm residual ``|du/dt + (1/2)A(Au + f(u)) - B g0|`` per resolution ``P``.

    Evaluated on ``n_eval`` midpoints and ``n_times`` times.  Passes when each
    doubling of ``P`` reduces the residual at least tenfold, unless the
    residual is already below ``floor``.
    """
    theta = (np.arange(n_eval) + 0.5) / n_eval
    times = np.linspace(0.0, T, n_times)
    cols = ["P", "residual", "ratio_prev"]
    rows = []
    prev = None
    ok = True
    for P in P_list:
        path = build_control(x, y, T, P, spec, n_times=2)
        res = max(float(np.max(np.abs(exact_integrand(path, t, theta) - path.Bg0(t, theta))))
                  for t in times)
        ratio = prev / res if prev is not None and res > 0 else float("nan")
        if prev is not None and prev > floor and not ratio >= 10.0:
            ok = False
        rows.append([int(P), res, ratio])
        prev = res
    return ExperimentReport("control", cols, rows, {"T": T, "floor": floor}, passed=ok)


def _control_forcing(path: ControlPath, M: int, dt: float):
    """Per-step forcing ``int e^{-(t_{k+1}-s)A^2/2} B g0(s) ds`` (midpoint in ``s``)."""
    a = eigenvalues(M)
    phi = np.zeros(M + 1)
    phi[1:] = -np.expm1(-0.5 * a[1:] ** 2 * dt) / (0.5 * a[1:] ** 2)
    cache = {}

    def forcing(start, count):
        out = np.empty((count, M + 1))
        for j in range(count):
            k = start + j
            if k not in cache:
                cache[k] = phi * path.r_coeffs((k + 0.5) * dt, M)
            out[j] = cache[k]
        return out

    return forcing


def steering_check(x, y, cfg: SolverConfig, noise_scales, ensemble: int = 64,
                   radius: float | None = None, record_every: int = 1,
                   threads: int = 1) -> ExperimentReport:
    """Simulate the truncated-drift system steered by ``B g0`` plus scaled noise.

    Uses ``f_delta`` in place of ``f``; ``cfg.T`` is the steering horizon.
    For each noise scale, reports the fraction of members whose path stays
    within ``radius`` (default ``delta / 2``) of ``u`` in sup norm on the
    grid at the recorded times, and the mean ``|X(T) - y|_{-1}``.
    """
    x = _pad(x, cfg.M + 1)
    y = _pad(y, cfg.M + 1)
    cfg = replace(cfg, drift="delta", burn_in=0.0, c=float(x[0]))
    radius = cfg.spec.delta / 2 if radius is None else radius
    path = build_control(x, y, cfg.T, cfg.P, cfg.spec, n_times=2, drift="delta")
    forcing = _control_forcing(path, cfg.M, cfg.dt)
    steps = np.arange(0, cfg.n_steps + 1, record_every)
    if steps[-1] != cfg.n_steps:
        steps = np.append(steps, cfg.n_steps)
    u_grid = np.stack([synthesize(path.u(s * cfg.dt), cfg.P) for s in steps])
    cols = ["noise_scale", "hit_fraction", "mean_sup_dev", "max_sup_dev", "mean_final_dist_m1"]
    rows = []
    for scale in noise_scales:
        base = ExactNoise(cfg.M, cfg.dt, cfg.seed, scale) if scale > 0 else None
        noise = ForcedNoise(base, forcing)
        E = ensemble if scale > 0 else 1
        res = run_ensemble(x, replace(cfg, noise_scale=scale), range(E), record_steps=steps,
                           diag=DIAG_NONE, noise=noise, threads=threads)
        dev = np.max(np.abs(synthesize(res.records, cfg.P) - u_grid), axis=(1, 2))
        fin = seminorm(res.final - y, -1.0)
        rows.append([float(scale), float(np.mean(dev <= radius)), float(dev.mean()),
                     float(dev.max()), float(fin.mean())])
    return ExperimentReport("steering", cols, rows, {"radius": radius, "T": cfg.T,
                                                      "eigenvalue_1": eigenvalue(1)})


def smoothing_check(M_pair=(64, 128), k_max: int = 8, tol: float = 0.01,
                    operator_P: int | None = None) -> ExperimentReport:
    """``sqrt(t) s_M(t)`` on ``t = 4^-k`` for two truncations.

    Passes iff ``sup_t sqrt(t) s_M(t)`` changes by less than ``tol``
    (relative) between the two values of ``M``.  With ``operator_P`` set the
    rows also carry ``sqrt(t)`` times the sup-norm operator norm of
    ``A exp(-t A^2 / 2)`` at the larger ``M``.
    """
    m1, m2 = M_pair
    ts = [4.0**-k for k in range(k_max + 1)]
    cols = ["t", f"scaled_sum_M{m1}", f"scaled_sum_M{m2}", "rel_change", "scaled_operator_norm"]
    rows = []
    for t in ts:
        s1 = math.sqrt(t) * smoothing_sum(t, m1)
        s2 = math.sqrt(t) * smoothing_sum(t, m2)
        op = math.sqrt(t) * smoothing_operator_norm(t, m2, operator_P) if operator_P \
            else float("nan")
        rows.append([t, s1, s2, abs(s2 - s1) / s2, op])
    sup1 = max(r[1] for r in rows)
    sup2 = max(r[2] for r in rows)
    change = abs(sup2 - sup1) / sup2
    return ExperimentReport("smoothing", cols, rows,
                            {"sup_scaled_sum": [sup1, sup2], "rel_change": change, "tol": tol},
                            passed=bool(change < tol))
