"""Logarithmic drift, its polynomial truncations and the associated potentials.

``f(x) = ln((1 - x) / (1 + x)) + lam x`` on (-1, 1) and the odd
polynomials ``f^n(x) = -2 sum_{k<=n} x^(2k+1) / (2k+1) + lam x`` that
converge to it.  ``F`` and ``F^n`` are antiderivatives of ``-f`` and
``-f^n``.

The scalar functions accept numpy arrays and also ``mpmath.mpf`` scalars,
which is how the high-precision convergence checks are run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import xlogy

from .spectral import SpectralField, synthesize


class SingularInput(ValueError):
    """Argument outside the domain of the logarithmic potential."""


@dataclass(frozen=True)
class PotentialSpec:
    """Parameters of the drift.

    Attributes
    ----------
    lam : float
        Linear coefficient ``lambda``.
    n : int
        Truncation index of ``f^n``.
    eps_clip : float
        Distance from +-1 used when ``clip`` is on.
    delta : float
        Half-gap of the Lipschitz truncation ``f_delta``: it equals ``f``
        on ``[-1 + delta/2, 1 - delta/2]``.
    clip : bool
        Clip log-mode arguments to ``[-1 + eps_clip, 1 - eps_clip]``
        instead of raising :class:`SingularInput`.
    """

    lam: float = 0.0
    n: int = 1
    eps_clip: float = 1e-12
    delta: float = 0.5
    clip: bool = False

    def __post_init__(self):
        if not (0 < self.eps_clip <= 1e-3):
            raise ValueError("eps_clip must lie in (0, 1e-3]")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("n must be a nonnegative integer")

    @property
    def edge(self) -> float:
        """Right end ``1 - delta/2`` of the window where ``f_delta = f``."""
        return 1.0 - 0.5 * self.delta

    def poly_coefficients(self) -> np.ndarray:
        """Coefficients ``b_k`` with ``f^n(x) = x sum_k b_k x^(2k)``."""
        b = -2.0 / (2.0 * np.arange(self.n + 1) + 1.0)
        b[0] += self.lam
        return b


def _is_mp(x) -> bool:
    return isinstance(x, (mpmath.mpf, mpmath.mpc))


def _guard(x, spec: PotentialSpec, closed: bool):
    """Apply the singularity policy; returns the (possibly clipped) argument."""
    if _is_mp(x):
        bad = abs(x) > 1 if closed else abs(x) >= 1
        if bad:
            raise SingularInput(f"|x| = {x} outside the domain")
        return x
    x = np.asarray(x, dtype=float)
    bad = np.abs(x) > 1 if closed else np.abs(x) >= 1
    if np.any(bad) or np.any(np.isnan(x)):
        if not spec.clip:
            raise SingularInput("argument outside (-1, 1); enable clip to saturate")
        lim = 1.0 - spec.eps_clip
        x = np.clip(x, -lim, lim)
    return x


def f_log(x, spec: PotentialSpec):
    """``ln((1 - x) / (1 + x)) + lam x`` on (-1, 1)."""
    x = _guard(x, spec, closed=False)
    if _is_mp(x):
        return mpmath.log((1 - x) / (1 + x)) + spec.lam * x
    return np.log1p(-x) - np.log1p(x) + spec.lam * x


def f_log_prime(x, spec: PotentialSpec):
    x = _guard(x, spec, closed=False)
    return spec.lam - 2.0 / (1.0 - x * x)


def big_f(x, spec: PotentialSpec):
    """``(1+x) ln(1+x) + (1-x) ln(1-x) - lam x^2 / 2`` on [-1, 1], with ``0 ln 0 = 0``."""
    x = _guard(x, spec, closed=True)
    if _is_mp(x):
        t = lambda y: 0 if y == 0 else y * mpmath.log(y)  # noqa: E731
        return t(1 + x) + t(1 - x) - spec.lam * x * x / 2
    return xlogy(1.0 + x, 1.0 + x) + xlogy(1.0 - x, 1.0 - x) - 0.5 * spec.lam * x * x


def f_n(x, spec: PotentialSpec):
    """Polynomial drift ``f^n``; defined on all of R."""
    if not _is_mp(x):
        x = np.asarray(x, dtype=float)
    two = mpmath.mpf(2) if _is_mp(x) else 2.0
    x2 = x * x
    s = 0
    for k in range(spec.n, -1, -1):
        s = s * x2 - two / (2 * k + 1)
    return s * x + spec.lam * x


def f_n_prime(x, spec: PotentialSpec):
    x = np.asarray(x, dtype=float)
    x2 = x * x
    s = np.zeros_like(x)
    for _ in range(spec.n + 1):
        s = s * x2 - 2.0
    return s + spec.lam


def big_f_n(x, spec: PotentialSpec):
    """``F^n(x) = 2 sum_{k<=n} x^(2k+2) / ((2k+2)(2k+1)) - lam x^2 / 2``."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    s = np.zeros_like(x)
    for k in range(spec.n, -1, -1):
        s = s * x2 + 2.0 / ((2 * k + 2) * (2 * k + 1))
    return s * x2 - 0.5 * spec.lam * x2


def f_delta(x, spec: PotentialSpec):
    """Lipschitz truncation of ``f``: exact on the window, linear outside it."""
    x = np.asarray(x, dtype=float)
    e = spec.edge
    fe = math.log((1 - e) / (1 + e)) + spec.lam * e
    se = spec.lam - 2.0 / (1 - e * e)
    inside = np.abs(x) <= e
    xi = np.where(inside, x, 0.0)
    out = np.log1p(-xi) - np.log1p(xi) + spec.lam * xi
    out = np.where(x > e, fe + se * (x - e), out)
    return np.where(x < -e, -fe + se * (x + e), out)


def f_delta_lipschitz(spec: PotentialSpec) -> float:
    """Global Lipschitz constant of :func:`f_delta`."""
    e = spec.edge
    return max(abs(spec.lam - 2.0), abs(spec.lam - 2.0 / (1 - e * e)))


def potential_U(h, spec: PotentialSpec, mode: str = "log", P: int | None = None):
    """Midpoint quadrature of ``F`` (``mode='log'``) or ``F^n`` (``mode='poly'``).

    ``h`` is either a :class:`SpectralField` (``P`` required) or an array of
    grid values whose last axis is the grid.  In log mode a sample outside
    [-1, 1] yields ``+inf``.
    """
    if isinstance(h, SpectralField):
        if P is None:
            raise ValueError("P is required for spectral input")
        g = h.synthesize(P)
    else:
        g = np.asarray(h, dtype=float)
    if mode == "poly":
        return np.mean(big_f_n(g, spec), axis=-1)
    if mode != "log":
        raise ValueError(f"unknown mode {mode!r}")
    outside = np.any(np.abs(g) > 1.0, axis=-1)
    vals = big_f(np.clip(g, -1.0, 1.0), spec)
    return np.where(outside, np.inf, np.mean(vals, axis=-1))


def potential_U_coeffs(coeffs, spec: PotentialSpec, P: int, mode: str = "poly"):
    """:func:`potential_U` for (batched) coefficient arrays."""
    return potential_U(synthesize(coeffs, P), spec, mode)


def map_psi(u, theta: float, theta_c: float):
    """Double-logarithmic nonlinearity ``(theta/2) ln((1+u)/(1-u)) - theta_c u``."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) >= 1):
        raise SingularInput("|u| must be < 1")
    return 0.5 * theta * (np.log1p(u) - np.log1p(-u)) - theta_c * u


def lam_from_temperatures(theta: float, theta_c: float) -> float:
    """``lam = 2 theta_c / theta``, for which ``psi = -(theta/2) f``."""
    return 2.0 * theta_c / theta
