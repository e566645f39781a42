"""Neumann cosine basis on [0, 1].

Fields are stored as real coefficient vectors ``c[0..M]`` in the
orthonormal basis ``e_0 = 1``, ``e_i(x) = sqrt(2) cos(i pi x)``.  All
functions accept batches: the last axis always indexes modes (spectral
arrays) or grid points (grid arrays).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft


def eigenvalue(i):
    """Return ``a_i = (i pi)^2``, the i-th eigenvalue of ``-A``."""
    i = np.asarray(i)
    if np.any(i < 0):
        raise ValueError("mode index must be nonnegative")
    out = (np.pi * i.astype(float)) ** 2
    return float(out) if out.ndim == 0 else out


def eigenvalues(M: int) -> np.ndarray:
    """Eigenvalues ``a_0..a_M`` (``a_0 = 0``)."""
    return (np.pi * np.arange(M + 1, dtype=float)) ** 2


def grid_points(P: int) -> np.ndarray:
    """Midpoint grid ``(j + 1/2) / P``."""
    return (np.arange(P) + 0.5) / P


def basis_matrix(M: int, P: int) -> np.ndarray:
    """``(M+1, P)`` matrix of basis functions sampled on the midpoint grid."""
    theta = grid_points(P)
    out = np.sqrt(2.0) * np.cos(np.pi * np.outer(np.arange(M + 1), theta))
    out[0] = 1.0
    return out


def synthesize(coeffs, P: int) -> np.ndarray:
    """Evaluate a field on the ``P``-point midpoint grid."""
    c = np.asarray(coeffs, dtype=float)
    M1 = c.shape[-1]
    if P < M1:
        raise ValueError(f"grid too small: P={P} < M+1={M1}")
    pad = np.zeros(c.shape[:-1] + (P,))
    pad[..., :M1] = c
    return np.sqrt(P) * fft.idct(pad, type=2, norm="ortho", axis=-1)


def analyze(values, M: int) -> np.ndarray:
    """Discrete cosine analysis; inverse of :func:`synthesize` for ``M < P``."""
    g = np.asarray(values, dtype=float)
    P = g.shape[-1]
    if M + 1 > P:
        raise ValueError(f"cannot resolve M={M} modes from P={P} samples")
    return fft.dct(g, type=2, norm="ortho", axis=-1)[..., : M + 1] / np.sqrt(P)


def apply_A(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return -eigenvalues(c.shape[-1] - 1) * c


def apply_A_power(coeffs, gamma: float) -> np.ndarray:
    """``(-A)^gamma`` on the mean-zero part; the mean passes through unchanged."""
    c = np.asarray(coeffs, dtype=float)
    a = eigenvalues(c.shape[-1] - 1)
    scale = np.ones_like(a)
    scale[1:] = a[1:] ** gamma
    return scale * c


def scalar_product(h, g, gamma: float):
    """``(h, g)_gamma = sum_{i>=1} a_i^gamma h_i g_i``."""
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    a = eigenvalues(h.shape[-1] - 1)[1:]
    return np.sum(a**gamma * h[..., 1:] * g[..., 1:], axis=-1)


def seminorm(coeffs, gamma: float):
    """``|h|_gamma``; zero exactly on constants."""
    c = np.asarray(coeffs, dtype=float)
    return np.sqrt(scalar_product(c, c, gamma))


def norm(coeffs, gamma: float):
    """``||h||_gamma = (|h|_gamma^2 + mean^2)^(1/2)``."""
    c = np.asarray(coeffs, dtype=float)
    return np.sqrt(scalar_product(c, c, gamma) + c[..., 0] ** 2)


def q_weights(N: int, M: int) -> np.ndarray:
    """Per-mode weights of ``Q_N``: ``(N - i + 1) / N`` for ``i <= N``.

    The ``1/N`` prefactor is kept literally, so ``w_0 = (N + 1) / N``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    i = np.arange(M + 1)
    return np.where(i <= N, (N - i + 1) / N, 0.0)


def q_n(coeffs, N: int) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return q_weights(N, c.shape[-1] - 1) * c


def heat_factors(M: int, t: float) -> np.ndarray:
    """Per-mode factors ``exp(-a_i^2 t / 2)`` of ``exp(-t A^2 / 2)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return np.exp(-0.5 * eigenvalues(M) ** 2 * t)


def apply_heat_semigroup(coeffs, t: float) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return heat_factors(c.shape[-1] - 1, t) * c


def smoothing_sum(t: float, M: int) -> float:
    """Majorant ``s_M(t) = sum_{i=1}^M a_i exp(-a_i^2 t / 2)``.

    Note that ``s_M(t)`` grows like ``t^(-3/4)`` as ``t -> 0`` (see
    :func:`smoothing_sum_asymptote`); the ``t^(-1/2)`` rate belongs to the
    operator norm, computed by :func:`smoothing_operator_norm`.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    a = eigenvalues(M)[1:]
    return float(np.sum(a * np.exp(-0.5 * a**2 * t)))


def smoothing_sum_asymptote(t: float) -> float:
    """Small-``t`` limit of ``s_inf(t)``: ``2^(3/4) Gamma(3/4) / (4 pi) t^(-3/4)``."""
    from scipy.special import gamma

    return 2**0.75 * gamma(0.75) / (4 * np.pi) * t**-0.75


def smoothing_operator_norm(t: float, M: int, P: int) -> float:
    """Sup-norm operator norm of ``A exp(-t A^2 / 2)`` truncated to ``M`` modes.

    Computed as the maximal row sum of the discretized kernel on the
    ``P``-point midpoint grid (a quadrature of ``sup_x int |K(x, y)| dy``).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    B = basis_matrix(M, P)
    a = eigenvalues(M)
    kern = (B.T * (a * np.exp(-0.5 * a**2 * t))) @ B / P
    return float(np.max(np.sum(np.abs(kern), axis=1)))


@dataclass(frozen=True)
class SpectralField:
    """A field on [0, 1] given by its cosine coefficients ``c_0..c_M``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coeffs must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def mode(cls, i: int, M: int, amplitude: float = 1.0) -> "SpectralField":
        c = np.zeros(M + 1)
        c[i] = amplitude
        return cls(c)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coeffs, dtype=dtype)

    @property
    def M(self) -> int:
        return self.coeffs.size - 1

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])

    def synthesize(self, P: int) -> np.ndarray:
        return synthesize(self.coeffs, P)

    def seminorm(self, gamma: float) -> float:
        return float(seminorm(self.coeffs, gamma))

    def norm(self, gamma: float) -> float:
        return float(norm(self.coeffs, gamma))

    def __add__(self, other):
        return SpectralField(self.coeffs + _coeffs(other))

    def __sub__(self, other):
        return SpectralField(self.coeffs - _coeffs(other))

    def __mul__(self, s: float):
        return SpectralField(self.coeffs * s)

    __rmul__ = __mul__


def _coeffs(h) -> np.ndarray:
    return h.coeffs if isinstance(h, SpectralField) else np.asarray(h, dtype=float)
