"""Conservative noise, stochastic convolution and the Gaussian measure mu_c.

Randomness comes from :class:`NoiseStream`, a counter-based contract on top
of numpy's Philox generator: the standard normals attached to
``(master_seed, stream_id, lane, counter)`` are a pure function of those
four integers, so ensembles can be split across workers in any order and
still reproduce bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .spectral import SpectralField, eigenvalues, heat_factors

#: Counters per Philox instantiation.
CHUNK = 256

#: Independent sub-streams of one stream id.
LANE_CONVOLUTION = 0
LANE_BROWNIAN = 1
LANE_MEASURE = 2
LANE_CONTROL = 3


@dataclass(frozen=True)
class NoiseStream:
    """Address of a reproducible sequence of Gaussian vectors.

    ``counter`` is the step (or sample) index; ``lane`` separates
    independent uses of the same ``stream_id``.
    """

    master_seed: int
    stream_id: int = 0
    counter: int = 0
    lane: int = LANE_CONVOLUTION

    def at(self, counter: int) -> "NoiseStream":
        return replace(self, counter=counter)

    def advance(self, k: int = 1) -> "NoiseStream":
        return replace(self, counter=self.counter + k)

    def with_lane(self, lane: int) -> "NoiseStream":
        return replace(self, lane=lane)

    def normals(self, size: int) -> np.ndarray:
        """The ``size`` standard normals at the current counter."""
        return normal_block(self.master_seed, self.stream_id, self.counter, 1, size, self.lane)[0]

    def block(self, count: int, size: int) -> np.ndarray:
        """Rows for counters ``counter .. counter + count - 1``."""
        return normal_block(self.master_seed, self.stream_id, self.counter, count, size, self.lane)


def _generator(seed: int, stream_id: int, lane: int, chunk: int) -> np.random.Generator:
    key = np.array([seed % 2**64, stream_id % 2**64], dtype=np.uint64)
    counter = np.array([0, 0, chunk, lane], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normal_block(seed: int, stream_id: int, start: int, count: int, size: int,
                 lane: int = LANE_CONVOLUTION) -> np.ndarray:
    """``(count, size)`` standard normals for counters ``start .. start+count-1``."""
    if start < 0 or count < 0:
        raise ValueError("counters must be nonnegative")
    out = np.empty((count, size))
    pos = 0
    while pos < count:
        c = start + pos
        chunk, row = divmod(c, CHUNK)
        take = min(CHUNK - row, count - pos)
        rows = _generator(seed, stream_id, lane, chunk).standard_normal((CHUNK, size))
        out[pos:pos + take] = rows[row:row + take]
        pos += take
    return out


def noise_std(M: int, dt: float) -> np.ndarray:
    """Per-mode standard deviation of the increment of ``B W`` over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.sqrt(eigenvalues(M) * dt)


def convolution_variance(M: int, dt: float) -> np.ndarray:
    """Exact per-mode variance ``(1 - exp(-a_i^2 dt)) / a_i`` of the stochastic
    convolution over one step; mode 0 is zero."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = eigenvalues(M)
    out = np.zeros(M + 1)
    out[1:] = -np.expm1(-a[1:] ** 2 * dt) / a[1:]
    return out


def brownian_coupling(M: int, dt: float):
    """Coefficients linking the convolution increment and the ``B dW`` increment.

    With ``z1, z2`` independent standard normals per mode, the convolution
    increment is ``s * z1`` and the driving increment over the same step is
    ``r * z1 + q * z2``; the pair has the exact joint law of
    ``(int e^{-(dt-s)A^2/2} B dW_s, int B dW_s)``.
    """
    a = eigenvalues(M)
    s = np.sqrt(convolution_variance(M, dt))
    cov = np.zeros(M + 1)
    cov[1:] = -2.0 * np.expm1(-0.5 * a[1:] ** 2 * dt) / a[1:]
    r = np.divide(cov, s, out=np.zeros(M + 1), where=s > 0)
    q = np.sqrt(np.clip(a * dt - r**2, 0.0, None))
    return s, r, q


def noise_increment(stream: NoiseStream, dt: float, M: int) -> SpectralField:
    """Increment of ``B W`` over ``dt``: mode ``i`` ~ N(0, a_i dt), mode 0 = 0."""
    z = stream.normals(M)
    c = np.zeros(M + 1)
    c[1:] = noise_std(M, dt)[1:] * z
    return SpectralField(c)


def convolution_increment(stream: NoiseStream, dt: float, M: int) -> SpectralField:
    """One-step stochastic convolution, exact in law."""
    z = stream.normals(M)
    c = np.zeros(M + 1)
    c[1:] = np.sqrt(convolution_variance(M, dt))[1:] * z
    return SpectralField(c)


def sample_mu_c(stream: NoiseStream, c: float, M: int, count: int | None = None):
    """Draw from ``mu_c = N(c e_0, (-A)^{-1})``.

    Returns a :class:`SpectralField` when ``count`` is None, otherwise a
    ``(count, M+1)`` array using counters ``stream.counter ..``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = 1 if count is None else count
    z = stream.block(n, M)
    out = np.empty((n, M + 1))
    out[:, 0] = c
    out[:, 1:] = z / (np.pi * np.arange(1, M + 1))
    return SpectralField(out[0]) if count is None else out


def linear_solution_step(x, stream: NoiseStream, dt: float) -> SpectralField:
    """Advance the linear equation exactly: ``e^{-dt A^2/2} x`` plus convolution."""
    x = np.asarray(x, dtype=float)
    M = x.size - 1
    return SpectralField(heat_factors(M, dt) * x + convolution_increment(stream, dt, M).coeffs)
