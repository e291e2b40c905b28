"""Random streams and exact moments of the standard Normal and its half at zero.

The truncation point is fixed at zero, the median of the standard Normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1

# Beyond this order exact integer arithmetic is replaced by log-gamma.
_EXACT_MAX_ORDER = 60


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's Philox generator with the 128-bit key built from the two
    64-bit words, so every replicate owns an independent sequence that does not
    depend on how replicates are scheduled across workers.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        key = self.seed | (self.stream_id << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)

    def permutation(self, x):
        return self._gen.permutation(x)


def sample_standard_normal(stream: RngStream) -> float:
    return float(stream.standard_normal())


def sample_truncated_normal(stream: RngStream, size=None):
    """Draws from the standard Normal truncated to the positive half-line."""
    return np.abs(stream.standard_normal(size))


def double_factorial(k: int) -> int:
    """``k!!`` with the conventions ``0!! = (-1)!! = 1``.

    Exact (arbitrary precision). Converting a huge result to float raises
    ``OverflowError``.
    """
    if k < -1:
        raise ValueError(f"double factorial undefined for k={k}")
    out = 1
    for j in range(k, 1, -2):
        out *= j
    return out


def log_double_factorial_odd(k: int) -> float:
    # k odd: k!! = k! / (2^((k-1)/2) ((k-1)/2)!)
    h = (k - 1) // 2
    return math.lgamma(k + 1) - h * math.log(2.0) - math.lgamma(h + 1)


def normal_moment(m: int) -> float:
    """E[X^m] for X standard Normal."""
    if m < 0:
        raise ValueError("moment order must be non-negative")
    if m % 2:
        return 0.0
    if m <= _EXACT_MAX_ORDER:
        return float(double_factorial(m - 1))
    return math.exp(log_double_factorial_odd(m - 1))


def log_truncated_moment(m: int) -> float:
    """Natural log of :func:`truncated_moment`; finite for any order."""
    if m < 0:
        raise ValueError("moment order must be non-negative")
    if m % 2:
        h = (m - 1) // 2
        return 0.5 * m * math.log(2.0) + math.lgamma(h + 1) - 0.5 * math.log(math.pi)
    # 2^(-m/2) m! / (m/2)!
    return -0.5 * m * math.log(2.0) + math.lgamma(m + 1) - math.lgamma(m // 2 + 1)


def truncated_moment(m: int) -> float:
    """E[X_t^m] for X_t the standard Normal truncated at zero.

    Odd orders: ``2^(m/2) ((m-1)/2)! / sqrt(pi)``.
    Even orders: ``2^(-m/2) m! / (m/2)!``, which equals ``(m-1)!!``.

    Raises ``OverflowError`` when the value exceeds double range.
    """
    if m < 0:
        raise ValueError("moment order must be non-negative")
    if m > _EXACT_MAX_ORDER:
        return math.exp(log_truncated_moment(m))
    if m % 2:
        h = (m - 1) // 2
        return float(2**h * math.factorial(h)) * math.sqrt(2.0 / math.pi)
    return float(math.factorial(m) // (2 ** (m // 2) * math.factorial(m // 2)))


def truncated_variance() -> float:
    """Variance of the standard Normal truncated at zero, ``1 - 2/pi``."""
    return 1.0 - 2.0 / math.pi
