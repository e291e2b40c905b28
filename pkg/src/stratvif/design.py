"""Patient accrual and two-arm treatment allocation."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .distributions import RngStream

DEFAULT_BLOCK_SIZE = 4


class Design(str, Enum):
    RANDOMIZED = "randomized"
    STRATIFIED = "stratified"


def stratum_of(x: float, predicted_median: float = 0.0) -> int:
    """-1 below the predicted median, +1 otherwise (ties go up)."""
    return -1 if x < predicted_median else 1


def strata_of(x, predicted_median: float = 0.0) -> np.ndarray:
    return np.where(np.asarray(x) < predicted_median, -1, 1)


@dataclass(frozen=True)
class PatientStream:
    """Covariate values in accrual order plus the median used for stratifying."""

    x: np.ndarray
    predicted_median: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise ValueError("covariates must be one-dimensional")
        if x.size < 4 or x.size % 2:
            raise ValueError(f"need an even number of patients >= 4, got {x.size}")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "x", x)

    def __len__(self):
        return self.x.size

    @property
    def strata(self) -> np.ndarray:
        return strata_of(self.x, self.predicted_median)


@dataclass(frozen=True)
class Allocation:
    arms: np.ndarray
    scheme: Design
    block_size: int | None = None
    strata: np.ndarray | None = None

    def counts(self) -> tuple[int, int]:
        return int(np.sum(self.arms == 1)), int(np.sum(self.arms == 2))


def allocate_complete(n_total: int, stream: RngStream, patients: PatientStream | None = None) -> Allocation:
    """Uniform draw among all equal splits of ``n_total`` patients."""
    if n_total < 4 or n_total % 2:
        raise ValueError(f"N must be even and >= 4, got {n_total}")
    arms = stream.permutation(np.repeat(np.array([1, 2]), n_total // 2))
    strata = patients.strata if patients is not None else None
    return Allocation(arms=arms, scheme=Design.RANDOMIZED, strata=strata)


def permuted_blocks(count: int, block_size: int, stream: RngStream) -> np.ndarray:
    """First ``count`` arms from consecutive shuffled blocks of 1s and 2s."""
    if count == 0:
        return np.empty(0, dtype=int)
    n_blocks = -(-count // block_size)
    order = np.argsort(stream.uniform((n_blocks, block_size)), axis=1)
    arms = np.where(order < block_size // 2, 1, 2)
    return arms.ravel()[:count]


def allocate_stratified(
    patients: PatientStream, block_size: int = DEFAULT_BLOCK_SIZE, stream: RngStream | None = None
) -> Allocation:
    """Permuted blocks within the two median strata.

    Patients join their stratum's current block in accrual order, so the last
    block of each stratum may be incomplete. The lower stratum's blocks are
    drawn from the stream first.
    """
    if block_size < 2 or block_size % 2:
        raise ValueError(f"block size must be even and >= 2, got {block_size}")
    if stream is None:
        raise ValueError("a random stream is required")
    strata = patients.strata
    arms = np.empty(len(patients), dtype=int)
    for s in (-1, 1):
        idx = np.flatnonzero(strata == s)
        arms[idx] = permuted_blocks(idx.size, block_size, stream)
    return Allocation(arms=arms, scheme=Design.STRATIFIED, block_size=block_size, strata=strata)
