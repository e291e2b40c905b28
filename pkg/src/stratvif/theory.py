"""Closed-form results: expected VIFs, t-variance penalties, precision curves,
confounding probability and stratum-indicator correlations with powers of X.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .design import Design
from .distributions import (
    log_double_factorial_odd,
    log_truncated_moment,
    normal_moment,
    truncated_variance,
)
from .errors import DomainError, SingularDesign
from .linmod import Model

COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class VifTheory:
    total_n: int
    design: Design
    model: Model
    k: int
    expected_vif: float
    is_approximation: bool


@dataclass(frozen=True)
class PrecisionCurvePoint:
    rho: float
    raw_factor: float
    ancova_factor: float
    change_score_factor: float


@dataclass(frozen=True)
class CorrelationTableRow:
    power: int
    simple_corr: float
    partial_corr_given_X: float
    degenerate: bool = False


def expected_vif_randomized(n_total: int, k: int) -> float:
    """Expected VIF for ``k`` Normal covariates under complete randomisation.

    ``1 + k / (N - k - 3)``; for ``k = 1`` this is ``(N - 3) / (N - 4)``.
    """
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    if n_total <= k + 3:
        raise DomainError(f"need N > k + 3, got N={n_total}, k={k}")
    return 1.0 + k / (n_total - k - 3)


def expected_vif_stratified(n_total: int, model) -> float:
    """Expected VIF after median stratification.

    Model B uses the truncated-Normal heuristic ``1 + (1 - 2/pi)/(N - 4)``,
    which is only approximate. Model D gives ``1 + 1/(N - 5)``.
    """
    model = Model(model)
    if n_total <= 5:
        raise DomainError(f"need N > 5, got {n_total}")
    if model is Model.B:
        return 1.0 + truncated_variance() / (n_total - 4)
    if model is Model.D:
        return 1.0 + 1.0 / (n_total - 5)
    raise DomainError(f"stratified formula covers models B and D, got {model.value}")


def expected_vif(n_total: int, design, model) -> VifTheory:
    """Theory value matching a (design, model) scenario cell."""
    design, model = Design(design), Model(model)
    k = model.n_covariates
    if model is Model.A:
        value, approx = 1.0, False
    elif design is Design.RANDOMIZED:
        value = expected_vif_randomized(n_total, k)
        # binary stratum column breaks the Normal-covariate derivation
        approx = model.has_stratum
    elif model is Model.C:
        # balanced by design only when every block completes
        value, approx = 1.0, True
    else:
        value = expected_vif_stratified(n_total, model)
        approx = model is Model.B
    return VifTheory(n_total, design, model, k, value, approx)


def t_variance(nu: int) -> float:
    """Variance of Student's t with ``nu`` degrees of freedom."""
    if nu < 3:
        raise DomainError(f"t variance needs nu >= 3, got {nu}")
    return nu / (nu - 2)


def second_order_ratio(n_total: int, model) -> float:
    """t variance at the model's residual dof relative to model A's."""
    model = Model(model)
    return t_variance(n_total - model.rank) / t_variance(n_total - Model.A.rank)


def precision_curves(rho: float) -> PrecisionCurvePoint:
    """Asymptotic treatment-variance factors relative to the raw outcome.

    The change-score factor ``2(1 - rho)`` assumes X and Y share a variance.
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    return PrecisionCurvePoint(rho, 1.0, 1.0 - rho * rho, 2.0 * (1.0 - rho))


def confounding_probability_exact(n: int) -> Fraction:
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    return Fraction(2, math.comb(2 * n, n))


def confounding_probability(n: int) -> float:
    """Chance that an equal split of ``2n`` patients separates the two halves.

    Computed in log space, so large ``n`` underflows gracefully to zero.
    """
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if n <= 500:
        return float(confounding_probability_exact(n))
    return math.exp(math.log(2.0) + 2 * math.lgamma(n + 1) - math.lgamma(2 * n + 1))


def stratum_power_correlation(m: int) -> float:
    """Correlation of the +-1 stratum indicator with ``X**m``, X standard Normal."""
    if m < 1:
        raise DomainError(f"power must be positive, got {m}")
    if m % 2 == 0:
        return 0.0
    return math.exp(log_truncated_moment(m) - 0.5 * log_double_factorial_odd(2 * m - 1))


def power_correlation(a: int, b: int) -> float:
    """Cor(X^a, X^b) for X standard Normal and positive odd powers."""
    return normal_moment(a + b) / math.sqrt(normal_moment(2 * a) * normal_moment(2 * b))


# Variable 0 is the stratum indicator; any other label is a power of X.
def _corr(i: int, j: int) -> float:
    if i == j:
        return 1.0
    if i == 0 or j == 0:
        return stratum_power_correlation(i or j)
    return power_correlation(i, j)


@lru_cache(maxsize=None)
def _partial(i: int, j: int, given: tuple[int, ...]) -> float:
    if not given:
        return _corr(i, j)
    # the last entry of ``given`` is eliminated last, i.e. at the top level
    w0, rest = given[-1], given[:-1]
    r_ij = _partial(i, j, rest)
    r_iw = _partial(i, w0, rest)
    r_wj = _partial(w0, j, rest)
    d_iw, d_wj = 1.0 - r_iw * r_iw, 1.0 - r_wj * r_wj
    if d_iw < COLLINEAR_TOL or d_wj < COLLINEAR_TOL:
        raise SingularDesign(f"conditioning set {given} is collinear")
    return (r_ij - r_iw * r_wj) / math.sqrt(d_iw * d_wj)


def stratum_power_partial_correlation(m: int, given, order=None) -> float:
    """Partial correlation of the stratum indicator with ``X**m`` given other odd powers.

    Applies the one-variable-at-a-time recursion
    ``r_xy.W = (r_xy.W0 - r_xw.W0 r_wy.W0) / sqrt((1 - r_xw.W0^2)(1 - r_wy.W0^2))``.
    Conditioning powers are eliminated in ascending order unless ``order``
    gives another sequence; the result does not depend on it.
    """
    given = tuple(sorted(set(given))) if order is None else tuple(order)
    if m < 1 or m % 2 == 0:
        raise DomainError(f"m must be a positive odd power, got {m}")
    if m in given:
        raise DomainError(f"m={m} is in the conditioning set")
    if any(g < 1 or g % 2 == 0 for g in given):
        raise DomainError(f"conditioning powers must be positive and odd, got {given}")
    return _partial(0, m, given)


def figure5_table(max_m: int) -> list[CorrelationTableRow]:
    """Simple and partial-given-X correlations of the stratum indicator with X^1..X^max_m.

    The partial entry for ``m = 1`` is degenerate; it is reported as 0 and
    flagged.
    """
    if max_m < 1:
        raise DomainError(f"max_m must be positive, got {max_m}")
    rows = []
    for m in range(1, max_m + 1):
        simple = stratum_power_correlation(m)
        if m == 1:
            rows.append(CorrelationTableRow(m, simple, 0.0, degenerate=True))
        elif m % 2 == 0:
            rows.append(CorrelationTableRow(m, 0.0, 0.0))
        else:
            rows.append(CorrelationTableRow(m, simple, stratum_power_partial_correlation(m, (1,))))
    return rows
