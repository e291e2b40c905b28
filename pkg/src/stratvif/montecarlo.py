"""Scenario replication: draw covariates, allocate, fit, aggregate.

Replicate ``r`` of a scenario draws everything from ``RngStream(seed, r)``,
in this order: N covariates, the allocation, then (optionally) N outcome
noise terms. Replicates are grouped in fixed-size chunks whose arrays are
concatenated in replicate order, so results do not depend on the number of
worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .design import (
    DEFAULT_BLOCK_SIZE,
    Design,
    PatientStream,
    allocate_complete,
    allocate_stratified,
)
from .distributions import RngStream, normal_moment
from .errors import DomainError
from .linmod import Model, design_matrices, fit_batch, treatment_codes
from .theory import confounding_probability, expected_vif

CHUNK_SIZE = 2048
DEFAULT_REPLICATES = 100_000


class OutcomeSpec(BaseModel):
    """Outcome ``Y = tau*Z + rho*g_std(X) + e`` with ``e ~ N(0, 1 - rho^2)``.

    ``g_std`` is the link standardised by its population mean and sd. For the
    step link ``g(X) = sign(X)`` the Y-X correlation is ``rho*sqrt(2/pi)``,
    not ``rho``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    rho: float = Field(ge=0.0, le=1.0)
    link: Literal["linear", "poly", "step"] = "linear"
    coeffs: Optional[tuple[float, ...]] = None
    treatment_effect: float = 0.0

    @model_validator(mode="after")
    def _check_coeffs(self):
        if self.link == "poly":
            if not self.coeffs:
                raise ValueError("poly link needs coeffs (constant term first)")
            if _poly_moments(self.coeffs)[1] <= 0:
                raise ValueError("poly coeffs give a constant link")
        return self


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int
    design: Design = Design.RANDOMIZED
    block_size: int = DEFAULT_BLOCK_SIZE
    predicted_median: float = 0.0
    model: Model = Model.B
    replicates: int = Field(default=DEFAULT_REPLICATES, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    outcome: Optional[OutcomeSpec] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"n must be even and >= 4, got {self.n}")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError(f"block_size must be even and >= 2, got {self.block_size}")
        if self.n - self.model.rank < 3:
            raise ValueError(
                f"n={self.n} leaves {self.n - self.model.rank} residual dof for model "
                f"{self.model.value}; at least 3 are needed for the t variance"
            )
        return self

    @property
    def residual_dof(self) -> int:
        return self.n - self.model.rank


class ScenarioReport(BaseModel):
    n: int
    design: Design
    model: Model
    block_size: Optional[int]
    predicted_median: float
    replicates: int
    contributing: int
    singular_count: int
    mean_vif: Optional[float]
    mc_se_vif: Optional[float]
    theory_vif: float
    theory_is_approximation: bool
    residual_dof: int
    confounding_probability: Optional[float] = None
    empirical_treatment_variance: Optional[float] = None
    mean_mse: Optional[float] = None


class RatioEstimate(BaseModel):
    value: float
    mc_se: float
    theory: float

    @property
    def z(self) -> float:
        return (self.value - self.theory) / self.mc_se if self.mc_se > 0 else 0.0


class DecompositionReport(BaseModel):
    scenario: ScenarioReport
    empirical_variance: float
    mc_se_variance: float
    mean_reference_multiplier: float
    predicted_variance: float
    raw_variance: float
    ancova_variance: float
    change_score_variance: float
    ancova_ratio: RatioEstimate
    change_score_ratio: RatioEstimate


def _poly_moments(coeffs):
    """Population mean and variance of ``sum c_k X^k`` for X standard Normal."""
    mean = sum(c * normal_moment(k) for k, c in enumerate(coeffs))
    second = sum(
        ci * cj * normal_moment(i + j)
        for i, ci in enumerate(coeffs)
        for j, cj in enumerate(coeffs)
    )
    return mean, second - mean * mean


def standardized_link(x, spec: OutcomeSpec):
    x = np.asarray(x, dtype=float)
    if spec.link == "linear":
        return x
    if spec.link == "step":
        return np.where(x < 0, -1.0, 1.0)
    mean, var = _poly_moments(spec.coeffs)
    g = np.polynomial.polynomial.polyval(x, spec.coeffs)
    return (g - mean) / math.sqrt(var)


def generate_outcome(patients, alloc, spec: OutcomeSpec, stream: RngStream) -> np.ndarray:
    x = patients.x if isinstance(patients, PatientStream) else np.asarray(patients, dtype=float)
    arms = alloc.arms if hasattr(alloc, "arms") else np.asarray(alloc)
    noise = stream.standard_normal(x.shape[-1])
    return (
        spec.treatment_effect * treatment_codes(arms)
        + spec.rho * standardized_link(x, spec)
        + math.sqrt(1.0 - spec.rho**2) * noise
    )


def _draw_replicate(config: ScenarioConfig, index: int):
    stream = RngStream(config.seed, index)
    patients = PatientStream(stream.standard_normal(config.n), config.predicted_median)
    if config.design is Design.RANDOMIZED:
        alloc = allocate_complete(config.n, stream, patients)
    else:
        alloc = allocate_stratified(patients, config.block_size, stream)
    y = None
    if config.outcome is not None:
        y = generate_outcome(patients, alloc, config.outcome, stream)
    return patients.x, alloc.arms, alloc.strata, y


def simulate_chunk(config: ScenarioConfig, start: int, stop: int) -> dict:
    """Per-replicate results for replicate indices ``start..stop-1``."""
    draws = [_draw_replicate(config, r) for r in range(start, stop)]
    x = np.stack([d[0] for d in draws])
    arms = np.stack([d[1] for d in draws])
    strata = np.stack([d[2] for d in draws])
    if config.outcome is None:
        y = np.zeros_like(x)
    else:
        y = np.stack([d[3] for d in draws])
    fit = fit_batch(design_matrices(config.model, x, arms, strata), y)
    out = {
        "vif": fit["vif"],
        "singular": fit["singular"],
        "estimate": fit["beta"][:, 1],
        "mse": fit["mse"],
        "reference_multiplier": fit["reference_multiplier"],
    }
    if config.outcome is not None:
        in2 = arms == 2
        n2 = in2.sum(axis=1)
        n1 = config.n - n2

        def arm_diff(v):
            return (v * in2).sum(axis=1) / n2 - (v * ~in2).sum(axis=1) / n1

        with np.errstate(divide="ignore", invalid="ignore"):
            out["raw"] = arm_diff(y)
            out["change"] = arm_diff(y - x)
        ancova = fit_batch(design_matrices(Model.B, x, arms), y)
        out["ancova"] = ancova["beta"][:, 1]
        out["ancova_singular"] = ancova["singular"]
    return out


def simulate(config: ScenarioConfig, workers: int = 1) -> dict:
    """Run every replicate and return per-replicate arrays in replicate order."""
    bounds = [
        (s, min(s + CHUNK_SIZE, config.replicates))
        for s in range(0, config.replicates, CHUNK_SIZE)
    ]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(simulate_chunk, [config] * len(bounds), *zip(*bounds)))
    else:
        parts = [simulate_chunk(config, a, b) for a, b in bounds]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _mean(v) -> float:
    return math.fsum(v.tolist()) / v.size


def _variance(v) -> tuple[float, float]:
    """Sample variance and its MC standard error."""
    m = _mean(v)
    dev2 = (v - m) ** 2
    var = math.fsum(dev2.tolist()) / (v.size - 1)
    se = math.sqrt(max(_mean((dev2 - _mean(dev2)) ** 2), 0.0) / v.size)
    return var, se


def _variance_ratio(num, den, theory) -> RatioEstimate:
    """Ratio of sample variances of two paired estimators, delta-method SE."""
    a = (num - _mean(num)) ** 2
    b = (den - _mean(den)) ** 2
    ma, mb = _mean(a), _mean(b)
    ratio = ma / mb
    resid = a - ratio * b
    se = math.sqrt(_mean((resid - _mean(resid)) ** 2) / a.size) / mb
    return RatioEstimate(value=ratio, mc_se=se, theory=theory)


def _report(config: ScenarioConfig, res: dict) -> ScenarioReport:
    singular = res["singular"]
    ok = ~singular
    vif = res["vif"][ok]
    count = int(vif.size)
    mean_vif = _mean(vif) if count else None
    mc_se = None
    if count > 1:
        dev = vif - mean_vif
        mc_se = math.sqrt(math.fsum((dev * dev).tolist()) / (count - 1)) / math.sqrt(count)
    theory = expected_vif(config.n, config.design, config.model)
    p_conf = None
    if config.design is Design.RANDOMIZED and config.model.has_stratum:
        p_conf = confounding_probability(config.n // 2)
    report = ScenarioReport(
        n=config.n,
        design=config.design,
        model=config.model,
        block_size=config.block_size if config.design is Design.STRATIFIED else None,
        predicted_median=config.predicted_median,
        replicates=config.replicates,
        contributing=count,
        singular_count=int(singular.sum()),
        mean_vif=mean_vif,
        mc_se_vif=mc_se,
        theory_vif=theory.expected_vif,
        theory_is_approximation=theory.is_approximation,
        residual_dof=config.residual_dof,
        confounding_probability=p_conf,
    )
    if config.outcome is not None and count > 1:
        report.empirical_treatment_variance = _variance(res["estimate"][ok])[0]
        report.mean_mse = _mean(res["mse"][ok])
    return report


def run_scenario(config: ScenarioConfig, workers: int = 1) -> ScenarioReport:
    """Replicate one (N, design, model) cell and compare with theory.

    Singular replicates (e.g. treatment confounded with stratum) are counted
    in ``singular_count`` and left out of the VIF mean.
    """
    return _report(config, simulate(config, workers))


def variance_decomposition(config: ScenarioConfig, workers: int = 1) -> DecompositionReport:
    """Empirical treatment-estimate variance split into multiplier, MSE and VIF.

    Also returns the raw / ANCOVA / change-score variance triple, with the
    ANCOVA and change-score variances expressed as ratios to the raw one.
    """
    if config.outcome is None:
        raise DomainError("variance decomposition needs an outcome spec")
    res = simulate(config, workers)
    ok = ~(res["singular"] | res["ancova_singular"])
    if ok.sum() < 2:
        raise DomainError("fewer than two non-singular replicates")
    scenario = _report(config, res)
    var, se = _variance(res["estimate"][ok])
    ref = _mean(res["reference_multiplier"][ok])
    mse = _mean(res["mse"][ok])
    mvif = _mean(res["vif"][ok])
    raw, ancova, change = res["raw"][ok], res["ancova"][ok], res["change"][ok]
    curve_rho = config.outcome.rho
    return DecompositionReport(
        scenario=scenario,
        empirical_variance=var,
        mc_se_variance=se,
        mean_reference_multiplier=ref,
        predicted_variance=ref * mse * mvif,
        raw_variance=_variance(raw)[0],
        ancova_variance=_variance(ancova)[0],
        change_score_variance=_variance(change)[0],
        ancova_ratio=_variance_ratio(ancova, raw, 1.0 - curve_rho**2),
        change_score_ratio=_variance_ratio(change, raw, 2.0 * (1.0 - curve_rho)),
    )
