"""Design matrices for models A-D and least-squares fitting.

Column layout is fixed: intercept, treatment (arm 1 -> -1/2, arm 2 -> +1/2),
then the centred covariate (models B, D), then the stratum indicator coded
-1/+1 (models C, D). Everything here works on a leading batch axis so that
the Monte Carlo engine can fit thousands of replicates in one call; the
scalar entry points are the same code with a batch of one.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfoundedDesign, SingularDesign

RCOND_TOL = 1e-12
TREATMENT_COLUMN = 1


class Model(str, Enum):
    A = "A"  # Y ~ Z
    B = "B"  # Y ~ Z + X
    C = "C"  # Y ~ Z + S
    D = "D"  # Y ~ Z + X + S

    @property
    def has_covariate(self) -> bool:
        return self in (Model.B, Model.D)

    @property
    def has_stratum(self) -> bool:
        return self in (Model.C, Model.D)

    @property
    def rank(self) -> int:
        return 2 + self.has_covariate + self.has_stratum

    @property
    def n_covariates(self) -> int:
        return self.rank - 2


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    treatment_variance_multiplier: float
    vif: float
    mse: float
    residual_dof: int

    @property
    def treatment_effect(self) -> float:
        return float(self.beta[TREATMENT_COLUMN])


def treatment_codes(arms):
    """Map arm labels 1/2 to -1/2 and +1/2."""
    arms = np.asarray(arms)
    return np.where(arms == 2, 0.5, -0.5)


def design_matrices(model, x, arms, strata=None) -> np.ndarray:
    """Stack of design matrices with shape ``(..., N, rank)``.

    ``x``, ``arms`` and ``strata`` share the shape ``(..., N)``. The covariate
    is centred on its realised mean within each replicate.
    """
    model = Model(model)
    x = np.asarray(x, dtype=float)
    cols = [np.ones_like(x), treatment_codes(arms)]
    if model.has_covariate:
        cols.append(x - x.mean(axis=-1, keepdims=True))
    if model.has_stratum:
        if strata is None:
            raise ValueError(f"model {model.value} needs stratum labels")
        cols.append(np.asarray(strata, dtype=float))
    return np.stack(cols, axis=-1)


def build_design_matrix(model, patients, alloc) -> np.ndarray:
    strata = alloc.strata if alloc.strata is not None else patients.strata
    return design_matrices(model, patients.x, alloc.arms, strata)


def _svd(designs):
    u, s, vt = np.linalg.svd(designs, full_matrices=False)
    s_max = s[..., :1]
    rcond = (s[..., -1] / np.where(s_max[..., 0] > 0, s_max[..., 0], 1.0)) ** 2
    singular = ~(rcond >= RCOND_TOL)
    s_safe = np.where(s > 0, s, 1.0)
    return u, s_safe, vt, singular


def treatment_multipliers(designs, column=TREATMENT_COLUMN):
    """Diagonal entry of ``(X'X)^-1`` for the treatment column.

    Returns ``(multiplier, singular)``; the multiplier is meaningless where
    ``singular`` is true (reciprocal condition of ``X'X`` below 1e-12).
    """
    _, s, vt, singular = _svd(np.asarray(designs, dtype=float))
    v_row = vt[..., :, column]
    mult = np.sum((v_row / s) ** 2, axis=-1)
    return mult, singular


def fit_batch(designs, y):
    """Least squares on a stack of designs.

    Returns a dict of arrays: ``beta`` (..., p), ``mse``, ``multiplier``,
    ``reference_multiplier`` (the treatment-only model on the same rows),
    ``vif`` and ``singular``. Singular rows hold garbage values and must be
    masked by the caller.
    """
    designs = np.asarray(designs, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = designs.shape[-2:]
    u, s, vt, singular = _svd(designs)
    uty = np.einsum("...np,...n->...p", u, y)
    beta = np.einsum("...kp,...k->...p", vt, uty / s)
    resid = y - np.einsum("...np,...p->...n", designs, beta)
    dof = n - p
    mse = np.einsum("...n,...n->...", resid, resid) / dof
    mult = np.sum((vt[..., :, TREATMENT_COLUMN] / s) ** 2, axis=-1)
    ref_mult, ref_singular = treatment_multipliers(designs[..., :2])
    singular = singular | ref_singular
    vif = mult / ref_mult
    return {
        "beta": beta,
        "mse": mse,
        "multiplier": mult,
        "reference_multiplier": ref_mult,
        "vif": vif,
        "singular": singular,
        "residual_dof": dof,
    }


def ols_fit(design, y) -> FitResult:
    """Ordinary least squares via the singular value decomposition.

    The treatment column must be column 1 and coded -1/2, +1/2; the VIF is the
    ratio of its variance multiplier to that of the intercept-plus-treatment
    model on the same rows.

    Raises
    ------
    SingularDesign
        If ``X'X`` has reciprocal condition below 1e-12.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if design.ndim != 2 or design.shape[0] != y.shape[0]:
        raise ValueError("design must be N x p with N matching len(y)")
    n, p = design.shape
    if n <= p:
        raise ValueError(f"need more rows than columns, got {n} x {p}")
    out = fit_batch(design[None], y[None])
    if out["singular"][0]:
        raise SingularDesign("cross-product matrix is numerically singular")
    return FitResult(
        beta=out["beta"][0],
        treatment_variance_multiplier=float(out["multiplier"][0]),
        vif=float(out["vif"][0]),
        mse=float(out["mse"][0]),
        residual_dof=n - p,
    )


def vif_batch(model, x, arms, strata=None):
    """VIF per replicate relative to model A; returns ``(vif, singular)``."""
    designs = design_matrices(model, x, arms, strata)
    mult, singular = treatment_multipliers(designs)
    ref, ref_singular = treatment_multipliers(designs[..., :2])
    singular = singular | ref_singular
    return mult / ref, singular


def vif_of_treatment(model, patients, alloc) -> float:
    """Inflation of the treatment variance caused by the model's covariates.

    Raises
    ------
    ConfoundedDesign
        If the model's design is singular, e.g. treatment coincides with
        stratum, or an arm is empty.
    """
    model = Model(model)
    strata = alloc.strata if alloc.strata is not None else patients.strata
    vif, singular = vif_batch(model, patients.x[None], alloc.arms[None], strata[None])
    if singular[0]:
        raise ConfoundedDesign(f"model {model.value} is singular for this allocation")
    return float(vif[0])


def vif_equal_arms(x, arms) -> float:
    """Sum-of-squares form of the covariate VIF for two equal arms.

    ``total SS / (total SS - (n/2) (mean2 - mean1)^2)`` with ``n`` per arm.
    """
    x = np.asarray(x, dtype=float)
    arms = np.asarray(arms)
    x1, x2 = x[arms == 1], x[arms == 2]
    if x1.size != x2.size:
        raise ValueError("arms must be of equal size")
    n = x1.size
    ss_total = np.sum((x - x.mean()) ** 2)
    between = n / 2 * (x2.mean() - x1.mean()) ** 2
    return float(ss_total / (ss_total - between))
