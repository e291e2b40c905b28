"""Tidy data behind the five figures: one row per plotted point.

Column contract (order matters):

* figures 1, 2, 3: ``series, x, y``
* figure 4: ``series, x, y, mc_se, singular`` (blank ``mc_se``/``singular``
  on theory rows)
* figure 5: ``series, x, y, degenerate``
"""
from __future__ import annotations

from .design import Design
from .errors import DomainError
from .linmod import Model
from .montecarlo import ScenarioConfig, run_scenario
from .theory import expected_vif, figure5_table, precision_curves, second_order_ratio, t_variance

COLUMNS = {
    1: ["series", "x", "y"],
    2: ["series", "x", "y"],
    3: ["series", "x", "y"],
    4: ["series", "x", "y", "mc_se", "singular"],
    5: ["series", "x", "y", "degenerate"],
}

DEFAULT_RHO_GRID = [round(0.05 * i, 2) for i in range(21)]
DEFAULT_N_GRID = list(range(10, 1001, 10))
DEFAULT_FIG4_N_GRID = [12, 16, 20, 30, 40, 50, 100, 200]
DEFAULT_MAX_M = 8


def figure1(rhos=None) -> list[dict]:
    rows = []
    for rho in rhos or DEFAULT_RHO_GRID:
        p = precision_curves(rho)
        rows += [
            {"series": "raw", "x": rho, "y": p.raw_factor},
            {"series": "ancova", "x": rho, "y": p.ancova_factor},
            {"series": "change", "x": rho, "y": p.change_score_factor},
        ]
    return rows


def _check_n_grid(ns, minimum):
    bad = [n for n in ns if n < minimum]
    if bad:
        raise DomainError(f"N values {bad} are below the minimum {minimum}")


def figure2(ns=None) -> list[dict]:
    ns = ns or DEFAULT_N_GRID
    _check_n_grid(ns, Model.D.rank + 3)
    return [
        {"series": m.value, "x": n, "y": t_variance(n - m.rank)}
        for m in Model
        for n in ns
    ]


def figure3(ns=None) -> list[dict]:
    ns = ns or DEFAULT_N_GRID
    _check_n_grid(ns, Model.D.rank + 3)
    series = [("one_covariate", Model.B), ("two_covariates", Model.D)]
    return [
        {"series": name, "x": n, "y": second_order_ratio(n, m)}
        for name, m in series
        for n in ns
    ]


def figure4(ns=None, replicates=100_000, seed=0, block_size=4, predicted_median=0.0, workers=1) -> list[dict]:
    ns = ns or DEFAULT_FIG4_N_GRID
    rows = []
    for design in Design:
        for model in (Model.B, Model.D):
            tag = f"{design.value}_{model.value}"
            for n in ns:
                cfg = ScenarioConfig(
                    n=n, design=design, model=model, replicates=replicates, seed=seed,
                    block_size=block_size, predicted_median=predicted_median,
                )
                rep = run_scenario(cfg, workers=workers)
                theory = expected_vif(n, design, model).expected_vif
                rows.append({"series": f"theory_{tag}", "x": n, "y": theory, "mc_se": "", "singular": ""})
                if rep.mean_vif is None:
                    continue
                rows.append({
                    "series": f"empirical_{tag}", "x": n, "y": rep.mean_vif,
                    "mc_se": rep.mc_se_vif if rep.mc_se_vif is not None else 0.0,
                    "singular": rep.singular_count,
                })
    return rows


def figure5(max_m=DEFAULT_MAX_M) -> list[dict]:
    rows = []
    table = figure5_table(max_m)
    for r in table:
        rows.append({"series": "simple", "x": r.power, "y": r.simple_corr, "degenerate": 0})
    for r in table:
        rows.append({"series": "partial", "x": r.power, "y": r.partial_corr_given_X, "degenerate": int(r.degenerate)})
    return rows
