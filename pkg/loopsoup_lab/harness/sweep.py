"""
Moment convergence of the Poisson layering field toward the Gaussian one
along a λ-ladder with β = ξ/√λ.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core.chaos import glf_mean, glf_variance, pair_quadrature, poisson_mean, poisson_one_point, variance_estimate
from ..core.geometry import quad_grid
from ..core.loopmeasure import Estimate
from ..core.soup import FieldParams, field_integral
from ..errors import RegimeError
from ..logging import get_experiment_logger
from .context import RunContext
from .models import ExperimentConfig

logger = get_experiment_logger(__name__)

SWEEP_COLUMNS = [
    "lambda", "beta", "v_limit", "v_cutoff", "v_cutoff_se", "sim_mean", "sim_se", "sim_var", "sim_var_se",
    "w_mean", "w_var", "gap", "relative_gap",
]


@dataclass
class SweepReport:
    xi: float
    delta: float
    rows: list[list] = field(default_factory=list)
    w_mean: float = 0.0
    w_variance: float = 0.0
    simulated_ok: list[bool] = field(default_factory=list)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r[SWEEP_COLUMNS.index("gap")] for r in self.rows])

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.gaps) < 0))

    @property
    def final_relative_gap(self) -> float:
        return float(self.rows[-1][SWEEP_COLUMNS.index("relative_gap")]) if self.rows else math.inf

    def verdicts(self, tolerance: float) -> dict:
        return {
            "monotone": self.monotone,
            "final_below_tolerance": self.final_relative_gap < tolerance,
            "simulation_tracks_analytic": all(self.simulated_ok),
        }


def convergence_sweep(xi: float, lam_ladder: Sequence[float], phi, config: ExperimentConfig,
                      ctx: Optional[RunContext] = None) -> SweepReport:
    if xi >= math.sqrt(2):
        raise RegimeError(f"convergence sweep needs ξ < √2, got {xi}")
    ctx = ctx or RunContext(config, config.output_dir or ".")
    opts = config.options
    grid = quad_grid(ctx.domain, config.grid.h)
    delta = config.cutoffs.deltas[0]
    weights = grid.evaluate(phi) if callable(phi) else np.asarray(phi, dtype=float)

    logger.set_stage("table")
    table = ctx.table(grid.centers, [delta])
    quad = pair_quadrature(table, grid)
    report = SweepReport(xi, delta)
    report.w_mean = glf_mean(weights, xi, table, grid)
    report.w_variance = glf_variance(weights, xi, table, grid, quad)
    logger.info(f"Gaussian targets: ⟨W(φ)⟩={report.w_mean:.6g}, Var={report.w_variance:.6g}")

    for k, lam in enumerate(sorted(lam_ladder)):
        params = FieldParams(lam, xi / math.sqrt(lam))
        if not params.limit_regime_ok:
            raise RegimeError(f"Δ(λ,2β) = {params.delta_2beta:.4g} ≥ 1 at λ={lam}")
        logger.set_stage(f"rung λ={lam:g}")
        v_limit = poisson_mean(weights, params, table, grid)

        means = np.array([poisson_one_point(z, delta, params, table) for z in grid.centers])
        se_alpha = np.array([table.alpha(z, delta).stderr for z in grid.centers])
        v_cut = grid.integrate(weights * means)
        v_cut_se = float(np.sqrt(np.sum((weights * means * 10 * params.delta * se_alpha) ** 2))) * grid.cell_area

        sim = [""] * 4
        if lam <= opts.simulate_max_lam:
            cutoffs = ctx.cutoffs(delta)
            values = np.array([field_integral(soup, weights, grid, delta, params)
                               for soup in ctx.soups(params, cutoffs, config.n_rep, f"sweep_{k}")])
            mean, var = Estimate.from_samples(values), variance_estimate(values)
            sim = [mean.value, mean.stderr, var.value, var.stderr]
            report.simulated_ok.append(mean.agrees_with(v_cut, 3.0, extra=v_cut_se))
            logger.info(f"λ={lam:g}: simulated mean {mean.value:.5g}±{mean.stderr:.2g} vs {v_cut:.5g}")

        gap = abs(v_limit - report.w_mean)
        report.rows.append([lam, params.beta, v_limit, v_cut, v_cut_se, *sim, report.w_mean, report.w_variance,
                            gap, gap / abs(report.w_mean) if report.w_mean else math.inf])
    return report
