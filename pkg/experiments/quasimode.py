"""Quasimode pipeline: construction checks, residual scaling, support and tail-mass tables."""

import asyncio
from typing import List, Optional, Tuple

import numpy as np

from numerics.measure import tail_mass_diagnostic
from numerics.potential import PotentialModel
from numerics.quasimodes import (
    QuasimodeSpec,
    ResidualRow,
    ResidualTable,
    apply_P_minus_E,
    build_quasimode,
    check_cutoff_invariance,
    default_polar_grid,
    ell,
    fit_slope,
    support_report,
)
from utils.config import ExperimentConfig
from utils.logging_config import get_logger
from utils.models import StageResult
from utils.stages import stage_guard

logger = get_logger("experiments.quasimode")

RESIDUAL_COLUMNS = ["h", "residual_norm", "slope_so_far"]
SUPPORT_COLUMNS = ["h", "norm", "cutoff_change", "width_mass_outside", "ell_mass_outside"]
TAIL_COLUMNS = ["h", "c", "J_norm", "J_tilde_norm"]


def quasimode_spec(config: ExperimentConfig, model: Optional[PotentialModel] = None) -> QuasimodeSpec:
    """QuasimodeSpec for the configured potential and critical direction."""
    model = model or config.build_potential()
    section = config.quasimode
    extra = {"epsilon_exp": section.epsilon_exp, "support_constant": section.support_constant}
    if section.k is not None:
        extra["k"] = section.k
    return QuasimodeSpec.for_potential(model, section.theta0, section.case, section.energy, **extra)


def expected_slope(spec: QuasimodeSpec) -> Tuple[float, float]:
    """Accepted range of the residual slope for this family."""
    if spec.case == 2:
        return 0.85, np.inf
    if spec.k <= 1:
        return 0.8, 1.1
    if spec.k >= 3:
        return 1.1, np.inf
    return -np.inf, np.inf


def constructed_support(spec: QuasimodeSpec) -> Tuple[float, float]:
    """(C, exponent) with dist(theta, theta0) < C r^-exponent on the built support."""
    radial_power = 1.5 if spec.slow_radial else 1.0
    exponent = spec.width_exponent() / radial_power
    return 2.0**exponent, exponent


@stage_guard("quasimode_residuals")
async def run_residuals(runner, config: ExperimentConfig) -> StageResult:
    model = config.build_potential()
    spec = quasimode_spec(config, model)
    section = config.quasimode
    if len(section.h_list) < 4:
        raise ValueError("residual scaling needs at least 4 values of h")
    C, exponent = constructed_support(spec)
    C_ell = spec.support_constant

    def one(h: float):
        grid = default_polar_grid(spec, h, section.points_across, section.points_per_width)
        u = build_quasimode(spec, h, grid)
        residual = apply_P_minus_E(u, model, spec.energy).norm()
        checks = [
            h,
            u.norm(),
            check_cutoff_invariance(u),
            support_report(u, spec.theta0, C, exponent).mass_outside,
            support_report(u, spec.theta0, C_ell, ell(spec.k)).mass_outside,
        ]
        return u if h == section.h_list[0] else None, residual, checks

    results = await asyncio.gather(*(runner.to_thread(one, h) for h in section.h_list))
    norms = [residual for _, residual, _ in results]
    rows = []
    for i, h in enumerate(section.h_list):
        slope = fit_slope(section.h_list[: i + 1], norms[: i + 1]) if i >= 1 else None
        rows.append(ResidualRow(h=h, residual_norm=norms[i], slope_so_far=slope))
    table = ResidualTable(rows=rows, slope=fit_slope(section.h_list, norms))

    runner.writer.write_csv(
        "quasimode/residuals.csv",
        RESIDUAL_COLUMNS,
        np.array([[r.h, r.residual_norm, np.nan if r.slope_so_far is None else r.slope_so_far] for r in rows]),
    )
    checks = np.array([c for _, _, c in results])
    runner.writer.write_csv("quasimode/construction.csv", SUPPORT_COLUMNS, checks)
    if section.export_fields:
        runner.writer.write_polar(f"quasimode/field_h{section.h_list[0]:g}.csv", results[0][0])

    low, high = expected_slope(spec)
    failures = []
    if not low <= table.slope <= high:
        failures.append(f"residual slope {table.slope:.3f} outside [{low}, {high}]")
    if np.max(np.abs(checks[:, 1] - 1.0)) > 1e-8:
        failures.append("quasimode not normalized")
    if np.max(checks[:, 2]) > 1e-12:
        failures.append("j(hr) u differs from u")
    if np.max(checks[:, 3]) > 1e-10:
        failures.append("mass outside the constructed angular width")
    runner.share("residual_table", table.as_pairs())
    return StageResult.verdict_result(
        "quasimode_residuals",
        not failures,
        f"k={spec.k} case={spec.case}: residual slope {table.slope:.3f}",
        data=table,
        errors=failures,
    )


@stage_guard("quasimode_tail_mass")
async def run_tail_mass(runner, config: ExperimentConfig) -> StageResult:
    """|J_h u_h| and |J~_h u_h| with c(h) built from the measured residuals."""
    model = config.build_potential()
    spec = quasimode_spec(config, model)
    section = config.quasimode
    residual_table = runner.shared("residual_table")
    try:
        rows = await runner.to_thread(
            tail_mass_diagnostic, spec, section.h_list, section.delta, residual_table, model
        )
    except ValueError as error:
        # c(h) >= 1 when the residual is not o(h)
        return StageResult.exploratory_result("quasimode_tail_mass", f"not applicable: {error}")
    runner.writer.write_csv(
        "quasimode/tail_mass.csv",
        TAIL_COLUMNS,
        np.array([[r.h, r.c, r.j_norm, r.j_tilde_norm] for r in rows]),
    )
    return StageResult.exploratory_result(
        "quasimode_tail_mass", f"tail-mass sequences over {len(rows)} values of h", data=rows
    )


async def run_quasimode(runner, config: ExperimentConfig) -> List[StageResult]:
    return [await run_residuals(runner, config), await run_tail_mass(runner, config)]


def setup(runner):
    runner.register("quasimode", run_quasimode)
