"""Observability pipeline: evolve transported quasimodes and integrate their mass in Omega."""

import asyncio
from typing import List

import numpy as np

from experiments.quasimode import quasimode_spec
from numerics.propagation import (
    EVOLUTION_COLUMNS,
    ObservabilityConfig,
    evolve_region_mass,
    fm_bound_check,
    polar_to_cartesian,
    strang_refinement,
    summarize_observability,
    unitarity_violations,
)
from numerics.quasimodes import apply_P_minus_E, build_quasimode
from utils.config import ExperimentConfig
from utils.logging_config import get_logger
from utils.models import StageResult, StageStatus
from utils.stages import stage_guard

logger = get_logger("experiments.observability")

SUMMARY_COLUMNS = ["h", "F0", "integral", "max_F", "norm_drift", "residual_norm", "transport_deficit"]


def observability_config(config: ExperimentConfig, theta0: float, k: int) -> ObservabilityConfig:
    section = config.observability
    exponent = section.exponent if section.exponent is not None else 1.0 / (k + 1)
    return ObservabilityConfig(
        theta0=theta0,
        C=section.C,
        exponent=exponent,
        R=section.R,
        T=section.T,
        dt=section.dt,
        region=section.region,
        include_inner_ball=section.include_inner_ball,
    )


@stage_guard("observability")
async def run_observability(runner, config: ExperimentConfig) -> StageResult:
    model = config.build_potential()
    spec = quasimode_spec(config, model)
    section = config.observability
    cfg = observability_config(config, spec.theta0, spec.k)

    def one(h: float):
        u = build_quasimode(spec, h)
        residual = apply_P_minus_E(u, model, spec.energy).norm()
        transported = polar_to_cartesian(u, section.L, section.N)
        final, report = evolve_region_mass(transported.field, model, cfg)
        report.residual_norm = residual
        return final, report, transported.norm_deficit

    results = await asyncio.gather(*(runner.to_thread(one, h) for h in section.h_list))
    reports = [report for _, report, _ in results]
    summary = summarize_observability(reports, cfg, section.threshold)
    bound = fm_bound_check(reports, [r.residual_norm for r in reports], limit=section.bound_limit)

    for report in reports:
        runner.writer.write_csv(f"observability/evolution_h{report.h:g}.csv", EVOLUTION_COLUMNS, report.to_rows())
    runner.writer.write_csv(
        "observability/summary.csv",
        SUMMARY_COLUMNS,
        np.array(
            [
                [r.h, r.region_mass[0], r.integral, r.region_mass.max(), r.norm_drift, r.residual_norm, deficit]
                for (_, r, deficit) in results
            ]
        ),
    )
    runner.writer.write_json(
        "observability/report.json",
        {"config": cfg.model_dump(), "observability": summary.model_dump(), "fm_bound": bound.model_dump()},
    )
    if section.export_fields:
        final, report, _ = results[-1]
        runner.writer.write_cartesian(f"observability/final_h{report.h:g}.csv", final)

    drifted = unitarity_violations(reports)
    if drifted:
        return StageResult.error_result(
            "observability", StageStatus.NUMERICAL_ERROR, "evolution lost unitarity", errors=drifted
        )

    failures = []
    if not summary.nonincreasing:
        failures.append(f"integrals not nonincreasing: {summary.integrals}")
    if summary.final_fraction > summary.threshold:
        failures.append(f"final integral {summary.final_fraction:.3g} T exceeds {summary.threshold} T")
    if not bound.passed:
        failures.append(f"F_m bound constant {bound.C:.3g} exceeds {bound.limit}")
    return StageResult.verdict_result(
        "observability",
        not failures,
        f"integrals {[round(v, 6) for v in summary.integrals]}, fitted C={bound.C:.3g}",
        data={"summary": summary, "bound": bound},
        errors=failures,
    )


@stage_guard("strang_refinement")
async def run_refinement(runner, config: ExperimentConfig) -> StageResult:
    """Second-order check of the splitting on the coarsest transported quasimode."""
    section = config.observability
    if section.refinement_T == 0.0:
        return StageResult.exploratory_result("strang_refinement", "refinement check disabled")
    model = config.build_potential()
    spec = quasimode_spec(config, model)
    steps = max(1, int(round(section.refinement_T / section.dt)))

    def one():
        u = build_quasimode(spec, section.h_list[0])
        transported = polar_to_cartesian(u, section.L, section.N)
        return strang_refinement(transported.field, model, section.dt, steps)

    report = await runner.to_thread(one)
    runner.writer.write_json("observability/refinement.json", {**report.model_dump(), "passed": report.passed})
    return StageResult.verdict_result(
        "strang_refinement",
        report.passed,
        f"error ratio {report.ratio:.3f} for dt -> dt/2 over {steps} steps",
        data=report,
    )


async def run_observability_experiment(runner, config: ExperimentConfig) -> List[StageResult]:
    return [await run_observability(runner, config), await run_refinement(runner, config)]


def setup(runner):
    runner.register("observability", run_observability_experiment)
