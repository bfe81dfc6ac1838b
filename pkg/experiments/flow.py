"""Induced-flow pipeline: conservation, asymptotics and the full-flow bridge."""

import asyncio
import math
from typing import List, Tuple

import numpy as np

from numerics.errors import FlowBreakdown
from numerics.flow import (
    TRAJECTORY_COLUMNS,
    PhasePoint,
    asymptotic_diagnostics,
    bridge_deviation,
    check_energy_conservation,
    integrate_flow,
    random_initial_conditions,
)
from numerics.potential import PotentialModel, catalog_potential
from utils.config import ExperimentConfig
from utils.logging_config import get_logger
from utils.models import StageResult
from utils.stages import stage_guard

logger = get_logger("experiments.flow")

ENERGY_DRIFT_LIMIT = 1e-8
BRIDGE_LIMIT = 1e-6
ENSEMBLE_COLUMNS = [
    "potential",
    "rho0",
    "theta0",
    "eta0",
    "energy_drift",
    "rho_limit",
    "tail_max_eta",
    "tail_max_dV",
    "q_tail_increase",
    "g_tail_increase",
    "rho_monotone",
]


def _initial_points(config: ExperimentConfig, rng: np.random.Generator) -> List[PhasePoint]:
    if config.flow.initial_point is not None:
        rho, theta, eta = config.flow.initial_point
        return [PhasePoint(rho=rho, theta=theta, eta=eta)]
    return random_initial_conditions(rng, config.flow.ensemble)


def flow_potentials(config: ExperimentConfig) -> List[Tuple[str, PotentialModel]]:
    """(name, model) for every potential the ensemble runs on, in configured order."""
    return [
        (name, config.build_potential() if name == "configured" else catalog_potential(name, config.energy))
        for name in config.flow.potentials
    ]


def _ensemble_failures(name: str, results) -> Tuple[float, List[str]]:
    diagnostics = [d for _, d in results]
    max_drift = max(check_energy_conservation(t) for t, _ in results)
    failures = []
    if max_drift > ENERGY_DRIFT_LIMIT:
        failures.append(f"{name}: energy drift {max_drift:.2e} exceeds {ENERGY_DRIFT_LIMIT:.0e}")
    if not all(d.rho_monotone for d in diagnostics):
        failures.append(f"{name}: rho decreased along a trajectory")
    unconverged = [i for i, d in enumerate(diagnostics) if not d.converged]
    if unconverged:
        failures.append(f"{name}: eta or dV did not decay for initial conditions {unconverged}")
    unbounded = [i for i, d in enumerate(diagnostics) if not d.integrals_bounded]
    if unbounded:
        failures.append(f"{name}: running integrals still growing for initial conditions {unbounded}")
    return max_drift, failures


@stage_guard("flow_ensemble")
async def run_ensemble(runner, config: ExperimentConfig) -> StageResult:
    """Energy drift and asymptotic laws of one initial-condition ensemble on each listed potential."""
    section = config.flow
    points = _initial_points(config, runner.rng("flow"))
    potentials = flow_potentials(config)

    def one(model: PotentialModel, p0: PhasePoint):
        traj = integrate_flow(p0, model, section.t_end, section.tol, section.samples, section.method)
        return traj, asymptotic_diagnostics(traj, model)

    rows, failures, per_potential = [], [], {}
    for index, (name, model) in enumerate(potentials):
        results = await asyncio.gather(*(runner.to_thread(one, model, p0) for p0 in points))
        for p0, (_, diag) in zip(points, results):
            rows.append(
                [
                    index,
                    p0.rho,
                    p0.theta,
                    p0.eta,
                    diag.energy_drift,
                    diag.rho_limit,
                    diag.tail_max_eta,
                    diag.tail_max_dV,
                    diag.q_integral_tail_increase,
                    diag.g_integral_tail_increase,
                    float(diag.rho_monotone),
                ]
            )
        runner.writer.write_csv(f"flow/trajectory_{name}.csv", TRAJECTORY_COLUMNS, results[0][0].to_rows())
        max_drift, found = _ensemble_failures(name, results)
        failures.extend(found)
        per_potential[name] = {
            "max_energy_drift": max_drift,
            "diagnostics": [d.model_dump() for _, d in results],
        }
    runner.writer.write_csv("flow/ensemble.csv", ENSEMBLE_COLUMNS, np.array(rows))

    worst = max(entry["max_energy_drift"] for entry in per_potential.values())
    summary = {
        "trajectories": len(points),
        "potentials": [name for name, _ in potentials],
        "max_energy_drift": worst,
        "per_potential": per_potential,
        "failures": failures,
    }
    runner.writer.write_json("flow/diagnostics.json", summary)
    return StageResult.verdict_result(
        "flow_ensemble",
        not failures,
        f"{len(points)} trajectories on {', '.join(summary['potentials'])}, max energy drift {worst:.2e}",
        data=summary,
        errors=failures,
    )


@stage_guard("flow_bridge")
async def run_bridge(runner, config: ExperimentConfig) -> StageResult:
    """Induced flow against the reparametrized full flow on outgoing scenarios."""
    section = config.flow
    if section.bridge_scenarios == 0:
        return StageResult.exploratory_result("flow_bridge", "bridge check disabled")
    model = config.build_potential()
    points = random_initial_conditions(runner.rng("bridge"), section.bridge_scenarios, rho_range=(0.2, 1.0))

    def one(p0: PhasePoint) -> float:
        try:
            return bridge_deviation(p0, model, section.tau_end, section.tol, method=section.method)
        except FlowBreakdown as error:
            logger.warning(f"Bridge scenario {p0} broke down: {error}")
            return math.inf

    deviations = await asyncio.gather(*(runner.to_thread(one, p0) for p0 in points))
    worst = max(deviations)
    runner.writer.write_json(
        "flow/bridge.json",
        {
            "tau_end": section.tau_end,
            "scenarios": [p.model_dump() for p in points],
            "deviations": [d if math.isfinite(d) else None for d in deviations],
        },
    )
    return StageResult.verdict_result(
        "flow_bridge", worst <= BRIDGE_LIMIT, f"max pullback deviation {worst:.2e} over {len(points)} scenarios"
    )


async def run_flow(runner, config: ExperimentConfig) -> List[StageResult]:
    return [await run_ensemble(runner, config), await run_bridge(runner, config)]


def setup(runner):
    runner.register("flow", run_flow)
