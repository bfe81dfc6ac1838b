"""Operator-bound pipeline: Wigner vs dense oracle, norm bounds and the sharp lower bound."""

import asyncio
import math
from typing import List, Tuple

import numpy as np

from numerics.cutoffs import make_cutoff
from numerics.quantization import (
    CartesianField,
    calderon_vaillancourt_check,
    dense_weyl_operator,
    garding_check,
    weyl_pairing,
)
from numerics.symbols import SymbolSpec, bump, constant, product
from utils.config import ExperimentConfig
from utils.logging_config import get_logger
from utils.models import StageResult
from utils.stages import stage_guard

logger = get_logger("experiments.garding")

ORACLE_COLUMNS = ["state", "symbol", "wigner", "dense", "difference"]
ORACLE_TOL = 5e-2


def oracle_symbols() -> List[SymbolSpec]:
    return [
        bump("origin", (0.0, 0.0, 0.0), 1.0),
        bump("tilted", (0.5, math.pi / 2.0, -0.3), (1.0, 0.8, 1.0)),
        constant("one", 1.0),
        product(
            "radial_window",
            bump("rho_window", (0.0, 0.0, 0.0), (1.5, None, None)),
            bump("w_window", (0.0, 0.0, 0.0), (None, None, 1.5)),
        ),
    ]


def oracle_states(L: float, N: int, h: float) -> List[Tuple[str, CartesianField]]:
    """Gaussian wave packets on the dilated grid, unit norm."""
    packets = [
        ("east", (1.2, 0.0), (0.0, 0.0)),
        ("north_moving", (0.0, 1.3), (0.5, 0.0)),
        ("southwest", (-1.0, -1.0), (0.3, 0.3)),
    ]
    sigma = 0.3
    states = []
    for name, (x0, y0), (p1, p2) in packets:

        def packet(X, Y, x0=x0, y0=y0, p1=p1, p2=p2):
            envelope = np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2.0 * sigma**2))
            return envelope * np.exp(1j * (p1 * X + p2 * Y) / h)

        field = CartesianField.from_function(L, N, h, packet, dilated=True)
        states.append((name, field.normalized()))
    return states


@stage_guard("quantization_oracle")
async def run_oracle(runner, config: ExperimentConfig) -> StageResult:
    """Wigner quadrature pairings against the dense Weyl matrix."""
    section = config.garding
    h = section.h_list[0]
    cutoff = make_cutoff("j-step")
    symbols = oracle_symbols()
    states = oracle_states(section.L, section.N, h)

    def one(symbol: SymbolSpec):
        operator = dense_weyl_operator(section.L, section.N, h, symbol, cutoff)
        rows = []
        for name, state in states:
            wigner = weyl_pairing(state, symbol, cutoff, stride=1).value
            dense = operator.expectation(state.samples).real
            rows.append((name, symbol.name, wigner, dense, abs(wigner - dense)))
        return rows

    blocks = await asyncio.gather(*(runner.to_thread(one, s) for s in symbols))
    rows = [row for block in blocks for row in block]
    runner.writer.write_records(
        "garding/oracle.csv", ORACLE_COLUMNS, (dict(zip(ORACLE_COLUMNS, row)) for row in rows)
    )
    failures = [
        f"{state}/{symbol}: |{wigner:.4g} - {dense:.4g}|"
        for state, symbol, wigner, dense, diff in rows
        if diff > ORACLE_TOL * (1.0 + abs(dense))
    ]
    return StageResult.verdict_result(
        "quantization_oracle", not failures, f"{len(rows)} pairings compared at h={h}", errors=failures
    )


@stage_guard("operator_bounds")
async def run_bounds(runner, config: ExperimentConfig) -> StageResult:
    """Norm bound C sup|a| + c h^(1/2) and the lower bound -C h for a nonnegative symbol."""
    section = config.garding
    cutoff = make_cutoff("j-step")
    symbol = bump("nonnegative", (0.0, 0.0, 0.0), 1.0)
    rng = runner.rng("garding")
    norm_rng, garding_rng = rng.spawn(2)

    norm_report, garding_report = await asyncio.gather(
        runner.to_thread(
            calderon_vaillancourt_check,
            symbol,
            cutoff,
            section.h_list,
            section.trials,
            norm_rng,
            section.L,
            section.N,
            section.C_limit,
        ),
        runner.to_thread(
            garding_check,
            symbol,
            cutoff,
            section.h_list,
            section.trials,
            garding_rng,
            section.L,
            section.N,
            section.C_limit,
        ),
    )
    runner.writer.write_json("garding/norm_bound.json", norm_report)
    runner.writer.write_json("garding/lower_bound.json", garding_report)

    failures = []
    if not norm_report.bound_holds:
        failures.append(f"norm bound C={norm_report.C:.3g}, overshoot {norm_report.excess:.3g}")
    if garding_report.C > section.C_limit:
        failures.append(f"lower bound constant C={garding_report.C:.3g}")
    return StageResult.verdict_result(
        "operator_bounds",
        not failures,
        f"norm C={norm_report.C:.3g}, c={norm_report.c:.3g}; lower-bound C={garding_report.C:.3g}",
        errors=failures,
    )


async def run_garding(runner, config: ExperimentConfig) -> List[StageResult]:
    return [await run_oracle(runner, config), await run_bounds(runner, config)]


def setup(runner):
    runner.register("garding", run_garding)
