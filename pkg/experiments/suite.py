"""Full suite: every registered pipeline in a fixed order against one output directory."""

from typing import List

from utils.config import ExperimentConfig
from utils.logging_config import get_logger
from utils.models import StageResult

logger = get_logger("experiments.suite")

SUITE_ORDER = ["flow", "quasimode", "pairings", "observability", "garding"]


async def run_suite(runner, config: ExperimentConfig) -> List[StageResult]:
    results: List[StageResult] = []
    for name in SUITE_ORDER:
        handler = runner.handlers.get(name)
        if handler is None:
            logger.warning(f"Suite: no pipeline registered for '{name}', skipping")
            continue
        logger.info(f"Suite: running {name}")
        results.extend(await handler(runner, config))
    return results


def setup(runner):
    runner.register("suite", run_suite)
