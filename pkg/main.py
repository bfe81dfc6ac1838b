"""Semiclassical lab command-line entry point."""

import argparse
import asyncio
import importlib
import sys
import time
import zlib
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Optional

import numpy as np

from numerics.errors import ConfigurationError
from utils.artifacts import ArtifactWriter, config_hash
from utils.config import EXPERIMENT_KINDS, ExperimentConfig, apply_overrides, get_settings, load_config
from utils.logging_config import drain_timings, get_logger, log_performance, setup_logging_preset
from utils.models import EXIT_CODES, RunManifest, StageResult, StageStatus

TOOL_VERSION = "0.1.0"

Handler = Callable[["ExperimentRunner", ExperimentConfig], Awaitable[List[StageResult]]]


class ExperimentRunner:
    """Loads the experiment pipelines and runs one of them against a validated config."""

    def __init__(self, config: ExperimentConfig, writer: Optional[ArtifactWriter] = None):
        self.logger = get_logger("ExperimentRunner")
        self.config = config
        self.writer = writer or ArtifactWriter(config.output_dir)
        self.handlers: Dict[str, Handler] = {}
        self.seed = config.resolved_seed()
        self._semaphore = asyncio.Semaphore(config.threads)
        self._shared: Dict[str, Any] = {}

    def register(self, name: str, handler: Handler):
        if name in self.handlers:
            raise ValueError(f"experiment '{name}' registered twice")
        self.handlers[name] = handler

    def load_experiments(self, stage_logger, directory: str = "experiments"):
        """Import every module under `directory` and call its setup(runner)."""
        experiments_dir = Path(__file__).parent / directory
        files = sorted(f for f in experiments_dir.glob("*.py") if not f.name.startswith("_"))
        if not files:
            stage_logger.step("No experiment modules found", success=False)
            return

        for path in files:
            module_name = f"{directory}.{path.stem}"
            load_start = time.time()
            module = importlib.import_module(module_name)
            setup = getattr(module, "setup", None)
            if setup is None:
                self.logger.debug(f"{module_name} has no setup(), skipped")
                continue
            setup(self)
            log_performance("experiment_load", time.time() - load_start, module=module_name)
        stage_logger.step(f"Loaded {len(self.handlers)} experiment pipelines")

    async def to_thread(self, func, *args, **kwargs):
        """Run blocking numerics in a worker thread, at most config.threads at a time."""
        async with self._semaphore:
            return await asyncio.to_thread(func, *args, **kwargs)

    def rng(self, name: str) -> np.random.Generator:
        """Independent stream per consumer, derived from the run seed."""
        sequence = np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))
        return np.random.default_rng(sequence)

    def share(self, key: str, value: Any):
        self._shared[key] = value

    def shared(self, key: str, default: Any = None) -> Any:
        return self._shared.get(key, default)

    async def run(self, stage_logger) -> RunManifest:
        kind = self.config.kind
        handler = self.handlers.get(kind)
        if handler is None:
            raise ConfigurationError(f"no pipeline registered for experiment '{kind}'")

        resolved = self.config.model_dump(mode="json")
        manifest = RunManifest(
            tool_version=TOOL_VERSION,
            config_hash=config_hash(resolved),
            config=resolved,
            seed=self.seed,
        )
        self.writer.write_json("config.resolved.json", resolved)

        results = await handler(self, self.config)
        stage_logger.total_steps += len(results) - 1
        for result in results:
            manifest.record_stage(result)
            stage_logger.step(f"{result.stage}: {result.status.value} ({result.message})", success=result.success)
            for error in result.errors:
                self.logger.warning(f"  {result.stage}: {error}")

        mismatched = self.writer.verify()
        if mismatched:
            manifest.record_stage(
                StageResult.error_result(
                    "artifacts", StageStatus.NUMERICAL_ERROR, "artifact checksum mismatch", mismatched
                )
            )
        manifest.timings = drain_timings()
        manifest.compute_exit_code()
        path = self.writer.write_manifest(manifest)
        self.logger.info(f"Manifest written to {path}")
        return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiclassical-lab", description="Semiclassical numerical experiments")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        sub = subparsers.add_parser(kind, help=f"Run the {kind} experiment")
        sub.add_argument("--config", help="Experiment JSON file")
        sub.add_argument("--out", help="Output directory")
        sub.add_argument("--seed", type=int, help="Random seed")
        sub.add_argument("--threads", type=int, help="Worker threads")
        sub.add_argument("--tol", type=float, help="Verdict tolerance override")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with CLI overrides; the subcommand picks the pipeline."""
    if args.config:
        config = load_config(args.config)
        if config.kind != args.command:
            config = config.model_copy(update={"kind": args.command})
    else:
        config = ExperimentConfig(kind=args.command)
    return apply_overrides(config, output_dir=args.out, seed=args.seed, threads=args.threads, tol=args.tol)


async def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one experiment and return the process exit code."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    stage_logger = setup_logging_preset(settings.logging_preset, settings.log_file)
    logger = get_logger("main")

    stage_logger.start_sequence(3, f"{args.command} experiment")
    overall_start = time.time()

    try:
        config = resolve_config(args)
        runner = ExperimentRunner(config)
        stage_logger.step(f"Configuration validated (seed={runner.seed}, threads={config.threads})")
    except ConfigurationError as e:
        stage_logger.step(f"Configuration failed: {e}", success=False)
        return EXIT_CODES[StageStatus.CONFIG_ERROR]

    runner.load_experiments(stage_logger)

    try:
        manifest = await runner.run(stage_logger)
    except ConfigurationError as e:
        stage_logger.step(f"Run rejected: {e}", success=False)
        return EXIT_CODES[StageStatus.CONFIG_ERROR]

    log_performance("run", time.time() - overall_start, kind=config.kind)
    stage_logger.complete(f"{config.kind} finished with exit code {manifest.exit_code}")
    if manifest.exit_code:
        logger.warning(f"Run ended with exit code {manifest.exit_code}")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
