"""Tests for the experiment runner, the stage guard and the command-line entry point."""

import json
import logging
from unittest.mock import patch

import numpy as np
import pytest

import main as lab_main
from experiments import observability
from main import ExperimentRunner, build_parser, resolve_config
from numerics.errors import ConfigurationError, ResolutionError
from numerics.propagation import EvolutionReport, TransportResult
from numerics.quantization import CartesianField
from utils.artifacts import ArtifactWriter, config_hash
from utils.config import EXPERIMENT_KINDS, ExperimentConfig
from utils.logging_config import StageLogger
from utils.models import StageResult, StageStatus
from utils.stages import stage_guard


@pytest.fixture
def stage_logger():
    logger = StageLogger(logging.getLogger("lab.tests"))
    logger.start_sequence(1, "test run")
    return logger


@pytest.fixture
def make_runner(tmp_path):
    def _factory(kind="flow", **kwargs):
        config = ExperimentConfig(kind=kind, output_dir=str(tmp_path / "run"), seed=3, **kwargs)
        return ExperimentRunner(config, ArtifactWriter(config.output_dir))

    return _factory


def handler_returning(*results):
    async def handler(runner, config):
        return list(results)

    return handler


class TestRunner:
    @pytest.mark.asyncio
    async def test_passing_run(self, make_runner, stage_logger):
        runner = make_runner()
        runner.register("flow", handler_returning(StageResult.success_result("flow_ensemble")))

        manifest = await runner.run(stage_logger)

        assert manifest.exit_code == 0
        assert manifest.seed == 3
        assert manifest.config_hash == config_hash(runner.config.model_dump(mode="json"))
        assert (runner.writer.out_dir / "config.resolved.json").is_file()
        saved = json.loads((runner.writer.out_dir / "manifest.json").read_text())
        assert [s["stage"] for s in saved["stages"]] == ["flow_ensemble"]
        assert [a["path"] for a in saved["artifacts"]] == ["config.resolved.json"]

    @pytest.mark.asyncio
    async def test_exit_code_is_most_severe_stage(self, make_runner, stage_logger):
        runner = make_runner()
        runner.register(
            "flow",
            handler_returning(
                StageResult.verdict_result("a", False, "missed"),
                StageResult.error_result("b", StageStatus.NUMERICAL_ERROR, "diverged"),
            ),
        )

        manifest = await runner.run(stage_logger)

        assert manifest.exit_code == 3
        assert stage_logger.total_steps == 2

    @pytest.mark.asyncio
    async def test_tampered_artifact_is_reported(self, make_runner, stage_logger):
        runner = make_runner()

        async def handler(runner, config):
            runner.writer.write_json("flow/summary.json", {"value": 1})
            (runner.writer.out_dir / "flow/summary.json").write_text("{}")
            return [StageResult.success_result("flow_ensemble")]

        runner.register("flow", handler)
        manifest = await runner.run(stage_logger)

        assert manifest.stages[-1].stage == "artifacts"
        assert manifest.stages[-1].errors == ["flow/summary.json"]
        assert manifest.exit_code == 3

    @pytest.mark.asyncio
    async def test_missing_handler(self, make_runner, stage_logger):
        with pytest.raises(ConfigurationError):
            await make_runner(kind="garding").run(stage_logger)

    @pytest.mark.asyncio
    async def test_to_thread(self, make_runner):
        runner = make_runner(threads=2)
        assert await runner.to_thread(sum, [1, 2, 3]) == 6

    def test_duplicate_registration(self, make_runner):
        runner = make_runner()
        runner.register("flow", handler_returning())
        with pytest.raises(ValueError):
            runner.register("flow", handler_returning())

    def test_streams_are_reproducible(self, make_runner):
        runner = make_runner()

        first = runner.rng("flow").random(4)
        again = runner.rng("flow").random(4)
        other = runner.rng("bridge").random(4)

        assert first.tolist() == again.tolist()
        assert first.tolist() != other.tolist()

    def test_shared_values(self, make_runner):
        runner = make_runner()
        runner.share("residuals", [(0.1, 0.01)])

        assert runner.shared("residuals") == [(0.1, 0.01)]
        assert runner.shared("missing", 5) == 5

    def test_loads_every_pipeline(self, make_runner, stage_logger):
        runner = make_runner()
        runner.load_experiments(stage_logger)

        assert set(runner.handlers) == set(EXPERIMENT_KINDS)


class TestStageGuard:
    @pytest.mark.asyncio
    async def test_numerical_error(self):
        @stage_guard("transport")
        async def stage():
            raise ResolutionError("too coarse")

        result = await stage()

        assert result.status is StageStatus.NUMERICAL_ERROR
        assert result.message.startswith("ResolutionError")
        assert result.errors == ["too coarse"]

    @pytest.mark.asyncio
    async def test_rejected_input(self):
        @stage_guard("sweep")
        async def stage():
            raise ValueError("h_list must be strictly decreasing")

        assert (await stage()).status is StageStatus.CONFIG_ERROR

    @pytest.mark.asyncio
    async def test_passes_results_through(self):
        @stage_guard("ok")
        async def stage():
            return StageResult.success_result("ok")

        result = await stage()

        assert result.success
        assert result.seconds >= 0.0

    @pytest.mark.asyncio
    async def test_unexpected_errors_are_numerical(self):
        @stage_guard("broken")
        async def stage():
            raise RuntimeError("integrator gave up")

        result = await stage()

        assert result.status is StageStatus.NUMERICAL_ERROR
        assert result.message == "RuntimeError: integrator gave up"

    @pytest.mark.asyncio
    async def test_linalg_error_is_numerical(self):
        @stage_guard("eigen")
        async def stage():
            raise np.linalg.LinAlgError("Eigenvalues did not converge")

        assert (await stage()).status is StageStatus.NUMERICAL_ERROR

    @pytest.mark.asyncio
    async def test_unexpected_error_still_gives_manifest(self, make_runner, stage_logger):
        @stage_guard("flow_ensemble")
        async def stage(runner, config):
            raise FloatingPointError("overflow in exp")

        async def handler(runner, config):
            return [await stage(runner, config)]

        runner = make_runner()
        runner.register("flow", handler)
        manifest = await runner.run(stage_logger)

        assert manifest.exit_code == 3
        assert manifest.stages[0].status is StageStatus.NUMERICAL_ERROR
        assert (runner.writer.out_dir / "manifest.json").is_file()


class TestObservabilityStage:
    @pytest.mark.asyncio
    async def test_norm_drift_is_numerical_error(self, make_runner):
        runner = make_runner(kind="observability", observability={"h_list": [0.1, 0.05], "T": 0.1, "dt": 0.05})

        def transported(h, L, N):
            return TransportResult(field=CartesianField.zeros(4.0, 16, h), norm_deficit=0.0)

        def drifting(u, model, cfg):
            report = EvolutionReport(
                h=u.h,
                times=np.array([0.0, 0.05, 0.1]),
                region_mass=np.zeros(3),
                cumulative=np.zeros(3),
                norms=np.array([1.0, 1.0 - 1e-6, 1.0 - 2e-6]),
            )
            return u, report

        with (
            patch.object(observability, "build_quasimode", side_effect=lambda spec, h: h),
            patch.object(observability, "apply_P_minus_E", return_value=CartesianField.zeros(4.0, 16, 0.1)),
            patch.object(observability, "polar_to_cartesian", side_effect=transported),
            patch.object(observability, "evolve_region_mass", side_effect=drifting),
        ):
            result = await observability.run_observability(runner, runner.config)

        assert result.status is StageStatus.NUMERICAL_ERROR
        assert len(result.errors) == 2
        assert "norm drift 2.000e-05" in result.errors[0]
        assert (runner.writer.out_dir / "observability/summary.csv").is_file()


class TestCommandLine:
    def test_subcommand_overrides_config_kind(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"kind": "flow", "energy": 1.0}), encoding="utf-8")
        args = build_parser().parse_args(["quasimode", "--config", str(path), "--seed", "9"])

        config = resolve_config(args)

        assert config.kind == "quasimode"
        assert config.energy == 1.0
        assert config.seed == 9

    def test_defaults_without_config(self):
        args = build_parser().parse_args(["garding", "--threads", "2"])
        config = resolve_config(args)

        assert config.kind == "garding"
        assert config.threads == 2

    def test_unknown_command_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["spectrum"])

    @pytest.mark.asyncio
    async def test_bad_config_returns_two(self, tmp_path, stage_logger):
        with patch.object(lab_main, "setup_logging_preset", return_value=stage_logger):
            code = await lab_main.main(["flow", "--config", str(tmp_path / "absent.json")])

        assert code == 2

    @pytest.mark.asyncio
    async def test_flow_run_end_to_end(self, tmp_path, stage_logger):
        config = {
            "kind": "flow",
            "potential": {"cos": {"1": 1.0}},
            "flow": {
                "initial_point": [0.0, 1.5707963267948966, 1.0],
                "t_end": 50.0,
                "bridge_scenarios": 0,
                "potentials": ["configured", "quartic"],
            },
        }
        path = tmp_path / "flow.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        out = tmp_path / "out"

        with patch.object(lab_main, "setup_logging_preset", return_value=stage_logger):
            code = await lab_main.main(["flow", "--config", str(path), "--out", str(out), "--seed", "1"])

        manifest = json.loads((out / "manifest.json").read_text())
        assert code == manifest["exit_code"]
        assert [s["stage"] for s in manifest["stages"]] == ["flow_ensemble", "flow_bridge"]
        assert manifest["stages"][1]["status"] == "exploratory"
        paths = {a["path"] for a in manifest["artifacts"]}
        assert {
            "config.resolved.json",
            "flow/ensemble.csv",
            "flow/trajectory_configured.csv",
            "flow/trajectory_quartic.csv",
        } <= paths
        diagnostics = json.loads((out / "flow/diagnostics.json").read_text())
        assert diagnostics["potentials"] == ["configured", "quartic"]
