"""Tests for artifact writers, checksums, field formats and the run manifest."""

import json

import numpy as np
import pytest

from numerics.quantization import CartesianField
from numerics.quasimodes import PolarField, PolarGrid
from utils.artifacts import ArtifactWriter, config_hash, read_cartesian, read_polar, sha256_file
from utils.models import RunManifest, StageResult, StageStatus


@pytest.fixture
def writer(tmp_path):
    return ArtifactWriter(tmp_path / "run")


class TestTables:
    def test_csv_header_and_precision(self, writer):
        record = writer.write_csv("flow/table.csv", ["t", "value"], np.array([[0.0, 1.0 / 3.0]]))

        lines = (writer.out_dir / "flow/table.csv").read_text().splitlines()
        assert lines[0] == "t,value"
        assert float(lines[1].split(",")[1]) == 1.0 / 3.0
        assert record.kind == "csv"
        assert record.sha256 == sha256_file(writer.out_dir / "flow/table.csv")

    def test_column_count_checked(self, writer):
        with pytest.raises(ValueError):
            writer.write_csv("bad.csv", ["a"], np.zeros((2, 2)))

    def test_records(self, writer):
        writer.write_records("rows.csv", ["h", "symbol", "valid"], [{"h": 0.1, "symbol": "a", "valid": True}])

        lines = (writer.out_dir / "rows.csv").read_text().splitlines()
        assert lines == ["h,symbol,valid", "0.10000000000000001,a,True"]

    def test_json_is_sorted(self, writer):
        writer.write_json("summary.json", {"b": np.float64(2.0), "a": np.arange(2)})

        assert json.loads((writer.out_dir / "summary.json").read_text()) == {"a": [0, 1], "b": 2.0}

    def test_rewrite_replaces_record(self, writer):
        writer.write_json("summary.json", {"a": 1})
        writer.write_json("summary.json", {"a": 2})

        assert [r.path for r in writer.records] == ["summary.json"]
        assert writer.verify() == []


class TestVerify:
    def test_detects_tampering(self, writer):
        writer.write_json("summary.json", {"a": 1})
        (writer.out_dir / "summary.json").write_text("{}")

        assert writer.verify() == ["summary.json"]

    def test_detects_missing_file(self, writer):
        writer.write_json("summary.json", {"a": 1})
        (writer.out_dir / "summary.json").unlink()

        assert writer.verify() == ["summary.json"]


class TestFieldFormats:
    def test_cartesian_round_trip(self, writer):
        samples = np.arange(16, dtype=float).reshape(4, 4) * (1.0 - 0.5j)
        field = CartesianField(L=1.5, N=4, h=0.1, samples=samples, dilated=True)

        writer.write_cartesian("fields/u.csv", field)
        restored = read_cartesian(writer.out_dir / "fields/u.csv")

        assert restored.L == 1.5
        assert restored.h == 0.1
        assert restored.dilated
        assert np.array_equal(restored.samples, samples)

    def test_polar_round_trip(self, writer):
        grid = PolarGrid(r_min=1.0, r_max=2.0, N_r=16, N_theta=8)
        samples = np.outer(np.linspace(0.0, 1.0, 16), np.exp(1j * grid.theta))
        field = PolarField(grid=grid, h=0.05, samples=samples)

        writer.write_polar("fields/q.csv", field)
        restored = read_polar(writer.out_dir / "fields/q.csv")

        assert restored.grid.N_theta == 8
        assert restored.h == 0.05
        assert np.array_equal(restored.samples, samples)


class TestManifest:
    def test_config_hash_ignores_key_order(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_manifest_lists_artifacts(self, writer):
        writer.write_json("b.json", {})
        writer.write_csv("a.csv", ["x"], np.array([[1.0]]))
        manifest = RunManifest(tool_version="0.1.0", config_hash="abc", config={"kind": "flow"}, seed=1)
        manifest.record_stage(StageResult.success_result("flow"))
        manifest.record_stage(StageResult.verdict_result("bridge", False, "too far"))

        path = writer.write_manifest(manifest)
        data = json.loads(path.read_text())

        assert [a["path"] for a in data["artifacts"]] == ["a.csv", "b.json"]
        assert manifest.compute_exit_code() == 1
        assert data["stages"][1]["status"] == "verdict_failed"

    def test_exit_code_is_most_severe(self):
        manifest = RunManifest(tool_version="0.1.0", config_hash="abc", config={}, seed=1)
        for status in (StageStatus.EXPLORATORY, StageStatus.CONFIG_ERROR, StageStatus.NUMERICAL_ERROR):
            manifest.record_stage(StageResult.error_result("s", status))

        assert manifest.compute_exit_code() == 3
        assert RunManifest(tool_version="0.1.0", config_hash="abc", config={}, seed=1).compute_exit_code() == 0
