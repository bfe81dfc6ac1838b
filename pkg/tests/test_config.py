"""Tests for environment settings and experiment configuration parsing."""

import json
import os
from unittest.mock import patch

import pytest
from pydantic import ValidationError

from numerics.errors import ConfigurationError
from utils.config import (
    ExperimentConfig,
    Settings,
    apply_overrides,
    load_config,
    parse_config,
)


class TestSettings:
    def test_from_env(self):
        env = {"LOGGING_PRESET": "production", "LAB_THREADS": "4", "LAB_SEED": "7"}
        with patch.dict(os.environ, env), patch("utils.config.load_dotenv"):
            settings = Settings.from_env()

        assert settings.logging_preset == "production"
        assert settings.threads == 4
        assert settings.seed == 7

    def test_unknown_preset_falls_back(self):
        assert Settings(logging_preset="verbose").logging_preset == "development"

    def test_thread_range(self):
        with pytest.raises(ValidationError):
            Settings(threads=0)


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig(kind="flow")

        assert config.schema_version == "1"
        assert config.flow.method == "DOP853"
        assert config.pairings.h_list == [0.2, 0.14, 0.1, 0.07]
        assert config.garding.trials == 20
        assert config.garding.N == 48
        assert config.flow.potentials == ["cosine", "quartic"]
        assert config.build_potential().v_inf(0.0) == pytest.approx(0.0)

    def test_flow_potentials_unique(self):
        with pytest.raises(ConfigurationError):
            parse_config({"kind": "flow", "flow": {"potentials": ["cosine", "cosine"]}})
        with pytest.raises(ConfigurationError):
            parse_config({"kind": "flow", "flow": {"potentials": []}})

    def test_explicit_seed_wins(self):
        assert ExperimentConfig(kind="flow", seed=11).resolved_seed() == 11

    def test_kind_alias(self):
        assert parse_config({"kind": "gaarding"}).kind == "garding"

    def test_json_coefficient_keys(self):
        config = parse_config({"kind": "flow", "potential": {"cos": {"1": 1.0}}})
        assert config.potential.cos == {1: 1.0}

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigurationError) as excinfo:
            parse_config({"kind": "flow", "potentail": {}})
        assert "potentail: unknown key (did you mean 'potential'?)" in str(excinfo.value)

    def test_unknown_section_key(self):
        with pytest.raises(ConfigurationError) as excinfo:
            parse_config({"kind": "flow", "flow": {"tol_": 1e-8}})
        assert "flow.tol_" in str(excinfo.value)
        assert "did you mean 'tol'?" in str(excinfo.value)

    def test_h_list_must_decrease(self):
        with pytest.raises(ConfigurationError) as excinfo:
            parse_config({"kind": "quasimode", "quasimode": {"h_list": [0.05, 0.1]}})
        assert "quasimode.h_list" in str(excinfo.value)

    def test_pairing_sweep_length(self):
        with pytest.raises(ConfigurationError):
            parse_config({"kind": "pairings", "pairings": {"h_list": [0.2, 0.1, 0.05]}})

    def test_schema_version(self):
        with pytest.raises(ConfigurationError):
            parse_config({"kind": "flow", "schema_version": "2"})

    def test_empty_potential(self):
        with pytest.raises(ConfigurationError):
            parse_config({"kind": "flow", "potential": {"cos": {}}})

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            parse_config({"kind": "spectrum"})


class TestLoadConfig:
    def test_reads_file(self, tmp_path):
        path = tmp_path / "flow.json"
        path.write_text(json.dumps({"kind": "flow", "energy": 2.0}), encoding="utf-8")

        config = load_config(path)

        assert config.kind == "flow"
        assert config.energy == 2.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{kind: flow", encoding="utf-8")
        with pytest.raises(ConfigurationError) as excinfo:
            load_config(path)
        assert "invalid JSON" in str(excinfo.value)

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_config(path)


class TestOverrides:
    def test_no_overrides_is_identity(self):
        config = ExperimentConfig(kind="flow")
        assert apply_overrides(config) is config

    def test_flags_replace_file_values(self):
        config = ExperimentConfig(kind="flow", seed=1)

        updated = apply_overrides(config, output_dir="runs/x", seed=5, threads=3, tol=0.05)

        assert (updated.output_dir, updated.seed, updated.threads, updated.tol) == ("runs/x", 5, 3, 0.05)
        assert config.seed == 1

    def test_overrides_are_validated(self):
        with pytest.raises(ConfigurationError):
            apply_overrides(ExperimentConfig(kind="flow"), threads=0)
