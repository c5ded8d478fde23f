from pathlib import Path

import pytest
import yaml

from api.config_manager.config_manager import (
    ENV_ARTIFACT_DIR,
    ConfigManager,
    ExperimentConfig,
    config_hash,
    load_config,
    log_level_from_env,
)
from core.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


@pytest.fixture
def manager(tmp_path, monkeypatch):
    monkeypatch.delenv(ENV_ARTIFACT_DIR, raising=False)
    return ConfigManager(env_file=tmp_path / ".env")


def _write(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_defaults_validate(manager):
    config = manager.load()
    assert config.environments == ["gridpick", "reacher"]
    assert config.vae.for_env("gridpick").label_budget == 600
    assert config.transfer.rules_for("gridpick", "target3").as_mapping() == {1: [2], 2: [4], 3: [1, 2]}
    assert config.transfer.rules_for("reacher", "reach_blue").rules == []
    assert config.transfer.rules_for("gridpick", "source").rules == []


@pytest.mark.parametrize("name", ["smoke.yaml", "experiment.yaml"])
def test_shipped_configs_load(manager, name):
    config = manager.load(CONFIG_DIR / name)
    assert config.config_version == "1"
    assert config.transfer.rules_for("reacher", "reach_red").as_mapping() == {1: [3], 3: [1]}


def test_smoke_config_anchors(manager):
    config = manager.load(CONFIG_DIR / "smoke.yaml")
    assert config.sac.gridpick.total_steps == config.sac.reacher.total_steps == 600
    assert config.sac.reacher.random_prefix_steps == 200
    assert config.vae.reacher.label_budget == 40


def test_field_errors_name_the_path(manager, tmp_path):
    path = _write(tmp_path, {"eval": {"seeds": []}, "vae": {"gridpick": {"epochs": 0}}})
    with pytest.raises(ConfigError) as info:
        manager.load(path)
    assert info.value.exit_code == 2
    assert any(line.startswith("eval.seeds") for line in info.value.field_errors)
    assert any(line.startswith("vae.gridpick.epochs") for line in info.value.field_errors)


def test_unknown_keys_are_rejected(manager, tmp_path):
    with pytest.raises(ConfigError) as info:
        manager.load(_write(tmp_path, {"sac": {"reacher": {"learning_rate_typo": 1.0}}}))
    assert any("learning_rate_typo" in line for line in info.value.field_errors)


def test_unsupported_version(manager, tmp_path):
    with pytest.raises(ConfigError) as info:
        manager.load(_write(tmp_path, {"config_version": "2"}))
    assert info.value.field_errors == ["config_version: expected '1'"]


def test_missing_and_unsupported_files(manager, tmp_path):
    with pytest.raises(ConfigError):
        manager.load(tmp_path / "absent.yaml")
    other = tmp_path / "config.toml"
    other.write_text("seed = 1", encoding="utf-8")
    with pytest.raises(ConfigError):
        manager.load(other)


def test_rules_from_plain_mappings(manager, tmp_path):
    path = _write(tmp_path, {"transfer": {"rules": {"gridpick": {"target1": {1: [2], 4: [3]}}}}})
    config = manager.load(path)
    assert config.transfer.rules_for("gridpick", "target1").as_mapping() == {1: [2], 4: [3]}
    assert config.transfer.rules_for("gridpick", "target2").rules == []


def test_rules_for_unknown_tasks(manager, tmp_path):
    with pytest.raises(ConfigError):
        manager.load(_write(tmp_path, {"transfer": {"rules": {"gridpick": {"target9": {1: [2]}}}}}))


def test_overrides_and_artifact_dir_from_environment(manager, tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_ARTIFACT_DIR, str(tmp_path / "out"))
    config = manager.load(CONFIG_DIR / "smoke.yaml", overrides={"seed": 9, "eval": {"jobs": 2}})
    assert config.seed == 9
    assert config.eval.jobs == 2
    assert config.eval.seeds == [0]
    assert config.paths.artifact_dir == str(tmp_path / "out")


def test_config_hash_is_stable(manager):
    a = manager.load()
    b = ExperimentConfig()
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(ExperimentConfig(seed=2))


def test_get_set_and_save(manager, tmp_path):
    manager.load()
    assert manager.get("vae.reacher.label_budget") == 250
    assert manager.get("vae.nothing", "fallback") == "fallback"
    manager.set("eval.jobs", 4)
    assert manager.model.eval.jobs == 4
    with pytest.raises(ConfigError):
        manager.set("eval.jobs", 0)
    assert manager.model.eval.jobs == 4

    for name in ("saved.yaml", "saved.json"):
        path = manager.save(tmp_path / name)
        reloaded = load_config(path, env_file=tmp_path / ".env")
        assert config_hash(reloaded) == config_hash(manager.model)
    assert manager.to_dict()["eval"]["jobs"] == 4


def test_log_level_from_env(monkeypatch):
    monkeypatch.setenv("MAGIK_LOG_LEVEL", "debug")
    assert log_level_from_env() == "DEBUG"
    monkeypatch.delenv("MAGIK_LOG_LEVEL")
    assert log_level_from_env() == "INFO"
