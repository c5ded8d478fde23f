from pathlib import Path

import pytest
import yaml

from api.cli.main import RUN_LOG, build_parser, plan, run
from api.config_manager.config_manager import ENV_ARTIFACT_DIR, ExperimentConfig
from core.pipeline import MANIFEST_FILE, PIPELINE, RunManifest

SMOKE = str(Path(__file__).resolve().parent.parent / "config" / "smoke.yaml")


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    path = tmp_path / "out"
    monkeypatch.setenv(ENV_ARTIFACT_DIR, str(path))
    monkeypatch.chdir(tmp_path)
    return path


class TestParser:
    def test_global_flags_before_or_after_the_command(self):
        parser = build_parser()
        before = parser.parse_args(["--config", "a.yaml", "--seed", "4", "collect", "--env", "reacher"])
        after = parser.parse_args(["collect", "--env", "reacher", "--config", "a.yaml", "--seed", "4"])
        for args in (before, after):
            assert (args.config, args.seed, args.env, args.command) == ("a.yaml", 4, "reacher", "collect")
        assert after.quiet is False

    def test_unknown_environment_is_a_usage_error(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["collect", "--env", "cartpole"])

    def test_plan_per_command(self):
        parser, config = build_parser(), ExperimentConfig()
        stages, envs, options = plan(parser.parse_args(["reproduce-all", "--jobs", "2"]), config)
        assert stages == list(PIPELINE) and envs == ["gridpick", "reacher"] and options == {"jobs": 2}
        stages, envs, _ = plan(parser.parse_args(["sweep", "labels"]), config)
        assert (stages, envs) == (["sweep-labels"], ["gridpick"])
        stages, envs, _ = plan(parser.parse_args(["sweep", "diversity"]), config)
        assert (stages, envs) == (["sweep-diversity"], ["reacher"])
        _, envs, options = plan(parser.parse_args(["evaluate", "--target", "red"]), config)
        assert envs == ["reacher"] and options == {"target": "red"}
        _, envs, options = plan(parser.parse_args(["collect", "--mode", "random", "--steps", "50"]), config)
        assert envs == ["gridpick", "reacher"] and options == {"mode": "random", "n_steps": 50}


class TestRun:
    def test_missing_input_exits_with_3(self, out_dir):
        code = run(["train-vae", "--env", "reacher", "--config", SMOKE, "--quiet"])
        assert code == 3
        assert "run collect first" in (out_dir / RUN_LOG).read_text(encoding="utf-8")
        manifest = RunManifest.read(out_dir / MANIFEST_FILE)
        assert manifest.status == "failed"
        assert manifest.command.startswith("magik train-vae")

    def test_invalid_config_exits_with_2(self, out_dir, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"eval": {"seeds": []}}), encoding="utf-8")
        assert run(["label", "--config", str(bad), "--quiet"]) == 2
        assert run(["label", "--config", str(tmp_path / "absent.yaml"), "--quiet"]) == 2

    def test_unknown_target_exits_with_2(self, out_dir):
        assert run(["finetune", "--target", "purple", "--config", SMOKE, "--quiet"]) == 2

    @pytest.mark.slow
    def test_smoke_reproduce_all(self, out_dir):
        assert run(["reproduce-all", "--config", SMOKE, "--quiet"]) == 0
        for name in ("table1.csv", "table2.csv", "traversal.png", "budget_comparison.csv", "vae_diagnostics.csv"):
            assert (out_dir / name).is_file(), name
        manifest = RunManifest.read(out_dir / MANIFEST_FILE)
        assert manifest.status == "ok"
        assert len(manifest.stages) == len(PIPELINE) * 2
