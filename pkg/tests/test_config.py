"""Tests für Lauf-Konfiguration und Logging-Setup."""

import logging

import pytest

from snnd.config import (
    CONFIG_KEYS,
    AttackConfig,
    DistillConfig,
    LifParams,
    RunConfig,
    default_log_level,
    parse_value,
    setup_logging,
)
from snnd.errors import ConfigError


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig.from_file()
        assert config.get("model.timesteps") == 5
        assert config.get("distill.scheme") == "s2w"
        assert config.explicit_keys == set()

    def test_file_and_overrides(self, run_config_file):
        config = RunConfig.from_file(
            run_config_file, ["distill.scheme=w2s", "model.hidden_sizes=16,4"]
        )
        assert config.get("model.timesteps") == 3
        assert config.get("distill.scheme") == "w2s"
        assert config.get("model.hidden_sizes") == [16, 4]
        assert {"model.timesteps", "distill.scheme", "seed.data"} <= config.explicit_keys
        assert "log.level" not in config.explicit_keys

    def test_override_wins_over_file(self, run_config_file):
        config = RunConfig.from_file(run_config_file, ["optim.epochs=7"])
        assert config.get("optim.epochs") == 7

    def test_missing_file_names_path(self, tmp_path):
        path = tmp_path / "fehlt.cfg"
        with pytest.raises(ConfigError) as exc:
            RunConfig.from_file(path)
        assert str(path) in str(exc.value)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("model.depth = 3\n", encoding="utf-8")
        with pytest.raises(ConfigError) as exc:
            RunConfig.from_file(path)
        assert "model.depth" in str(exc.value)

    @pytest.mark.parametrize(
        "override",
        [
            "optim.epochs=viele",
            "distill.scheme=teacher",
            "distill.detach_teacher=vielleicht",
            "model.hidden_sizes=",
            "optim.lr0",
            "data.train_fraction=1.0",
            "model.timesteps=1",
            "distill.alpha=0",
            "data.source=table",
        ],
    )
    def test_invalid(self, override):
        with pytest.raises(ConfigError):
            RunConfig.from_file(overrides=[override])

    def test_text_round_trip(self, run_config_file, tmp_path):
        config = RunConfig.from_file(run_config_file, ["distill.detach_teacher=yes"])
        text = config.to_text()
        assert text.splitlines()[1:] == sorted(text.splitlines()[1:])
        resolved = tmp_path / "resolved-config.txt"
        resolved.write_text(text, encoding="utf-8")
        assert RunConfig.from_file(resolved) == config
        assert len(text.splitlines()) == len(CONFIG_KEYS) + 1

    def test_with_override_copies(self, run_config_file):
        base = RunConfig.from_file(run_config_file)
        changed = base.with_override("distill.lambda_s2w", "0.5")
        assert changed.get("distill.lambda_s2w") == 0.5
        assert base.get("distill.lambda_s2w") == 1.0

    def test_sub_configs(self, run_config_file):
        config = RunConfig.from_file(run_config_file)
        snn = config.snn_config(features=6, num_classes=3)
        assert snn.layer_sizes == [6, 8, 3]
        assert config.optim_config().seed == 2
        assert config.synth_config().timesteps == 3

    def test_parse_value_bool(self):
        assert parse_value("distill.detach_teacher", "True") is True
        assert parse_value("distill.detach_teacher", "0") is False


class TestDataclassValidation:
    def test_lif(self):
        with pytest.raises(ConfigError):
            LifParams(tau=1.0)
        assert LifParams(tau=4.0).leak == pytest.approx(0.75)

    def test_distill_is_active(self):
        assert not DistillConfig(scheme="none").is_active
        assert not DistillConfig(scheme="s2w", lambda_s2w=0.0).is_active
        assert DistillConfig(scheme="w2s", lambda_s2w=0.0).is_active
        assert not DistillConfig(scheme="cascade", direction="w2s", lambda_w2s=0.0).is_active

    def test_attack(self):
        with pytest.raises(ConfigError):
            AttackConfig("cw")
        with pytest.raises(ConfigError):
            AttackConfig("fgsm", epsilon=-0.1)


class TestLogging:
    def test_idempotent(self):
        setup_logging("DEBUG")
        logger = setup_logging("WARNING")
        own = [h for h in logger.handlers if getattr(h, "_snnd_handler", False)]
        assert len(own) == 1
        assert logger.level == logging.WARNING

    def test_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("SNND_LOG_LEVEL", "ERROR")
        assert default_log_level() == "ERROR"
        monkeypatch.delenv("SNND_LOG_LEVEL")
        assert default_log_level() == "INFO"
