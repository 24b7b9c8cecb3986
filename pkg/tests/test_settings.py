"""Tests for training schedules and run configuration."""

import pytest

from src.settings import (
    DEFAULT_SETTINGS,
    EMOTION_CLASSES,
    REFERENCE_CLASS_COUNTS,
    AaeSettings,
    RunConfig,
    SvmSettings,
    TrainSchedule,
    baseline_schedule,
    format_key_values,
    improved_schedule,
    load_run_config,
    parse_key_values,
    vanilla_schedule,
)


class TestTrainSchedule:
    """Tests for TrainSchedule validation and presets."""

    def test_baseline_preset(self):
        schedule = baseline_schedule()
        assert schedule.gen_lr == schedule.disc_lr == 2e-4
        assert schedule.gen_steps_per_disc_step == 1
        assert schedule.init == "random"

    def test_improved_preset(self):
        schedule = improved_schedule(epochs=10, batch_size=8)
        assert schedule.gen_lr == 1e-3
        assert schedule.disc_lr == 1e-4
        assert schedule.gen_steps_per_disc_step == 5
        assert schedule.init == "from_decoder"
        assert (schedule.epochs, schedule.batch_size) == (10, 8)

    def test_vanilla_preset(self):
        assert vanilla_schedule().init == "random"

    @pytest.mark.parametrize("kwargs", [
        {"gen_lr": 0.0},
        {"disc_lr": -1e-3},
        {"gen_steps_per_disc_step": 0},
        {"epochs": 0},
        {"batch_size": 0},
        {"init": "pretrained"},
    ])
    def test_invalid_schedules(self, kwargs):
        with pytest.raises(ValueError):
            TrainSchedule(**kwargs)


class TestOtherSettings:
    """Tests for AAE, SVM and experiment settings."""

    def test_aae_defaults(self):
        settings = AaeSettings()
        assert settings.code_dim == 2
        assert settings.encoder_hidden == (512, 128)
        assert settings.decoder_hidden == (128, 512)

    def test_aae_rejects_bad_lr(self):
        with pytest.raises(ValueError):
            AaeSettings(learning_rate=0.0)

    def test_svm_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SvmSettings(C=0.0)
        with pytest.raises(ValueError):
            SvmSettings(gamma=-1.0)

    def test_synth_count_defaults_to_real_size(self):
        assert DEFAULT_SETTINGS.synth_count(320) == 320

    def test_class_tables_agree(self):
        assert list(REFERENCE_CLASS_COUNTS) == EMOTION_CLASSES


class TestKeyValues:
    """Tests for the flat key-value text format."""

    def test_parse_skips_comments_and_blanks(self):
        values = parse_key_values("# header\n\nseed = 4\n  corpus = a.csv  \n")
        assert values == {"seed": "4", "corpus": "a.csv"}

    def test_value_may_contain_equals(self):
        assert parse_key_values("expr = a=b")["expr"] == "a=b"

    def test_missing_equals_names_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_key_values("seed = 1\nbroken\n", "cfg.txt")

    def test_duplicate_key(self):
        with pytest.raises(ValueError, match="duplicate key 'seed'"):
            parse_key_values("seed = 1\nseed = 2\n")

    def test_format_then_parse(self):
        values = {"a": "1", "b": "x y"}
        assert parse_key_values(format_key_values(values)) == values


class TestRunConfig:
    """Tests for run configuration resolution."""

    def test_defaults(self):
        config = load_run_config()
        assert config == RunConfig()
        assert config.out_dir == "runs/latest"

    def test_file_values_typed(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 9\nsvm_c = 2.5\ncorpus = data/x.csv\n")
        config = load_run_config(path)
        assert config.seed == 9
        assert config.svm_c == 2.5
        assert config.corpus == "data/x.csv"

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 9\n")
        assert load_run_config(path, {"seed": "12"}).seed == 12

    def test_unknown_key_in_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("learning_rate = 1\n")
        with pytest.raises(ValueError, match="unknown config key 'learning_rate'"):
            load_run_config(path)

    def test_unknown_override(self):
        with pytest.raises(ValueError, match="unknown config key"):
            load_run_config(overrides={"nope": "1"})

    def test_unparseable_value(self):
        with pytest.raises(ValueError, match="cannot parse 'many' as int"):
            load_run_config(overrides={"gan_epochs": "many"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config(tmp_path / "absent.cfg")

    def test_echo_reproduces_config(self, tmp_path):
        config = load_run_config(overrides={"seed": "3", "improved_disc_lr": "0.00025", "workers": "2"})
        path = tmp_path / "echo.cfg"
        path.write_text(config.to_text())
        assert load_run_config(path) == config

    def test_schedules_follow_config(self):
        config = load_run_config(overrides={"gan_epochs": "7", "improved_gen_steps": "3", "baseline_lr": "0.001"})
        improved = config.schedule("improved")
        assert improved.epochs == 7
        assert improved.gen_steps_per_disc_step == 3
        assert improved.init == "from_decoder"
        assert config.schedule("baseline").gen_lr == 1e-3
        with pytest.raises(ValueError):
            config.schedule("wasserstein")

    def test_zero_gamma_means_heuristic(self):
        assert RunConfig().svm_settings().gamma is None
        assert RunConfig(svm_gamma=0.5).svm_settings().gamma == 0.5

    def test_experiment_settings(self):
        settings = RunConfig(seed=4, n_synth=100, aae_epochs=3).experiment_settings()
        assert settings.master_seed == 4
        assert settings.n_synth == 100
        assert settings.aae.epochs == 3
        assert settings.vanilla.init == "random"
