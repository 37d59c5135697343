"""Experiment configuration: validation, scaling, hashing, serialization."""

import json

import pytest

from radarmeta.experiment import ConfigError, ExperimentConfig


class TestDefaults:
    def test_paper_scale_numbers(self):
        cfg = ExperimentConfig()
        assert cfg.k_chips == 16
        assert cfg.offline_count == 400_000
        assert cfg.adapt_count == 8_000
        assert cfg.test_h0_count == 200_000
        assert cfg.test_h1_count == 50_000
        assert cfg.n_train_envs == 40
        assert cfg.layer_sizes() == [32, 48, 48, 1]
        assert cfg.inner_lr == 0.2
        assert cfg.outer_lr == 0.002
        assert cfg.adapt_lr == 0.002
        assert cfg.minibatch == 128
        assert cfg.meta_batch == 10
        assert cfg.adapt_steps == 40

    def test_environments(self):
        cfg = ExperimentConfig()
        envs = cfg.training_environments()
        assert len(envs) == 40
        adapt = cfg.adaptation_environment("gaussian")
        assert (adapt.snr_db, adapt.sir_db) == (20.0, 16.0)
        assert (adapt.f_lower, adapt.f_upper) == (0.4, 0.6)
        test_g = cfg.test_environment("gaussian")
        assert test_g.snr_db == 13.0
        assert test_g.shape == 2.0
        test_h = cfg.test_environment("heavy")
        assert test_h.snr_db == 25.0
        assert test_h.shape == 0.25
        # test env differs from adaptation env only in snr and label
        assert (test_h.sir_db, test_h.f_lower, test_h.f_upper) == (16.0, 0.4, 0.6)


class TestScaling:
    def test_desk_scale(self):
        cfg = ExperimentConfig(scale=0.1)
        assert cfg.scaled_offline_count == 40_000
        assert cfg.scaled_offline_iters == 2_000
        assert cfg.scaled_adapt_count == 800
        assert cfg.scaled_test_h0_count == 20_000
        assert cfg.scaled_test_h1_count == 5_000

    def test_full_scale_identity(self):
        cfg = ExperimentConfig(scale=1.0)
        assert cfg.scaled_offline_count == 400_000
        assert cfg.scaled_offline_iters == cfg.offline_iters

    def test_counts_stay_even(self):
        cfg = ExperimentConfig(scale=0.0779, test_h0_count=200_000)
        assert cfg.scaled_offline_count % 2 == 0
        assert cfg.scaled_adapt_count % 2 == 0

    def test_scale_bounds(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scale=0.0)
        with pytest.raises(ConfigError):
            ExperimentConfig(scale=1.5)

    def test_too_small_scale_for_pfa(self):
        # h0 pool must keep >= 10 exceedances at the smallest pfa target
        with pytest.raises(ConfigError, match="too small"):
            ExperimentConfig(scale=0.01)


class TestValidation:
    def test_meta_batch_vs_envs(self):
        with pytest.raises(ConfigError, match="meta_batch"):
            ExperimentConfig(meta_batch=50)

    def test_bad_pfa(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(fig2_pfa=0.0)

    def test_bad_lr(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(adapt_lr=-0.1)


class TestSerialization:
    def test_roundtrip(self):
        cfg = ExperimentConfig(scale=0.25, master_seed=7)
        doc = cfg.to_dict()
        again = ExperimentConfig.from_dict(doc)
        assert again == cfg

    def test_json_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(scale=0.5)
        path = tmp_path / "cfg.json"
        cfg.save_json(path)
        again = ExperimentConfig.from_json(path)
        assert again == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"no_such_option": 1})

    def test_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(path)


class TestHash:
    def test_stable(self):
        assert ExperimentConfig().config_hash() == ExperimentConfig().config_hash()

    def test_sensitive_to_fields(self):
        a = ExperimentConfig()
        assert a.config_hash() != ExperimentConfig(master_seed=a.master_seed + 1).config_hash()
        assert a.config_hash() != ExperimentConfig(scale=0.5).config_hash()

    def test_saved_file_carries_hash(self, tmp_path):
        cfg = ExperimentConfig()
        path = tmp_path / "cfg.json"
        cfg.save_json(path)
        doc = json.loads(path.read_text())
        assert doc["_config_hash"] == cfg.config_hash()

    def test_grid_pfa_includes_readouts(self):
        cfg = ExperimentConfig()
        grid = cfg.roc_pfa_grid()
        assert len(grid) == 25
        assert min(grid) == pytest.approx(1e-3)
        assert max(grid) == 1.0
        assert any(abs(v - 1e-2) < 1e-12 for v in grid)
