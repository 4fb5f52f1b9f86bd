"""Experiment configuration loading, overlay precedence, and round trips."""
import numpy as np
import pytest

from wetchicken import config as cfgmod
from wetchicken.config import (EvalSettings, ExperimentConfig, NfqSettings,
                               PolicySettings)
from wetchicken.dagp import TrainConfig
from wetchicken.errors import ContractViolation


class TestDefaults:
    def test_default_sweep_shape(self):
        cfg = ExperimentConfig()
        assert cfg.sizes == [100, 250, 500, 1000, 2500, 5000]
        assert cfg.seeds == list(range(10))
        assert cfg.methods == ["dagp", "gp", "nfq", "random"]

    def test_default_sections_match_module_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.model == TrainConfig()
        assert cfg.policy == PolicySettings()
        assert cfg.policy.horizon == 5
        assert cfg.policy.samples == 20
        assert cfg.policy.gamma == 0.9
        assert cfg.nfq.iterations == 20
        assert cfg.evaluation == EvalSettings(horizon=100, rollouts=1000)

    def test_nfq_settings_build_module_config(self):
        nfq = NfqSettings(gamma=0.8, learning_rate=2e-3)
        built = nfq.to_config(seed=4)
        assert built.gamma == 0.8
        assert built.learning_rate == 2e-3
        assert built.seed == 4


class TestValidation:
    def test_rejects_empty_lists(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig(sizes=[])
        with pytest.raises(ContractViolation):
            ExperimentConfig(seeds=[])
        with pytest.raises(ContractViolation):
            ExperimentConfig(methods=[])

    def test_rejects_unknown_method(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig(methods=["dagp", "dqn"])

    def test_rejects_bad_sizes(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig(sizes=[100, 0])
        with pytest.raises(ContractViolation):
            ExperimentConfig(sizes=[100.5])

    def test_rejects_unknown_top_level_key(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig.from_dict({"szies": [100]})

    def test_rejects_unknown_section_key(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig.from_dict({"model": {"iterations": 10,
                                                  "warmup": 5}})

    def test_rejects_invalid_section_values(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig.from_dict({"policy": {"gamma": 1.5}})
        with pytest.raises(ContractViolation):
            ExperimentConfig.from_dict({"nfq": {"iterations": 0}})


class TestRoundTrip:
    def test_dict_round_trip_is_identity(self):
        cfg = ExperimentConfig(sizes=[250, 2500], seeds=[0, 1, 2],
                               methods=["dagp", "random"],
                               model=TrainConfig(iterations=60,
                                                 heuristic_belief_init=True))
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_file_round_trip_is_identity(self, tmp_path):
        cfg = ExperimentConfig(
            sizes=[100, 250], seeds=[3, 4],
            model=TrainConfig(iterations=50, n_inducing=20,
                              z_init="kmeans"),
            policy=PolicySettings(steps=10, samples=3),
            nfq=NfqSettings(iterations=2),
            evaluation=EvalSettings(horizon=10, rollouts=9))
        path = tmp_path / "sweep.yaml"
        cfg.save(path)
        assert ExperimentConfig.load(path) == cfg
        # parse -> serialize -> parse fixed point
        again = tmp_path / "sweep2.yaml"
        ExperimentConfig.load(path).save(again)
        assert again.read_text() == path.read_text()

    def test_partial_file_overlays_defaults(self, tmp_path):
        path = tmp_path / "partial.yaml"
        path.write_text("sizes: [250]\nmodel:\n  iterations: 99\n")
        cfg = ExperimentConfig.load(path)
        assert cfg.sizes == [250]
        assert cfg.model.iterations == 99
        assert cfg.model.minibatch == TrainConfig().minibatch
        assert cfg.seeds == list(range(10))

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert ExperimentConfig.load(path) == ExperimentConfig()

    def test_unparseable_file_is_typed_error(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("sizes: [100,\n  {")
        with pytest.raises(ContractViolation):
            ExperimentConfig.load(path)


class TestOverride:
    def test_flags_beat_file_values(self):
        cfg = ExperimentConfig(sizes=[100], seeds=[0])
        updated = cfg.override(sizes=[250, 500], seeds=None)
        assert updated.sizes == [250, 500]
        assert updated.seeds == [0]
        # the original is untouched
        assert cfg.sizes == [100]

    def test_none_overrides_are_ignored(self):
        cfg = ExperimentConfig()
        assert cfg.override(sizes=None, methods=None) == cfg

    def test_override_revalidates(self):
        with pytest.raises(ContractViolation):
            ExperimentConfig().override(methods=["bogus"])
