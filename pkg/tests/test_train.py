"""Tests for parameter initialization and the training loop."""

import math
from unittest.mock import patch

import numpy as np
import pytest

from strata.errors import ConfigError, TrainingDivergedError, ValidationError
from strata.grad.optim import clip_grad_norm
from strata.grad.tensor import constant
from strata.train import TrainConfig, init_params, split_dataset, train


class TestTrainConfig:
    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            TrainConfig(train_fraction=0.7, val_fraction=0.2)

    def test_fractions_must_be_open_interval(self):
        with pytest.raises(ConfigError):
            TrainConfig(train_fraction=1.0, val_fraction=0.0)

    def test_epochs(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)

    def test_from_run(self, run_config):
        cfg = TrainConfig.from_run(run_config)
        assert cfg.epochs == run_config.EPOCHS
        assert cfg.teacher_forcing is True


class TestInitParams:
    def test_biases_and_logits_are_zero(self, toeplitz_cfg):
        params = init_params(toeplitz_cfg, seed=0)
        assert np.array_equal(params['kernel.logits'].data, np.zeros(3))
        for name, p in params.items():
            if name.endswith('.b') or '.b_' in name:
                assert not p.data.any(), name

    def test_weights_within_glorot_limit(self, global_cfg):
        for name, p in init_params(global_cfg, seed=1).items():
            if p.data.ndim == 2:
                fan_in, fan_out = p.shape
                assert np.all(np.abs(p.data) <= math.sqrt(6.0 / (fan_in + fan_out))), name
                assert p.data.any()

    def test_seeded(self, global_cfg):
        first, second = init_params(global_cfg, 3), init_params(global_cfg, 3)
        assert all(np.array_equal(first[name].data, second[name].data) for name in first)

    def test_initial_kernel_is_uniform(self, toeplitz_model):
        assert np.allclose(toeplitz_model.kernel().weight_values(), 1 / 3, atol=1e-15)


class TestSplit:
    def test_fractions_and_disjointness(self, synth_cfg):
        from strata.synth import generate_dataset
        dataset = generate_dataset(synth_cfg, 10, seed=0)
        train_set, val_set = split_dataset(dataset, TrainConfig(seed=4))
        assert (len(train_set), len(val_set)) == (8, 2)
        assert not {s.id for s in train_set} & {s.id for s in val_set}
        assert split_dataset(dataset, TrainConfig(seed=4)) == (train_set, val_set)

    def test_empty_dataset(self):
        with pytest.raises(ValidationError):
            split_dataset([], TrainConfig())


class TestTrain:
    def test_zero_learning_rate_is_identity(self, toeplitz_cfg, tiny_dataset):
        ckpt, history = train(toeplitz_cfg, TrainConfig(epochs=1, lr=0.0, seed=2), tiny_dataset)
        initial = init_params(toeplitz_cfg, seed=2)
        assert len(history) == 1
        assert all(np.array_equal(ckpt.params[name], initial[name].data) for name in initial)

    def test_same_seed_same_checkpoint(self, global_cfg, tiny_dataset, quick_train):
        first, _ = train(global_cfg, quick_train, tiny_dataset)
        second, _ = train(global_cfg, quick_train, tiny_dataset)
        assert first == second

    @pytest.mark.parametrize('cfg_name', ['toeplitz_cfg', 'global_cfg'])
    def test_loss_goes_down(self, request, cfg_name, tiny_dataset):
        cfg = request.getfixturevalue(cfg_name)
        _, history = train(cfg, TrainConfig(epochs=10, lr=0.01, seed=0), tiny_dataset)
        losses = history.train_loss
        assert len(losses) == len(history.val_loss) == len(history.val_accuracy) == 10
        assert losses[-1] < losses[0]
        assert sum(later < earlier for earlier, later in zip(losses, losses[1:])) >= 8

    def test_free_running_training(self, toeplitz_cfg, tiny_dataset):
        _, history = train(toeplitz_cfg, TrainConfig(epochs=1, teacher_forcing=False), tiny_dataset)
        assert math.isfinite(history.train_loss[0])

    def test_divergence_names_epoch_and_stack(self, toeplitz_cfg, tiny_dataset, quick_train):
        with patch('strata.train.cross_entropy', return_value=constant(np.nan)):
            with pytest.raises(TrainingDivergedError) as excinfo:
                train(toeplitz_cfg, quick_train, tiny_dataset)
        assert excinfo.value.epoch == 1
        assert excinfo.value.stack_id in {s.id for s in tiny_dataset}

    def test_clipping_is_applied_when_enabled(self, toeplitz_cfg, tiny_dataset):
        with patch('strata.train.clip_grad_norm', wraps=clip_grad_norm) as clip:
            train(toeplitz_cfg, TrainConfig(epochs=1, grad_clip=0.5), tiny_dataset)
        assert clip.call_count == 4

    def test_single_stack_has_no_validation(self, toeplitz_cfg, tiny_dataset, tmp_path):
        _, history = train(toeplitz_cfg, TrainConfig(epochs=1), tiny_dataset[:1])
        assert math.isnan(history.val_loss[0])
        history.save(tmp_path / 'history.json')
        assert '"val_loss": [\n    null\n  ]' in (tmp_path / 'history.json').read_text()

    def test_checkpoint_records_training_settings(self, toeplitz_cfg, tiny_dataset, quick_train, tmp_path):
        from strata.checkpoint import load_checkpoint, save_checkpoint
        ckpt, _ = train(toeplitz_cfg, quick_train, tiny_dataset)
        loaded = load_checkpoint(save_checkpoint(ckpt, tmp_path / 'checkpoint.json'))
        assert loaded == ckpt
        assert loaded.metadata['train']['lr'] == quick_train.lr
        assert loaded.metadata['train']['teacher_forcing'] is True
        assert loaded.metadata['train']['seed'] == quick_train.seed
