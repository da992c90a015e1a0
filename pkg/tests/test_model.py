"""Tests for model assembly, forward passes and attention maps."""

import numpy as np
import pytest

from strata.errors import CheckpointConfigMismatch, ConfigError, DimensionError, UsageError, ValidationError
from strata.grad.tensor import parameter
from strata.nn.attention import build_attention_map
from strata.nn.model import Model, ModelConfig, argmax_labels, attention_map, forward, predict
from strata.synth import SynthConfig, generate_dataset, generate_stack
from strata.train import TrainConfig, build_model, train
from tests import oracles
from tests.conftest import SAMPLE_STACK, SMALL_DIMS


def _random_model(cfg, seed):
    rng = np.random.default_rng(seed)
    return Model(cfg, {
        name: parameter(rng.normal(scale=0.5, size=shape), name=name)
        for name, shape in cfg.parameter_shapes().items()
    })


def _encodings(model, X):
    p = model.params
    features = np.tanh(X @ p['slice.W'].data + p['slice.b'].data)
    return oracles.bi_gru(features, oracles.prefixed(p, 'enc_fwd'), oracles.prefixed(p, 'enc_bwd'))


class TestModelConfig:
    def test_toeplitz_parameters(self, toeplitz_cfg):
        shapes = toeplitz_cfg.parameter_shapes()
        assert shapes['kernel.logits'] == (3,)
        assert shapes['fc.W'] == (8 + 3, 3)
        assert not any(name.startswith('attn.') for name in shapes)

    def test_global_parameters(self, global_cfg):
        shapes = global_cfg.parameter_shapes()
        assert 'kernel.logits' not in shapes
        assert shapes['dec.W_z'] == (8 + 3, 4)
        assert shapes['fc.W'] == (4, 3)

    def test_no_feeding_drops_feed_columns(self):
        cfg = ModelConfig(input_feeding='none', **SMALL_DIMS)
        assert cfg.parameter_shapes()['fc.W'] == (8, 3)

    @pytest.mark.parametrize('field,value', [
        ('attention', 'local'), ('encoder', 'cnn'), ('boundary', 'wrap'), ('D', -1), ('feature_dim', 0),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ConfigError):
            ModelConfig(**{field: value})

    def test_dict_round_trip(self, global_cfg):
        assert ModelConfig.from_dict(global_cfg.to_dict()) == global_cfg

    def test_mismatch_names_the_field(self, toeplitz_cfg, global_cfg):
        with pytest.raises(CheckpointConfigMismatch, match='attention'):
            toeplitz_cfg.check_compatible(global_cfg)


class TestModel:
    def test_parameter_set_is_checked(self, toeplitz_cfg, toeplitz_model):
        params = dict(toeplitz_model.params)
        params['fc.b'] = parameter(np.zeros(4))
        with pytest.raises(DimensionError):
            Model(toeplitz_cfg, params)
        del params['fc.b']
        with pytest.raises(DimensionError):
            Model(toeplitz_cfg, params)

    def test_only_toeplitz_has_kernel(self, global_model):
        with pytest.raises(UsageError):
            global_model.kernel()


class TestForward:
    @pytest.mark.parametrize('model_name', ['toeplitz_model', 'global_model'])
    def test_logit_shape_and_prediction(self, request, model_name):
        model = request.getfixturevalue(model_name)
        logits = forward(model, SAMPLE_STACK)
        assert logits.shape == (6, 3)
        labels = predict(model, SAMPLE_STACK)
        assert labels.dtype == np.int64
        assert np.array_equal(labels, argmax_labels(logits.data))

    def test_unknown_mode(self, toeplitz_model):
        with pytest.raises(ValidationError):
            forward(toeplitz_model, SAMPLE_STACK, 'beam_search')

    def test_teacher_forcing_needs_labels(self, toeplitz_model):
        with pytest.raises(UsageError):
            forward(toeplitz_model, SAMPLE_STACK.features, 'teacher_forcing')

    def test_modes_agree_when_feed_weights_are_zero(self, toeplitz_cfg):
        model = build_model(toeplitz_cfg, seed=1)
        model.params['fc.W'].data[toeplitz_cfg.encoding_dim:] = 0.0
        free = forward(model, SAMPLE_STACK, 'free_running').data
        forced = forward(model, SAMPLE_STACK, 'teacher_forcing').data
        assert np.array_equal(free, forced)

    def test_argmax_ties_go_to_lowest_class(self):
        assert argmax_labels(np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])).tolist() == [0, 1]

    def test_wrong_feature_width(self, toeplitz_model):
        with pytest.raises(DimensionError):
            forward(toeplitz_model, np.ones((4, 5)))

    def test_baseline_ignores_neighbours(self):
        cfg = ModelConfig(attention='toeplitz', D=0, encoder='per_slice', input_feeding='none', **SMALL_DIMS)
        model = build_model(cfg, seed=2)
        features = SAMPLE_STACK.features.copy()
        before = forward(model, features).data
        features[0] += 5.0
        after = forward(model, features).data
        assert np.array_equal(before[1:], after[1:])


class TestAttentionMapOfModel:
    def test_toeplitz_map_for_any_length(self, toeplitz_model):
        A = attention_map(toeplitz_model, T=10)
        assert A.shape == (10, 10)
        assert np.allclose(A[1:-1].sum(axis=1), 1.0)

    def test_toeplitz_map_from_stack_length(self, toeplitz_model):
        assert attention_map(toeplitz_model, SAMPLE_STACK).shape == (6, 6)

    def test_toeplitz_needs_a_length(self, toeplitz_model):
        with pytest.raises(UsageError):
            attention_map(toeplitz_model)

    def test_global_map_needs_a_stack(self, global_model):
        with pytest.raises(UsageError):
            attention_map(global_model, T=6)
        A = attention_map(global_model, SAMPLE_STACK)
        assert A.shape == (6, 6)
        assert np.allclose(A.sum(axis=1), 1.0, atol=1e-12)


class TestComposedOracle:
    def test_toeplitz_forward(self, toeplitz_cfg):
        model = _random_model(toeplitz_cfg, 20)
        p = model.params
        H = _encodings(model, SAMPLE_STACK.features)
        weights = oracles.softmax(p['kernel.logits'].data)
        C = build_attention_map(weights, len(SAMPLE_STACK), toeplitz_cfg.boundary) @ H
        W, b = p['fc.W'].data, p['fc.b'].data
        free = forward(model, SAMPLE_STACK).data
        forced = forward(model, SAMPLE_STACK, 'teacher_forcing').data
        assert np.max(np.abs(free - oracles.decode_toeplitz(C, W, b))) <= 1e-10
        assert np.max(np.abs(forced - oracles.decode_toeplitz(C, W, b, SAMPLE_STACK.labels))) <= 1e-10

    def test_global_forward(self, global_cfg):
        model = _random_model(global_cfg, 21)
        p = model.params
        H = _encodings(model, SAMPLE_STACK.features)
        logits, alphas = oracles.decode_global(
            H, oracles.prefixed(p, 'attn'), oracles.prefixed(p, 'dec'), p['fc.W'].data, p['fc.b'].data,
        )
        assert np.max(np.abs(forward(model, SAMPLE_STACK).data - logits)) <= 1e-10
        assert np.max(np.abs(attention_map(model, SAMPLE_STACK) - alphas)) <= 1e-10


NOISELESS = dict(t_min=8, t_max=12, raw_dim=3, noise_sigma=0.0, softness=0.0)


class TestPredictOnNoiselessStacks:
    def test_prototype_detector_recovers_labels(self):
        cfg = ModelConfig(attention='toeplitz', D=0, encoder='per_slice', input_feeding='none', **SMALL_DIMS)
        params = {name: parameter(np.zeros(shape), name=name) for name, shape in cfg.parameter_shapes().items()}
        params['slice.W'].data[:] = 2.0 * np.eye(3)
        params['enc_fwd.W_h'].data[:, :3] = np.eye(3)
        params['enc_fwd.b_z'].data[:] = 20.0
        params['fc.W'].data[:3] = np.eye(3)
        model = Model(cfg, params)
        synth = SynthConfig(prototypes=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)), **NOISELESS)
        for seed in range(10):
            stack = generate_stack(synth, seed)
            assert np.array_equal(predict(model, stack), stack.labels)

    @pytest.mark.slow
    def test_trained_model_recovers_labels(self, toeplitz_cfg):
        synth = SynthConfig(**NOISELESS)
        dataset = generate_dataset(synth, 20, seed=1)
        ckpt, _ = train(toeplitz_cfg, TrainConfig(epochs=40, lr=0.05, seed=0, teacher_forcing=False), dataset)
        model = ckpt.to_model()
        for seed in (1001, 1002, 1003):
            stack = generate_stack(synth, seed)
            assert np.array_equal(predict(model, stack), stack.labels)
