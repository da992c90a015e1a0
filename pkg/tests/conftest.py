"""Shared test fixtures."""

import numpy as np
import pytest

from strata.config import load_config
from strata.nn.model import ModelConfig
from strata.synth import StackSample, SynthConfig, generate_dataset
from strata.train import TrainConfig, build_model

SMALL_DIMS = dict(raw_dim=3, feature_dim=3, encoder_hidden=4, decoder_hidden=4, attention_hidden=4)

SAMPLE_STACK = StackSample(
    id='stack-sample',
    features=np.array([
        [1.0, 0.0, 0.5],
        [0.9, 0.1, 0.4],
        [0.2, 1.0, 0.0],
        [0.1, 0.8, 0.2],
        [-1.0, 0.0, 1.0],
        [-0.9, 0.1, 1.2],
    ]),
    labels=np.array([0, 0, 1, 1, 2, 2]),
)


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow end-to-end tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long end-to-end runs, skipped unless --runslow is given')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture()
def synth_cfg():
    """Short stacks with three raw features."""
    return SynthConfig(t_min=6, t_max=10, raw_dim=3)


@pytest.fixture()
def tiny_dataset(synth_cfg):
    return generate_dataset(synth_cfg, 5, seed=3)


@pytest.fixture()
def toeplitz_cfg():
    return ModelConfig(attention='toeplitz', D=1, **SMALL_DIMS)


@pytest.fixture()
def global_cfg():
    return ModelConfig(attention='global', **SMALL_DIMS)


@pytest.fixture()
def toeplitz_model(toeplitz_cfg):
    return build_model(toeplitz_cfg, seed=0)


@pytest.fixture()
def global_model(global_cfg):
    return build_model(global_cfg, seed=0)


@pytest.fixture()
def quick_train():
    return TrainConfig(epochs=2, lr=0.01, seed=0)


@pytest.fixture()
def run_config(tmp_path):
    """Smoke profile writing into a temporary run directory."""
    return load_config(profile='smoke', overrides={'OUT_DIR': str(tmp_path / 'run')})
