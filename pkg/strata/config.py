"""Run configuration: documented defaults, flat KEY=value files, CLI overrides.

Files are parsed with python-dotenv but never exported to the process
environment; every run is fully described by its resolved file.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping

from dotenv import dotenv_values

from strata.errors import ConfigError

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = 'resolved_config.env'


def _to_bool(value: str, default: bool = False) -> bool:
    if value is None:
        return default
    return str(value).strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    # synthetic stacks
    T_MIN = 20
    T_MAX = 40
    F_RAW = 8
    PROTOTYPE_SEED = 0
    PROTOTYPE_SCALE = 1.5
    NOISE_SIGMA = 0.5
    SOFTNESS = 1.0
    MIN_SEGMENT = 1
    ALLOW_MISSING_DEJ = False
    N_STACKS = 200
    DATA_SEED = 7

    # model
    ATTENTION = 'toeplitz'
    D = 1
    ENCODER = 'bigru'
    FEATURE_DIM = 8
    ENCODER_HIDDEN = 8
    DECODER_HIDDEN = 8
    ATTENTION_HIDDEN = 8
    BOUNDARY = 'zero_pad'
    INPUT_FEEDING = 'probs'

    # training
    EPOCHS = 30
    LR = 0.01
    BETA1 = 0.9
    BETA2 = 0.999
    ADAM_EPS = 1e-8
    SEED = 0
    TEACHER_FORCING = True
    TRAIN_FRACTION = 0.8
    VAL_FRACTION = 0.2
    GRAD_CLIP = 0.0

    # paths
    DATA = ''
    EVAL_DATA = ''
    CHECKPOINT = ''
    OUT_DIR = 'runs/latest'

    # command-specific
    EXPORT_T = 64
    EXPORT_FORMAT = 'pgm'
    EXPORT_STACK = 0
    GRADCHECK_SEEDS = 20
    GRADCHECK_ONLY = ''
    BENCH_T = '64,256,512'
    BENCH_D = '1,7'
    BENCH_E = 64
    BENCH_REPS = 5
    SWEEP_VARIANTS = 'toeplitz_d1,toeplitz_d0,toeplitz_d7,global,full_sequence,baseline'
    SWEEP_SEEDS = 1

    # runtime
    WORKERS = 1
    LOG_LEVEL = 'INFO'
    DEBUG_FINITE = False


class SmokeConfig(Config):
    # long enough for the widest sweep kernel (D=7)
    T_MIN = 8
    T_MAX = 12
    N_STACKS = 12
    EPOCHS = 3
    GRADCHECK_SEEDS = 2
    BENCH_REPS = 1


class AcceptanceConfig(Config):
    N_STACKS = 250
    EPOCHS = 30
    WORKERS = 4


config = {
    'default': Config,
    'smoke': SmokeConfig,
    'acceptance': AcceptanceConfig,
}


def _defaults(profile: str) -> dict[str, Any]:
    try:
        cls = config[profile]
    except KeyError:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(config)}") from None
    return {key: getattr(cls, key) for key in dir(cls) if key.isupper()}


def _coerce(key: str, raw: Any, template: Any) -> Any:
    if raw is None:
        raise ConfigError(f"{key} has no value")
    if isinstance(template, bool):
        return raw if isinstance(raw, bool) else _to_bool(raw)
    try:
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}={raw!r} is not a valid {type(template).__name__}") from None
    return str(raw)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Resolved key/value view with typed sub-configs for each module."""

    def __init__(self, values: Mapping[str, Any], profile: str = 'default'):
        self._values = dict(values)
        self.profile = profile

    def __getattr__(self, key: str) -> Any:
        values = self.__dict__.get('_values', {})
        if key in values:
            return values[key]
        raise AttributeError(key)

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self._values == other._values

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def replace(self, **overrides: Any) -> RunConfig:
        values = dict(self._values)
        defaults = _defaults(self.profile)
        for key, raw in overrides.items():
            if key not in defaults:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = _coerce(key, raw, defaults[key])
        return RunConfig(values, self.profile)

    def synth(self):
        from strata.synth import SynthConfig
        return SynthConfig.from_run(self)

    def model(self):
        from strata.nn.model import ModelConfig
        return ModelConfig.from_run(self)

    def train(self):
        from strata.train import TrainConfig
        return TrainConfig.from_run(self)

    def to_text(self) -> str:
        return ''.join(f"{key}={_format(self._values[key])}\n" for key in sorted(self._values))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding='utf-8')
        return path


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    profile: str = 'default',
) -> RunConfig:
    """Defaults of ``profile``, then the file at ``path``, then non-None ``overrides``."""
    defaults = _defaults(profile)
    values = dict(defaults)

    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        for key, raw in dotenv_values(path).items():
            key = key.strip().upper()
            if key not in defaults:
                raise ConfigError(f"unknown configuration key {key!r} in {path}")
            values[key] = _coerce(key, raw, defaults[key])
        logger.debug("Loaded config file %s", path)

    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        key = key.upper()
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {key!r}")
        values[key] = _coerce(key, raw, defaults[key])

    return RunConfig(values, profile)


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(',') if part.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None
