"""Model assembly: slice encoder -> encoder -> attention -> decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import TYPE_CHECKING, Mapping

import numpy as np

from strata.errors import CheckpointConfigMismatch, ConfigError, DimensionError, UsageError, ValidationError
from strata.grad.ops import BOUNDARY_MODES
from strata.grad.tensor import Tensor, as_tensor
from strata.nn.attention import (
    AttentionMap,
    GlobalAttentionParams,
    ToeplitzKernel,
    build_attention_map,
    toeplitz_attention,
)
from strata.nn.decoders import INPUT_FEEDING_MODES, DecodeResult, Linear, decode_global, decode_toeplitz
from strata.nn.layers import GruParams, bi_gru_encode, per_slice_encode, slice_encoder

if TYPE_CHECKING:
    from strata.config import RunConfig
    from strata.synth import StackSample

ATTENTION_KINDS = ('toeplitz', 'global')
ENCODER_KINDS = ('bigru', 'per_slice')
MODES = ('teacher_forcing', 'free_running')
NUM_CLASSES = 3


@dataclass(frozen=True)
class ModelConfig:
    attention: str = 'toeplitz'
    D: int = 1
    raw_dim: int = 8
    feature_dim: int = 8
    encoder_hidden: int = 8
    decoder_hidden: int = 8
    attention_hidden: int = 8
    classes: int = NUM_CLASSES
    boundary: str = 'zero_pad'
    input_feeding: str = 'probs'
    encoder: str = 'bigru'

    def __post_init__(self):
        if self.attention not in ATTENTION_KINDS:
            raise ConfigError(f"attention must be one of {ATTENTION_KINDS}, got {self.attention!r}")
        if self.encoder not in ENCODER_KINDS:
            raise ConfigError(f"encoder must be one of {ENCODER_KINDS}, got {self.encoder!r}")
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if self.input_feeding not in INPUT_FEEDING_MODES:
            raise ConfigError(f"input feeding must be one of {INPUT_FEEDING_MODES}, got {self.input_feeding!r}")
        if self.D < 0:
            raise ConfigError(f"D must be non-negative, got {self.D}")
        if self.classes != NUM_CLASSES:
            raise ConfigError(f"classes is fixed at {NUM_CLASSES}")
        dims = (self.raw_dim, self.feature_dim, self.encoder_hidden, self.decoder_hidden, self.attention_hidden)
        if min(dims) < 1:
            raise ConfigError("all layer dimensions must be positive")

    @classmethod
    def from_run(cls, run: RunConfig) -> ModelConfig:
        return cls(
            attention=run.ATTENTION,
            D=run.D,
            raw_dim=run.F_RAW,
            feature_dim=run.FEATURE_DIM,
            encoder_hidden=run.ENCODER_HIDDEN,
            decoder_hidden=run.DECODER_HIDDEN,
            attention_hidden=run.ATTENTION_HIDDEN,
            boundary=run.BOUNDARY,
            input_feeding=run.INPUT_FEEDING,
            encoder=run.ENCODER,
        )

    @classmethod
    def from_dict(cls, data: Mapping) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{key: value for key, value in data.items() if key in known})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def encoding_dim(self) -> int:
        return 2 * self.encoder_hidden

    @property
    def feed_dim(self) -> int:
        return self.classes if self.input_feeding == 'probs' else 0

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Every named parameter tensor and its shape, in a fixed order."""
        shapes: dict[str, tuple[int, ...]] = {
            'slice.W': (self.raw_dim, self.feature_dim),
            'slice.b': (self.feature_dim,),
        }
        shapes.update(GruParams.shapes('enc_fwd', self.feature_dim, self.encoder_hidden))
        shapes.update(GruParams.shapes('enc_bwd', self.feature_dim, self.encoder_hidden))
        E = self.encoding_dim
        if self.attention == 'toeplitz':
            shapes['kernel.logits'] = (2 * self.D + 1,)
            shapes.update(Linear.shapes('fc', E + self.feed_dim, self.classes))
        else:
            shapes.update(GlobalAttentionParams.shapes('attn', E, self.decoder_hidden, self.attention_hidden))
            shapes.update(GruParams.shapes('dec', E + self.feed_dim, self.decoder_hidden))
            shapes.update(Linear.shapes('fc', self.decoder_hidden, self.classes))
        return shapes

    def check_compatible(self, other: ModelConfig) -> None:
        if self != other:
            diffs = [
                f"{f.name}: {getattr(self, f.name)!r} != {getattr(other, f.name)!r}"
                for f in fields(self) if getattr(self, f.name) != getattr(other, f.name)
            ]
            raise CheckpointConfigMismatch("model configuration mismatch (" + '; '.join(diffs) + ")")


class Model:
    """A configuration plus its named parameter tensors."""

    def __init__(self, config: ModelConfig, params: Mapping[str, Tensor]):
        expected = config.parameter_shapes()
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise DimensionError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise DimensionError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = {name: params[name] for name in expected}

    def __repr__(self):
        return f"<Model {self.config.attention} D={self.config.D} params={len(self.params)}>"

    def kernel(self) -> ToeplitzKernel:
        if self.config.attention != 'toeplitz':
            raise UsageError("only Toeplitz models have a kernel")
        return ToeplitzKernel(self.params['kernel.logits'])

    def parameter_values(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}


def _features_and_labels(stack) -> tuple[np.ndarray, np.ndarray | None]:
    if hasattr(stack, 'features'):
        return np.asarray(stack.features, dtype=np.float64), np.asarray(stack.labels)
    return np.asarray(stack, dtype=np.float64), None


def encode(model: Model, features) -> Tensor:
    features = as_tensor(features)
    if features.data.ndim != 2 or features.shape[0] < 1:
        raise ValidationError(f"stack must be a non-empty [T, F_raw] matrix, got {features.shape}")
    p = model.params
    encoded = slice_encoder(features, p['slice.W'], p['slice.b'])
    fwd = GruParams.from_params(p, 'enc_fwd')
    bwd = GruParams.from_params(p, 'enc_bwd')
    if model.config.encoder == 'per_slice':
        return per_slice_encode(encoded, fwd, bwd)
    return bi_gru_encode(encoded, fwd, bwd)


def run(model: Model, features, targets=None) -> DecodeResult:
    """Full pass on one stack; ``targets`` switches on teacher forcing."""
    cfg = model.config
    H = encode(model, features)
    fc = Linear.from_params(model.params, 'fc')
    if cfg.attention == 'toeplitz':
        context = toeplitz_attention(H, model.kernel(), cfg.boundary)
        return decode_toeplitz(context, fc, cfg.input_feeding, targets)
    return decode_global(
        H,
        GlobalAttentionParams.from_params(model.params, 'attn'),
        GruParams.from_params(model.params, 'dec'),
        fc,
        cfg.input_feeding,
        targets,
    )


def forward(model: Model, stack: StackSample, mode: str = 'free_running') -> Tensor:
    """Logits [T, 3] for one stack."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    features, labels = _features_and_labels(stack)
    if mode == 'teacher_forcing':
        if labels is None:
            raise UsageError("teacher forcing needs a labelled stack")
        return run(model, features, targets=labels).logits
    return run(model, features).logits


def argmax_labels(logits: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=1).astype(np.int64)


def predict(model: Model, stack: StackSample) -> np.ndarray:
    return argmax_labels(forward(model, stack, 'free_running').data)


def attention_map(model: Model, stack: StackSample | None = None, T: int | None = None) -> AttentionMap:
    """Toeplitz models: the banded map for length T (or the stack's length).
    Global models: the decode-time alpha rows, which need a stack.
    """
    cfg = model.config
    if cfg.attention == 'global':
        if stack is None:
            raise UsageError("the global attention map depends on the input; pass a stack")
        features, _ = _features_and_labels(stack)
        return run(model, features).attention
    if T is None:
        if stack is None:
            raise UsageError("pass a stack or a length T")
        T = _features_and_labels(stack)[0].shape[0]
    return build_attention_map(model.kernel(), T, cfg.boundary)
