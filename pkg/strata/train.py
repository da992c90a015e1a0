"""Training loop: seeded split, one Adam step per stack, per-epoch validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import partial
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from strata.checkpoint import ModelCheckpoint
from strata.errors import ConfigError, TrainingDivergedError, ValidationError
from strata.grad.ops import cross_entropy
from strata.grad.optim import AdamState, adam_step, clip_grad_norm
from strata.grad.tensor import Tensor, backward, parameter, zero_grads
from strata.jobs import fan_out
from strata.nn.model import Model, ModelConfig, argmax_labels, forward
from strata.synth import StackSample

if TYPE_CHECKING:
    from strata.config import RunConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    teacher_forcing: bool = True
    train_fraction: float = 0.8
    val_fraction: float = 0.2
    grad_clip: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {self.lr}")
        if not (0 < self.train_fraction < 1 and 0 < self.val_fraction < 1):
            raise ConfigError("train and validation fractions must lie in (0, 1)")
        if not math.isclose(self.train_fraction + self.val_fraction, 1.0, abs_tol=1e-9):
            raise ConfigError(
                f"train and validation fractions must sum to 1, got {self.train_fraction} + {self.val_fraction}"
            )
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError("Adam needs betas in [0, 1) and a positive eps")
        if self.grad_clip < 0:
            raise ConfigError("gradient clip threshold must be non-negative (0 disables clipping)")

    @classmethod
    def from_run(cls, run: RunConfig) -> TrainConfig:
        return cls(
            epochs=run.EPOCHS,
            lr=run.LR,
            beta1=run.BETA1,
            beta2=run.BETA2,
            eps=run.ADAM_EPS,
            seed=run.SEED,
            teacher_forcing=run.TEACHER_FORCING,
            train_fraction=run.TRAIN_FRACTION,
            val_fraction=run.VAL_FRACTION,
            grad_clip=run.GRAD_CLIP,
        )


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def record(self, train_loss: float, val_loss: float, val_accuracy: float) -> None:
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_accuracy.append(val_accuracy)

    def to_dict(self) -> dict:
        return {key: [None if math.isnan(v) else v for v in values] for key, values in asdict(self).items()}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + '\n', encoding='utf-8')
        return path


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _is_zero_init(name: str) -> bool:
    leaf = name.rsplit('.', 1)[-1]
    return name == 'kernel.logits' or leaf == 'b' or leaf.startswith('b_')


def init_params(model_cfg: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases, zero kernel logits (a uniform kernel)."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in model_cfg.parameter_shapes().items():
        values = np.zeros(shape) if _is_zero_init(name) else _glorot(rng, shape)
        params[name] = parameter(values, name=name)
    return params


def build_model(model_cfg: ModelConfig, seed: int) -> Model:
    return Model(model_cfg, init_params(model_cfg, seed))


def split_dataset(
    dataset: Sequence[StackSample], train_cfg: TrainConfig
) -> tuple[list[StackSample], list[StackSample]]:
    """Seeded permutation, then the first ``train_fraction`` of it for training."""
    n = len(dataset)
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")
    order = np.random.default_rng([train_cfg.seed, 0]).permutation(n)
    n_train = min(n, max(1, int(round(n * train_cfg.train_fraction))))
    return [dataset[i] for i in order[:n_train]], [dataset[i] for i in order[n_train:]]


def _stack_loss(model: Model, stack: StackSample) -> tuple[float, int, int]:
    logits = forward(model, stack, 'free_running').data
    loss = float(cross_entropy(logits, stack.labels).data)
    correct = int(np.sum(argmax_labels(logits) == stack.labels))
    return loss, correct, len(stack)


def validate(model: Model, stacks: Sequence[StackSample], max_workers: int = 1) -> tuple[float, float]:
    """Free-running mean loss per stack and pooled per-slice accuracy; NaN when empty."""
    if not stacks:
        return math.nan, math.nan
    results = fan_out(partial(_stack_loss, model), stacks, max_workers=max_workers, label='validate')
    mean_loss = sum(loss for loss, _, _ in results) / len(results)
    accuracy = sum(correct for _, correct, _ in results) / sum(count for _, _, count in results)
    return mean_loss, accuracy


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dataset: Sequence[StackSample],
    max_workers: int = 1,
) -> tuple[ModelCheckpoint, TrainHistory]:
    train_set, val_set = split_dataset(dataset, train_cfg)
    model = build_model(model_cfg, train_cfg.seed)
    params = model.params
    state = AdamState()
    shuffle_rng = np.random.default_rng([train_cfg.seed, 1])
    mode = 'teacher_forcing' if train_cfg.teacher_forcing else 'free_running'
    history = TrainHistory()
    logger.info(
        "Training %s model (D=%d, encoder=%s) on %d stacks, validating on %d",
        model_cfg.attention, model_cfg.D, model_cfg.encoder, len(train_set), len(val_set),
    )

    for epoch in range(1, train_cfg.epochs + 1):
        epoch_loss = 0.0
        for index in shuffle_rng.permutation(len(train_set)):
            stack = train_set[index]
            zero_grads(params.values())
            loss = cross_entropy(forward(model, stack, mode), stack.labels)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, stack.id, value)
            backward(loss)
            grads = {name: p.grad for name, p in params.items()}
            if train_cfg.grad_clip > 0:
                grads, _ = clip_grad_norm(grads, train_cfg.grad_clip)
            adam_step(params, grads, state, train_cfg.lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
            epoch_loss += value
        zero_grads(params.values())

        val_loss, val_accuracy = validate(model, val_set, max_workers)
        history.record(epoch_loss / len(train_set), val_loss, val_accuracy)
        logger.info(
            "Epoch %d/%d: train loss %.4f, val loss %.4f, val accuracy %.4f",
            epoch, train_cfg.epochs, history.train_loss[-1], val_loss, val_accuracy,
        )

    ckpt = ModelCheckpoint.from_model(
        model, seed=train_cfg.seed, epochs=train_cfg.epochs, metadata={'train': asdict(train_cfg)}
    )
    return ckpt, history
