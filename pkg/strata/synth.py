"""Synthetic layered stacks and their line-delimited JSON persistence.

A stack is a depth-ordered run of slices labelled epidermis (0), DEJ (1)
and dermis (2), each class one contiguous segment in that order. Slice
features blend the three class prototypes with sigmoid weights around the
two boundaries and add Gaussian noise.

Per-stack seeds come from the master seed and the stack index through
numpy's ``SeedSequence([master, index])`` (a stable, versioned hash); the
first 64 bits of its state are the stack seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
import json
import logging
import math
import os
from pathlib import Path
import tempfile
from typing import TYPE_CHECKING, Iterable

import numpy as np

from strata.errors import DatasetParseError, ValidationError
from strata.jobs import fan_out

if TYPE_CHECKING:
    from strata.config import RunConfig

logger = logging.getLogger(__name__)

CLASS_NAMES = ('epidermis', 'DEJ', 'dermis')
NUM_CLASSES = len(CLASS_NAMES)


def make_prototypes(raw_dim: int, seed: int = 0, scale: float = 1.5) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, 1.0, size=(NUM_CLASSES, raw_dim)) * scale


@dataclass(frozen=True)
class SynthConfig:
    t_min: int = 20
    t_max: int = 40
    raw_dim: int = 8
    prototypes: tuple[tuple[float, ...], ...] = ()
    noise_sigma: float = 0.5
    softness: float = 1.0
    min_segment: int = 1
    allow_missing_dej: bool = False

    def __post_init__(self):
        if not self.prototypes:
            object.__setattr__(self, 'prototypes', tuple(map(tuple, make_prototypes(self.raw_dim).tolist())))
        if self.t_min < 3 or self.t_max < self.t_min:
            raise ValidationError(f"stack length range [{self.t_min}, {self.t_max}] invalid (need 3 <= T_min <= T_max)")
        if self.raw_dim < 1:
            raise ValidationError("raw feature dim must be positive")
        if self.noise_sigma < 0 or self.softness < 0:
            raise ValidationError("noise_sigma and softness must be non-negative")
        if self.min_segment < 1:
            raise ValidationError("minimum segment length must be at least 1")
        mus = self.prototype_array()
        if mus.shape != (NUM_CLASSES, self.raw_dim):
            raise ValidationError(f"prototypes must be {NUM_CLASSES} x {self.raw_dim}, got {mus.shape}")
        for i in range(NUM_CLASSES):
            for j in range(i + 1, NUM_CLASSES):
                if np.array_equal(mus[i], mus[j]):
                    raise ValidationError(f"prototypes of {CLASS_NAMES[i]} and {CLASS_NAMES[j]} coincide")

    @classmethod
    def from_run(cls, run: RunConfig) -> SynthConfig:
        return cls(
            t_min=run.T_MIN,
            t_max=run.T_MAX,
            raw_dim=run.F_RAW,
            prototypes=tuple(map(tuple, make_prototypes(run.F_RAW, run.PROTOTYPE_SEED, run.PROTOTYPE_SCALE).tolist())),
            noise_sigma=run.NOISE_SIGMA,
            softness=run.SOFTNESS,
            min_segment=run.MIN_SEGMENT,
            allow_missing_dej=run.ALLOW_MISSING_DEJ,
        )

    def prototype_array(self) -> np.ndarray:
        return np.array(self.prototypes, dtype=np.float64)

    @property
    def min_dej(self) -> int:
        return 0 if self.allow_missing_dej else self.min_segment


@dataclass(eq=False)
class StackSample:
    id: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, StackSample):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def __len__(self):
        return self.labels.shape[0]

    def to_record(self) -> dict:
        return {'id': self.id, 'features': self.features.tolist(), 'labels': self.labels.tolist()}


def derive_seed(master_seed: int, index: int) -> int:
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 32) | int(state[1])


def blend_weights(T: int, b1: int, b2: int, softness: float) -> np.ndarray:
    """[T, 3] class weights summing to 1; hard one-hot segments when softness is 0."""
    depth = np.arange(T)
    if softness == 0:
        labels = (depth >= b1).astype(int) + (depth >= b2).astype(int)
        return np.eye(NUM_CLASSES)[labels]
    past_first = 0.5 * (1.0 + np.tanh((depth - b1 + 0.5) / (2.0 * softness)))
    past_second = 0.5 * (1.0 + np.tanh((depth - b2 + 0.5) / (2.0 * softness)))
    raw = np.stack([1.0 - past_first, past_first * (1.0 - past_second), past_second], axis=1)
    return raw / raw.sum(axis=1, keepdims=True)


def generate_stack(cfg: SynthConfig, seed: int) -> StackSample:
    """One stack; deterministic in ``seed``."""
    if cfg.t_min < 2 * cfg.min_segment + cfg.min_dej:
        raise ValidationError(
            f"T_min={cfg.t_min} cannot hold three segments of minimum lengths "
            f"{cfg.min_segment}/{cfg.min_dej}/{cfg.min_segment}"
        )
    rng = np.random.default_rng(seed)
    T = int(rng.integers(cfg.t_min, cfg.t_max + 1))
    spare = T - 2 * cfg.min_segment - cfg.min_dej
    first_cut, second_cut = np.sort(rng.integers(0, spare + 1, size=2))
    lengths = (
        cfg.min_segment + int(first_cut),
        cfg.min_dej + int(second_cut - first_cut),
        cfg.min_segment + int(spare - second_cut),
    )
    b1, b2 = lengths[0], lengths[0] + lengths[1]
    labels = np.repeat(np.arange(NUM_CLASSES), lengths)

    features = blend_weights(T, b1, b2, cfg.softness) @ cfg.prototype_array()
    if cfg.noise_sigma > 0:
        features = features + rng.normal(0.0, cfg.noise_sigma, size=features.shape)
    return StackSample(id=f"stack-{seed:016x}", features=features, labels=labels)


def generate_dataset(cfg: SynthConfig, n: int, seed: int, max_workers: int = 1) -> list[StackSample]:
    if n < 1:
        raise ValidationError(f"dataset size must be at least 1, got {n}")
    seeds = [derive_seed(seed, index) for index in range(n)]
    samples = fan_out(partial(generate_stack, cfg), seeds, max_workers=max_workers, label='generate')
    logger.info("Generated %d stacks from seed %d", n, seed)
    return samples


def save_dataset(samples: Iterable[StackSample], path: str | Path) -> Path:
    """Write one JSON record per line; the file appears only once fully written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    count = 0
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            for sample in samples:
                f.write(json.dumps(sample.to_record(), allow_nan=False, separators=(',', ':')))
                f.write('\n')
                count += 1
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.info("Saved %d stacks to %s", count, path)
    return path


def _parse_record(line_number: int, line: str) -> StackSample:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetParseError(line_number, f"malformed JSON ({e.msg})") from None
    if not isinstance(record, dict) or set(record) != {'id', 'features', 'labels'}:
        raise DatasetParseError(line_number, "record must have exactly the fields id, features, labels")
    stack_id, features, labels = record['id'], record['features'], record['labels']
    if not isinstance(stack_id, str):
        raise DatasetParseError(line_number, "id must be a string")
    if not isinstance(labels, list) or not labels or not all(type(v) is int and 0 <= v < NUM_CLASSES for v in labels):
        raise DatasetParseError(line_number, f"labels must be a non-empty list of integers in 0..{NUM_CLASSES - 1}")
    if not isinstance(features, list) or len(features) != len(labels):
        raise DatasetParseError(line_number, "features must hold one row per label")
    widths = {len(row) if isinstance(row, list) else -1 for row in features}
    if len(widths) != 1 or widths == {-1} or widths == {0}:
        raise DatasetParseError(line_number, "feature rows must be non-empty lists of equal length")
    for row in features:
        for value in row:
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise DatasetParseError(line_number, "features must be finite numbers")
    return StackSample(id=stack_id, features=np.array(features, dtype=np.float64), labels=np.array(labels))


def load_dataset(path: str | Path) -> list[StackSample]:
    """Read every record or raise; a malformed line never yields a partial dataset."""
    samples = []
    with open(path, encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            samples.append(_parse_record(line_number, line))
    return samples
