"""Versioned, self-describing model checkpoints.

A checkpoint is one JSON document: the model configuration, every named
tensor as ``{"shape": [...], "data": [...]}``, the training seed and epoch
count, and a SHA-256 over the canonical encoding of all of that. Floats
are written with ``repr`` precision so a round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
import logging
import os
from pathlib import Path
import tempfile

import numpy as np

from strata.errors import CheckpointError, CheckpointIntegrityError
from strata.grad.tensor import parameter
from strata.nn.model import Model, ModelConfig

logger = logging.getLogger(__name__)

FORMAT_NAME = 'strata-checkpoint'
FORMAT_VERSION = 1


@dataclass(eq=False)
class ModelCheckpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    seed: int = 0
    epochs: int = 0
    format_version: int = FORMAT_VERSION
    metadata: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, ModelCheckpoint):
            return NotImplemented
        return (
            self.config == other.config
            and self.seed == other.seed
            and self.epochs == other.epochs
            and self.params.keys() == other.params.keys()
            and all(
                self.params[name].shape == other.params[name].shape
                and self.params[name].tobytes() == other.params[name].tobytes()
                for name in self.params
            )
        )

    @classmethod
    def from_model(cls, model: Model, seed: int = 0, epochs: int = 0, metadata: dict | None = None) -> ModelCheckpoint:
        return cls(
            config=model.config,
            params=model.parameter_values(),
            seed=seed,
            epochs=epochs,
            metadata=dict(metadata or {}),
        )

    def to_model(self) -> Model:
        return Model(self.config, {name: parameter(values, name=name) for name, values in self.params.items()})

    def body(self) -> dict:
        return {
            'format': FORMAT_NAME,
            'format_version': self.format_version,
            'model': self.config.to_dict(),
            'seed': self.seed,
            'epochs': self.epochs,
            'metadata': self.metadata,
            'tensors': {
                name: {'shape': list(values.shape), 'data': values.reshape(-1).tolist()}
                for name, values in self.params.items()
            },
        }


def _digest(body: dict) -> str:
    canonical = json.dumps(body, sort_keys=True, separators=(',', ':'), allow_nan=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def save_checkpoint(ckpt: ModelCheckpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = ckpt.body()
    document = dict(body, sha256=_digest(body))
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            json.dump(document, f, sort_keys=True, separators=(',', ':'), allow_nan=False)
            f.write('\n')
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.info("Saved checkpoint %s (%s attention, %d tensors)", path, ckpt.config.attention, len(ckpt.params))
    return path


def _tensor(name: str, entry) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in entry['shape'])
        values = np.array(entry['data'], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"tensor {name} is malformed: {e}") from None
    if values.ndim != 1 or values.size != int(np.prod(shape, dtype=np.int64)):
        raise CheckpointError(f"tensor {name}: {values.size} values do not fill shape {shape}")
    return values.reshape(shape)


def load_checkpoint(path: str | Path, expected: ModelConfig | None = None) -> ModelCheckpoint:
    """Read and verify a checkpoint; ``expected`` must match its stored model config."""
    raw = Path(path).read_bytes()
    try:
        document = json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointIntegrityError(f"{path} is not a readable checkpoint ({e})") from None
    if not isinstance(document, dict) or document.get('format') != FORMAT_NAME:
        raise CheckpointError(f"{path} is not a {FORMAT_NAME} file")
    version = document.get('format_version')
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")

    stored_digest = document.pop('sha256', None)
    if stored_digest != _digest(document):
        raise CheckpointIntegrityError(f"{path} failed its integrity check")

    config = ModelConfig.from_dict(document['model'])
    if expected is not None:
        expected.check_compatible(config)
    stored = {name: _tensor(name, entry) for name, entry in document['tensors'].items()}
    # parameter order follows the model, not the sorted file
    order = [name for name in config.parameter_shapes() if name in stored]
    params = {name: stored[name] for name in order + sorted(set(stored) - set(order))}
    ckpt = ModelCheckpoint(
        config=config,
        params=params,
        seed=int(document['seed']),
        epochs=int(document['epochs']),
        format_version=version,
        metadata=document.get('metadata', {}),
    )
    # shape and name validation
    ckpt.to_model()
    logger.debug("Loaded checkpoint %s", path)
    return ckpt
