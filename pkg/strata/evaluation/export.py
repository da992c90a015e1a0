"""Attention map and kernel export."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from strata.errors import ValidationError
from strata.nn.attention import AttentionMap, ToeplitzKernel

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ('csv', 'pgm')


def _check_map(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValidationError(f"attention map must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise ValidationError("attention map entries must be finite and non-negative")
    return A


def to_grayscale(A: AttentionMap) -> np.ndarray:
    """8-bit image scaled by the largest entry: 0 is black, the max is white."""
    A = _check_map(A)
    peak = A.max()
    if peak == 0:
        return np.zeros(A.shape, dtype=np.uint8)
    return np.rint(A / peak * 255.0).astype(np.uint8)


def export_attention_map(A: AttentionMap, path: str | Path, fmt: str = 'pgm') -> Path:
    if fmt not in EXPORT_FORMATS:
        raise ValidationError(f"export format must be one of {EXPORT_FORMATS}, got {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == 'csv':
        np.savetxt(path, _check_map(A), delimiter=',', fmt='%.17g')
    else:
        # Pillow writes mode "L" through its PPM plugin as binary P5
        Image.fromarray(to_grayscale(A)).save(path, format='PPM')
    logger.info("Exported %dx%d attention map to %s", *np.shape(A), path)
    return path


def export_kernel(kernel: ToeplitzKernel | np.ndarray, path: str | Path) -> Path:
    """Kernel weights as a single CSV row, offsets -D..D left to right."""
    weights = kernel.weight_values() if isinstance(kernel, ToeplitzKernel) else np.asarray(kernel, dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, weights.reshape(1, -1), delimiter=',', fmt='%.17g')
    return path
