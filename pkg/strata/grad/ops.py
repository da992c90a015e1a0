"""Differentiable primitives over :class:`Tensor`.

Each op computes its value with numpy and returns a closure that maps the
upstream gradient to one gradient per operand (``None`` where an operand does
not need one).
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from strata.errors import DimensionError, ValidationError
from strata.grad.tensor import Tensor, as_tensor, result

logger = logging.getLogger(__name__)

BOUNDARY_MODES = ('zero_pad', 'renormalize')


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D/2-D operands, following numpy's ``@`` conventions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise DimensionError(f"matmul: operands must be 1-D or 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 1 and B.ndim == 2:
            return B @ g, np.outer(A, g)
        if A.ndim == 2:
            return np.outer(g, B), A.T @ g
        return g * B, g * A

    return result(A @ B, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'add')
    sa, sb = a.shape, b.shape
    return result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'sub')
    sa, sb = a.shape, b.shape
    return result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'hadamard')
    A, B = a.data, b.data
    return result(A * B, (a, b), lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)))


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return result(a.data * factor, (a,), lambda g: (g * factor,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # tanh form: stable for large |x| and exactly 0.5 at 0
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return result(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return result(y, (a,), lambda g: (g * (1.0 - y * y),))


def concat_rows(*operands) -> Tensor:
    """Concatenate along the first axis; for vectors this is plain concatenation."""
    tensors = [as_tensor(t) for t in operands]
    if not tensors:
        raise DimensionError("concat_rows: nothing to concatenate")
    tails = {t.shape[1:] for t in tensors}
    if len(tails) != 1 or any(t.data.ndim == 0 for t in tensors):
        raise DimensionError(f"concat_rows: incompatible shapes {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return result(np.concatenate([t.data for t in tensors], axis=0), tensors, backward)


def concat_cols(*operands) -> Tensor:
    tensors = [as_tensor(t) for t in operands]
    if not tensors or any(t.data.ndim != 2 for t in tensors) or len({t.shape[0] for t in tensors}) != 1:
        raise DimensionError(f"concat_cols: incompatible shapes {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return result(np.concatenate([t.data for t in tensors], axis=1), tensors, backward)


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim == 0 or not 0 <= start <= stop <= a.shape[0]:
        raise DimensionError(f"slice_rows: bounds [{start}, {stop}) invalid for shape {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return result(a.data[start:stop], (a,), backward)


def take_row(a, index: int) -> Tensor:
    """Row ``index`` of a matrix as a vector."""
    a = as_tensor(a)
    if a.data.ndim != 2 or not 0 <= index < a.shape[0]:
        raise DimensionError(f"take_row: row {index} invalid for shape {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return result(a.data[index], (a,), backward)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix."""
    tensors = [as_tensor(r) for r in rows]
    if not tensors or any(t.data.ndim != 1 for t in tensors) or len({t.shape for t in tensors}) != 1:
        raise DimensionError(f"stack_rows: need equal-length vectors, got {[t.shape for t in tensors]}")
    return result(np.stack([t.data for t in tensors]), tensors, lambda g: tuple(g))


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: cannot view {original} as {shape}") from e
    return result(data, (a,), lambda g: (g.reshape(original),))


def total(a) -> Tensor:
    """Sum of all entries as a scalar."""
    a = as_tensor(a)
    shape = a.shape
    return result(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def softmax(x) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    x = as_tensor(x)
    if x.data.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax: need at least one element, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return result(y, (x,), backward)


def cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of -log softmax(logits[t])[labels[t]], via fused log-sum-exp."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy: logits must be [T, C], got {logits.shape}")
    rows, classes = logits.shape
    if labels.shape != (rows,):
        raise DimensionError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {rows} rows")
    if rows == 0:
        raise DimensionError("cross_entropy: empty sequence")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= classes:
        raise ValidationError(f"cross_entropy: labels must be integers in 0..{classes - 1}")

    z = logits.data
    peak = z.max(axis=1, keepdims=True)
    log_norm = peak[:, 0] + np.log(np.exp(z - peak).sum(axis=1))
    picked = z[np.arange(rows), labels]
    loss = np.mean(log_norm - picked)

    def backward(g):
        probs = np.exp(z - log_norm[:, None])
        probs[np.arange(rows), labels] -= 1.0
        return (probs * (float(g) / rows),)

    return result(np.asarray(loss), (logits,), backward)


def _kernel_half_width(kernel: np.ndarray) -> int:
    if kernel.ndim != 1 or kernel.shape[0] % 2 != 1:
        raise DimensionError(f"band kernel must be a 1-D vector of odd length 2D+1, got shape {kernel.shape}")
    return (kernel.shape[0] - 1) // 2


def _row_window(T: int, offset: int) -> tuple[int, int]:
    """Rows t for which t + offset lies inside [0, T)."""
    return max(0, -offset), min(T, T - offset)


def band_normalizers(T: int, weights: np.ndarray) -> np.ndarray:
    """Sum of the in-range kernel weights for every row."""
    D = _kernel_half_width(weights)
    z = np.zeros(T)
    for offset in range(-D, D + 1):
        lo, hi = _row_window(T, offset)
        if lo < hi:
            z[lo:hi] += weights[offset + D]
    return z


def band_convolve(values: np.ndarray, weights: np.ndarray, boundary: str = 'zero_pad') -> np.ndarray:
    """out[t] = sum_k weights[k + D] * values[t + k] over the in-range k.

    Work is O(T * (2D + 1) * E); ``renormalize`` divides each row by the sum
    of the weights that stayed in range.
    """
    if boundary not in BOUNDARY_MODES:
        raise ValidationError(f"unknown boundary mode {boundary!r}")
    D = _kernel_half_width(weights)
    T = values.shape[0]
    if 2 * D + 1 > 2 * T - 1:
        raise DimensionError(f"kernel of length {2 * D + 1} too long for a sequence of length {T}")
    out = np.zeros_like(values, dtype=np.float64)
    for offset in range(-D, D + 1):
        lo, hi = _row_window(T, offset)
        if lo < hi:
            out[lo:hi] += weights[offset + D] * values[lo + offset:hi + offset]
    if boundary == 'renormalize':
        z = band_normalizers(T, weights)
        if np.any(z <= 0):
            raise ValidationError("renormalize: a row has no positive in-range weight")
        out /= z.reshape((T,) + (1,) * (values.ndim - 1))
    return out


def conv1d_band(H, kernel, boundary: str = 'zero_pad') -> Tensor:
    """Banded 1-D convolution of the rows of ``H`` with a convex kernel."""
    H, kernel = as_tensor(H), as_tensor(kernel)
    values, weights = H.data, kernel.data
    out = band_convolve(values, weights, boundary)
    D = _kernel_half_width(weights)
    T = values.shape[0]
    trailing = (T,) + (1,) * (values.ndim - 1)

    def backward(g):
        if boundary == 'renormalize':
            g = g / band_normalizers(T, weights).reshape(trailing)
        d_values = np.zeros_like(values)
        d_weights = np.zeros_like(weights)
        for offset in range(-D, D + 1):
            lo, hi = _row_window(T, offset)
            if lo >= hi:
                continue
            window = values[lo + offset:hi + offset]
            d_values[lo + offset:hi + offset] += weights[offset + D] * g[lo:hi]
            if boundary == 'renormalize':
                window = window - out[lo:hi]
            d_weights[offset + D] = np.sum(g[lo:hi] * window)
        return d_values, d_weights

    return result(out, (H, kernel), backward)


_ELEMENTWISE = {
    'add': add,
    'sub': sub,
    'hadamard': hadamard,
    'sigmoid': sigmoid,
    'tanh': tanh,
    'scale': scale,
    'concat_rows': concat_rows,
    'slice_rows': slice_rows,
}


def elementwise(kind: str, *operands, **kwargs) -> Tensor:
    """Dispatch one of the elementwise/structural primitives by name."""
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ValidationError(f"unknown elementwise kind {kind!r}") from None
    return op(*operands, **kwargs)
