"""Global (additive) attention and Toeplitz attention.

A Toeplitz kernel is one convex weight vector of length 2D+1 shared by every
slice and centred on it (alignment p_t = t), so the stacked attention rows
form a banded Toeplitz matrix and the context is a banded convolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from strata.errors import DimensionError, ValidationError
from strata.grad import ops
from strata.grad.tensor import Tensor, as_tensor, parameter

# T x T matrix; row t holds slice t's weights over the stack.
AttentionMap = np.ndarray


@dataclass(frozen=True)
class ToeplitzKernel:
    logits: Tensor

    def __post_init__(self):
        if self.logits.data.ndim != 1 or self.logits.shape[0] % 2 != 1:
            raise DimensionError(f"kernel logits must have odd length 2D+1, got shape {self.logits.shape}")

    @property
    def D(self) -> int:
        return (self.logits.shape[0] - 1) // 2

    def weights(self) -> Tensor:
        return ops.softmax(self.logits)

    def weight_values(self) -> np.ndarray:
        return self.weights().data.copy()

    @classmethod
    def uniform(cls, D: int) -> ToeplitzKernel:
        if D < 0:
            raise ValidationError(f"D must be non-negative, got {D}")
        return cls(parameter(np.zeros(2 * D + 1), name='kernel.logits'))


@dataclass(frozen=True)
class GlobalAttentionParams:
    W: Tensor  # [H_dec, A]
    U: Tensor  # [E, A]
    v: Tensor  # [A]
    b: Tensor  # [A]

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str = 'attn') -> GlobalAttentionParams:
        return cls(*(params[f'{prefix}.{name}'] for name in ('W', 'U', 'v', 'b')))

    @staticmethod
    def shapes(prefix: str, encoding_dim: int, state_dim: int, hidden_dim: int) -> dict[str, tuple[int, ...]]:
        return {
            f'{prefix}.W': (state_dim, hidden_dim),
            f'{prefix}.U': (encoding_dim, hidden_dim),
            f'{prefix}.v': (hidden_dim,),
            f'{prefix}.b': (hidden_dim,),
        }


def global_attention_step(H, s_prev, p: GlobalAttentionParams, projected: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """score_j = v . tanh(W s_prev + U h_j + b); alpha = softmax(score); c = sum_j alpha_j h_j.

    ``projected`` may carry a precomputed ``H U``, which does not depend on the step.
    """
    H, s_prev = as_tensor(H), as_tensor(s_prev)
    if H.data.ndim != 2 or H.shape[1] != p.U.shape[0]:
        raise DimensionError(f"global attention: encodings {H.shape} do not match U {p.U.shape}")
    if s_prev.shape != (p.W.shape[0],):
        raise DimensionError(f"global attention: state {s_prev.shape} does not match W {p.W.shape}")
    if projected is None:
        projected = ops.matmul(H, p.U)
    hidden = ops.tanh(ops.add(projected, ops.add(ops.matmul(s_prev, p.W), p.b)))
    alpha = ops.softmax(ops.matmul(hidden, p.v))
    return ops.matmul(alpha, H), alpha


def toeplitz_attention(H, kernel: ToeplitzKernel, boundary: str = 'zero_pad') -> Tensor:
    """Context rows c_t = sum_{k=-D..D} a[k+D] h_{t+k}."""
    return ops.conv1d_band(H, kernel.weights(), boundary)


def _weights_of(kernel: ToeplitzKernel | np.ndarray) -> np.ndarray:
    if isinstance(kernel, ToeplitzKernel):
        return kernel.weight_values()
    weights = np.asarray(kernel, dtype=np.float64)
    if weights.ndim != 1 or weights.shape[0] % 2 != 1:
        raise DimensionError(f"kernel weights must have odd length 2D+1, got shape {weights.shape}")
    return weights


def build_attention_map(kernel: ToeplitzKernel | np.ndarray, T: int, boundary: str = 'zero_pad') -> AttentionMap:
    """Explicit T x T map with A[t][j] = a[j - t + D] inside the band, 0 outside."""
    if T < 1:
        raise ValidationError(f"attention map needs T >= 1, got {T}")
    if boundary not in ops.BOUNDARY_MODES:
        raise ValidationError(f"unknown boundary mode {boundary!r}")
    weights = _weights_of(kernel)
    D = (weights.shape[0] - 1) // 2
    offsets = np.arange(T)[None, :] - np.arange(T)[:, None]
    band = np.abs(offsets) <= D
    A = np.zeros((T, T))
    A[band] = weights[offsets[band] + D]
    if boundary == 'renormalize':
        z = A.sum(axis=1, keepdims=True)
        if np.any(z <= 0):
            raise ValidationError("renormalize: a row has no positive in-range weight")
        A /= z
    return A


def kernel_summary(kernel: ToeplitzKernel | np.ndarray, support_threshold: float = 0.01) -> dict:
    """Weights, offset of the peak from the centre, and how many entries reach 1% of the peak."""
    weights = _weights_of(kernel)
    D = (weights.shape[0] - 1) // 2
    peak = int(np.argmax(weights))
    return {
        'D': D,
        'weights': weights.tolist(),
        'peak_offset': peak - D,
        'effective_support': int(np.sum(weights >= support_threshold * weights[peak])),
    }
