"""Decoders with input feeding.

Both decoders see the previous step's output distribution y_{t-1}
(softmax probabilities, y_0 uniform) next to the attended context. Under
teacher forcing the one-hot true label of slice t-1 replaces y_{t-1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from strata.errors import DimensionError, ValidationError
from strata.grad import ops
from strata.grad.tensor import Tensor, as_tensor, constant
from strata.nn.attention import GlobalAttentionParams, global_attention_step
from strata.nn.layers import GruParams, gru_cell

INPUT_FEEDING_MODES = ('probs', 'none')


@dataclass(frozen=True)
class Linear:
    W: Tensor
    b: Tensor

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str = 'fc') -> Linear:
        return cls(params[f'{prefix}.W'], params[f'{prefix}.b'])

    @staticmethod
    def shapes(prefix: str, in_dim: int, out_dim: int) -> dict[str, tuple[int, ...]]:
        return {f'{prefix}.W': (in_dim, out_dim), f'{prefix}.b': (out_dim,)}

    def __call__(self, x) -> Tensor:
        return ops.add(ops.matmul(x, self.W), self.b)


@dataclass(frozen=True)
class DecodeResult:
    logits: Tensor
    # global decoder only: row t is alpha_t
    attention: np.ndarray | None = None


def _feeds(T: int, classes: int, targets) -> list[np.ndarray] | None:
    if targets is None:
        return None
    targets = np.asarray(targets)
    if targets.shape != (T,):
        raise DimensionError(f"teacher forcing needs {T} labels, got shape {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise ValidationError(f"labels must be in 0..{classes - 1}")
    return [np.eye(classes)[label] for label in targets]


def _check_feeding(input_feeding: str) -> None:
    if input_feeding not in INPUT_FEEDING_MODES:
        raise ValidationError(f"unknown input feeding mode {input_feeding!r}")


def decode_toeplitz(C, fc: Linear, input_feeding: str = 'probs', targets=None) -> DecodeResult:
    """logits_t = FC(concat(c_t, y_{t-1})); y_t = softmax(logits_t)."""
    _check_feeding(input_feeding)
    C = as_tensor(C)
    T, E = C.shape
    classes = fc.W.shape[1]
    feed_dim = classes if input_feeding == 'probs' else 0
    if fc.W.shape[0] != E + feed_dim:
        raise DimensionError(f"toeplitz decoder: FC expects {fc.W.shape[0]} inputs, got {E} + {feed_dim}")
    if input_feeding == 'none':
        return DecodeResult(fc(C))

    # FC(concat(c, y)) split as c W_c + y W_y so the context half runs as one matmul
    context_part = ops.add(ops.matmul(C, ops.slice_rows(fc.W, 0, E)), fc.b)
    W_y = ops.slice_rows(fc.W, E, E + classes)
    forced = _feeds(T, classes, targets)
    y_prev = constant(np.full(classes, 1.0 / classes))
    rows = []
    for t in range(T):
        logits_t = ops.add(ops.take_row(context_part, t), ops.matmul(y_prev, W_y))
        rows.append(logits_t)
        y_prev = constant(forced[t]) if forced is not None else ops.softmax(logits_t)
    return DecodeResult(ops.stack_rows(rows))


def decode_global(
    H,
    attn: GlobalAttentionParams,
    gru: GruParams,
    fc: Linear,
    input_feeding: str = 'probs',
    targets=None,
) -> DecodeResult:
    """(c_t, alpha_t) = attend(H, s_{t-1}); s_t = GRU(concat(c_t, y_{t-1}), s_{t-1}); logits_t = FC(s_t)."""
    _check_feeding(input_feeding)
    H = as_tensor(H)
    T, E = H.shape
    classes = fc.W.shape[1]
    feed = input_feeding == 'probs'
    if gru.input_dim != E + (classes if feed else 0):
        raise DimensionError(f"global decoder: GRU input dim {gru.input_dim} does not match encodings {E}")
    if fc.W.shape[0] != gru.hidden_dim:
        raise DimensionError(f"global decoder: FC expects {fc.W.shape[0]} inputs, state has {gru.hidden_dim}")

    projected = ops.matmul(H, attn.U)
    forced = _feeds(T, classes, targets)
    s = constant(np.zeros(gru.hidden_dim))
    y_prev = constant(np.full(classes, 1.0 / classes))
    rows = []
    alphas = np.zeros((T, T))
    for t in range(T):
        c, alpha = global_attention_step(H, s, attn, projected=projected)
        alphas[t] = alpha.data
        s = gru_cell(ops.concat_rows(c, y_prev) if feed else c, s, gru)
        logits_t = fc(s)
        rows.append(logits_t)
        if feed:
            y_prev = constant(forced[t]) if forced is not None else ops.softmax(logits_t)
    return DecodeResult(ops.stack_rows(rows), alphas)
