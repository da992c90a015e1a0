"""Slice encoder and (bidirectional) GRU encoder.

GRU convention, fixed throughout::

    z  = sigmoid(x W_z + h_prev U_z + b_z)
    r  = sigmoid(x W_r + h_prev U_r + b_r)
    h~ = tanh(x W_h + (r * h_prev) U_h + b_h)
    h  = (1 - z) * h_prev + z * h~
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from strata.errors import DimensionError, ValidationError
from strata.grad import ops
from strata.grad.tensor import Tensor, as_tensor, constant

GATES = ('z', 'r', 'h')


@dataclass(frozen=True)
class GruParams:
    W_z: Tensor
    W_r: Tensor
    W_h: Tensor
    U_z: Tensor
    U_r: Tensor
    U_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    def __post_init__(self):
        F, H = self.W_z.shape
        for gate in GATES:
            if getattr(self, f'W_{gate}').shape != (F, H):
                raise DimensionError(f"GRU W_{gate} must be {(F, H)}")
            if getattr(self, f'U_{gate}').shape != (H, H):
                raise DimensionError(f"GRU U_{gate} must be {(H, H)}")
            if getattr(self, f'b_{gate}').shape != (H,):
                raise DimensionError(f"GRU b_{gate} must be {(H,)}")

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str) -> GruParams:
        return cls(**{
            f'{kind}_{gate}': params[f'{prefix}.{kind}_{gate}']
            for kind in ('W', 'U', 'b') for gate in GATES
        })

    @staticmethod
    def shapes(prefix: str, input_dim: int, hidden_dim: int) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for gate in GATES:
            shapes[f'{prefix}.W_{gate}'] = (input_dim, hidden_dim)
            shapes[f'{prefix}.U_{gate}'] = (hidden_dim, hidden_dim)
            shapes[f'{prefix}.b_{gate}'] = (hidden_dim,)
        return shapes


def slice_encoder(raw, W, b) -> Tensor:
    """tanh(raw W + b) for one slice [F_raw] or a whole stack [T, F_raw]."""
    raw, W, b = as_tensor(raw), as_tensor(W), as_tensor(b)
    if W.data.ndim != 2 or raw.shape[-1:] != W.shape[:1] or b.shape != W.shape[1:]:
        raise DimensionError(f"slice_encoder: raw {raw.shape}, W {W.shape}, b {b.shape} do not agree")
    return ops.tanh(ops.add(ops.matmul(raw, W), b))


def _input_projections(x: Tensor, p: GruParams) -> tuple[Tensor, Tensor, Tensor]:
    return tuple(
        ops.add(ops.matmul(x, getattr(p, f'W_{gate}')), getattr(p, f'b_{gate}'))
        for gate in GATES
    )


def _gru_update(xz: Tensor, xr: Tensor, xh: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    z = ops.sigmoid(ops.add(xz, ops.matmul(h_prev, p.U_z)))
    r = ops.sigmoid(ops.add(xr, ops.matmul(h_prev, p.U_r)))
    h_tilde = ops.tanh(ops.add(xh, ops.matmul(ops.hadamard(r, h_prev), p.U_h)))
    return ops.add(ops.hadamard(ops.sub(1.0, z), h_prev), ops.hadamard(z, h_tilde))


def gru_cell(x, h_prev, p: GruParams) -> Tensor:
    """One GRU step. Rows of a 2-D ``x``/``h_prev`` are stepped independently."""
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    if x.shape[-1] != p.input_dim:
        raise DimensionError(f"gru_cell: input dim {x.shape[-1]} != {p.input_dim}")
    if h_prev.shape[-1] != p.hidden_dim or h_prev.data.ndim != x.data.ndim:
        raise DimensionError(f"gru_cell: state shape {h_prev.shape} does not match input {x.shape}")
    return _gru_update(*_input_projections(x, p), h_prev, p)


def _run_direction(projections: tuple[Tensor, Tensor, Tensor], order: range, p: GruParams) -> list[Tensor]:
    T = projections[0].shape[0]
    states: list[Tensor | None] = [None] * T
    h = constant(np.zeros(p.hidden_dim))
    for t in order:
        xz, xr, xh = (ops.take_row(proj, t) for proj in projections)
        h = _gru_update(xz, xr, xh, h, p)
        states[t] = h
    return states


def _check_sequence(features: Tensor, fwd: GruParams, bwd: GruParams) -> None:
    if features.data.ndim != 2:
        raise DimensionError(f"encoder: features must be [T, F], got {features.shape}")
    if features.shape[0] < 1:
        raise ValidationError("encoder: empty sequence")
    if features.shape[1] != fwd.input_dim or features.shape[1] != bwd.input_dim:
        raise DimensionError(f"encoder: feature dim {features.shape[1]} does not match the GRU input dim")


def bi_gru_encode(features, fwd: GruParams, bwd: GruParams) -> Tensor:
    """Encodings [T, 2H]: row t is concat(forward state after 1..t, backward state after T..t)."""
    features = as_tensor(features)
    _check_sequence(features, fwd, bwd)
    T = features.shape[0]
    forward_states = _run_direction(_input_projections(features, fwd), range(T), fwd)
    backward_states = _run_direction(_input_projections(features, bwd), range(T - 1, -1, -1), bwd)
    return ops.concat_cols(ops.stack_rows(forward_states), ops.stack_rows(backward_states))


def per_slice_encode(features, fwd: GruParams, bwd: GruParams) -> Tensor:
    """Same layout as :func:`bi_gru_encode` but every slice is encoded alone from a zero state."""
    features = as_tensor(features)
    _check_sequence(features, fwd, bwd)
    T = features.shape[0]
    halves = [
        gru_cell(features, constant(np.zeros((T, p.hidden_dim))), p)
        for p in (fwd, bwd)
    ]
    return ops.concat_cols(*halves)
