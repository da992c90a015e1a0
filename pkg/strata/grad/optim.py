"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from strata.errors import DimensionError
from strata.grad.tensor import Tensor


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Update ``params`` in place; a missing gradient counts as zero."""
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise DimensionError(f"adam: gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        param.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


def clip_grad_norm(grads: Mapping[str, np.ndarray | None], max_norm: float) -> tuple[dict[str, np.ndarray | None], float]:
    """Rescale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None))
    if max_norm <= 0 or norm <= max_norm:
        return dict(grads), norm
    factor = max_norm / norm
    return {name: (None if g is None else g * factor) for name, g in grads.items()}, norm
