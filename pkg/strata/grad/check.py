"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import logging
from typing import Callable, Mapping, Sequence

import numpy as np

from strata.grad.tensor import Tensor, backward, zero_grads

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8


def _scalar(value) -> float:
    if isinstance(value, Tensor):
        return float(value.data)
    return float(value)


def _named(params: Sequence[Tensor] | Mapping[str, Tensor]) -> list[tuple[str, Tensor]]:
    if isinstance(params, Mapping):
        return list(params.items())
    return [(p.name or f"param{i}", p) for i, p in enumerate(params)]


def relative_errors(
    f: Callable[[], Tensor],
    params: Sequence[Tensor] | Mapping[str, Tensor],
    eps: float = 1e-5,
) -> dict[str, float]:
    """Worst relative error per parameter between backprop and central differences.

    ``f`` must rebuild its graph from the current parameter data on every call.
    """
    named = _named(params)
    tensors = [p for _, p in named]
    zero_grads(tensors)
    backward(f())
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in named}

    errors: dict[str, float] = {}
    for name, p in named:
        flat = p.data.reshape(-1)
        grad = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.shape[0]):
            original = flat[i]
            flat[i] = original + eps
            upper = _scalar(f())
            flat[i] = original - eps
            lower = _scalar(f())
            flat[i] = original
            numeric = (upper - lower) / (2.0 * eps)
            denom = max(abs(grad[i]), abs(numeric), RELATIVE_FLOOR)
            worst = max(worst, abs(grad[i] - numeric) / denom)
        errors[name] = worst
    zero_grads(tensors)
    return errors


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor] | Mapping[str, Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error over every coordinate of every parameter."""
    errors = relative_errors(f, params, eps=eps)
    worst = max(errors.values(), default=0.0)
    logger.debug("finite-difference check over %d tensors: max relative error %.3e", len(errors), worst)
    return worst
