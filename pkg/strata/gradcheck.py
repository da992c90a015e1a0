"""Finite-difference checks for every layer and both end-to-end models.

Each component builds a fresh random problem from a seed: a scalar
function that rebuilds its graph on every call, and the tensors to
perturb. Layer problems project their output onto a fixed random tensor
so every output coordinate contributes to the scalar.

Central differences carry roughly 1e-11 of roundoff, so a coordinate whose
true gradient is tiny but nonzero cannot be judged by relative error. A
seed keeps drawing problems from its own stream until every nonzero
gradient coordinate is at least MIN_GRADIENT (at most MAX_DRAWS draws).
Coordinates that are exactly zero, such as the recurrent weights of the
per-slice encoder, are fine: their finite differences are exactly zero too.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable

import numpy as np

from strata.errors import UsageError
from strata.grad import ops
from strata.grad.check import finite_difference_check
from strata.grad.tensor import Tensor, backward, constant, parameter, zero_grads
from strata.jobs import fan_out
from strata.nn.attention import GlobalAttentionParams, ToeplitzKernel, global_attention_step, toeplitz_attention
from strata.nn.decoders import Linear, decode_global, decode_toeplitz
from strata.nn.layers import GruParams, bi_gru_encode, gru_cell, per_slice_encode, slice_encoder
from strata.nn.model import Model, ModelConfig, forward
from strata.synth import StackSample

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
MIN_GRADIENT = 1e-5
MAX_DRAWS = 100

# sizes of the end-to-end problems
T, F_RAW, H_ENC = 5, 3, 4

Problem = tuple[Callable[[], Tensor], dict[str, Tensor]]
COMPONENTS: dict[str, Callable[[np.random.Generator], Problem]] = {}


def component(name: str):
    def register(fn):
        COMPONENTS[name] = fn
        return fn
    return register


def _param(rng: np.random.Generator, name: str, *shape: int, scale: float = 0.5) -> Tensor:
    return parameter(rng.normal(0.0, scale, size=shape), name=name)


def _projected(rng: np.random.Generator, build: Callable[[], Tensor], shape: tuple[int, ...]) -> Callable[[], Tensor]:
    weights = constant(rng.normal(size=shape))
    return lambda: ops.total(ops.hadamard(build(), weights))


def _gru(rng: np.random.Generator, prefix: str, input_dim: int, hidden_dim: int) -> dict[str, Tensor]:
    return {
        name: _param(rng, name, *shape)
        for name, shape in GruParams.shapes(prefix, input_dim, hidden_dim).items()
    }


@component('ops.matmul')
def _matmul(rng):
    params = {'a': _param(rng, 'a', 4, 3), 'b': _param(rng, 'b', 3, 5)}
    return _projected(rng, lambda: ops.matmul(params['a'], params['b']), (4, 5)), params


@component('ops.elementwise')
def _elementwise(rng):
    params = {'x': _param(rng, 'x', 4, 3), 'y': _param(rng, 'y', 4, 3), 'bias': _param(rng, 'bias', 3)}

    def build():
        x, y = params['x'], params['y']
        mixed = ops.add(ops.hadamard(ops.sigmoid(x), ops.tanh(y)), params['bias'])
        return ops.sub(mixed, ops.scale(ops.concat_rows(ops.slice_rows(x, 2, 4), ops.slice_rows(y, 0, 2)), 0.3))

    return _projected(rng, build, (4, 3)), params


@component('ops.softmax')
def _softmax(rng):
    params = {'x': _param(rng, 'x', 4, 5, scale=1.0)}
    return _projected(rng, lambda: ops.softmax(params['x']), (4, 5)), params


@component('ops.cross_entropy')
def _cross_entropy(rng):
    params = {'logits': _param(rng, 'logits', 6, 3, scale=1.0)}
    labels = rng.integers(0, 3, size=6)
    return lambda: ops.cross_entropy(params['logits'], labels), params


@component('nn.slice_encoder')
def _slice_encoder(rng):
    raw = constant(rng.normal(size=(T, F_RAW)))
    params = {'W': _param(rng, 'W', F_RAW, 4), 'b': _param(rng, 'b', 4)}
    return _projected(rng, lambda: slice_encoder(raw, params['W'], params['b']), (T, 4)), params


@component('nn.gru_cell')
def _gru_cell(rng):
    params = _gru(rng, 'gru', 3, H_ENC)
    params['x'] = _param(rng, 'x', 3, scale=1.0)
    params['h_prev'] = _param(rng, 'h_prev', H_ENC)

    def build():
        return gru_cell(params['x'], params['h_prev'], GruParams.from_params(params, 'gru'))

    return _projected(rng, build, (H_ENC,)), params


@component('nn.bigru_encoder')
def _bigru(rng):
    features = constant(rng.normal(size=(T, 3)))
    params = {**_gru(rng, 'fwd', 3, H_ENC), **_gru(rng, 'bwd', 3, H_ENC)}

    def build():
        return bi_gru_encode(features, GruParams.from_params(params, 'fwd'), GruParams.from_params(params, 'bwd'))

    return _projected(rng, build, (T, 2 * H_ENC)), params


@component('nn.per_slice_encoder')
def _per_slice(rng):
    features = constant(rng.normal(size=(T, 3)))
    params = {**_gru(rng, 'fwd', 3, H_ENC), **_gru(rng, 'bwd', 3, H_ENC)}

    def build():
        return per_slice_encode(features, GruParams.from_params(params, 'fwd'), GruParams.from_params(params, 'bwd'))

    return _projected(rng, build, (T, 2 * H_ENC)), params


def _toeplitz_problem(rng, boundary: str) -> Problem:
    params = {'H': _param(rng, 'H', T, 2 * H_ENC, scale=1.0), 'logits': _param(rng, 'logits', 3, scale=1.0)}
    build = lambda: toeplitz_attention(params['H'], ToeplitzKernel(params['logits']), boundary)  # noqa: E731
    return _projected(rng, build, (T, 2 * H_ENC)), params


@component('nn.toeplitz_attention.zero_pad')
def _toeplitz_zero_pad(rng):
    return _toeplitz_problem(rng, 'zero_pad')


@component('nn.toeplitz_attention.renormalize')
def _toeplitz_renormalize(rng):
    return _toeplitz_problem(rng, 'renormalize')


@component('nn.global_attention')
def _global_attention(rng):
    E, S, A = 2 * H_ENC, 4, 4
    params = {
        name: _param(rng, name, *shape)
        for name, shape in GlobalAttentionParams.shapes('attn', E, S, A).items()
    }
    params['H'] = _param(rng, 'H', T, E, scale=1.0)
    params['s_prev'] = _param(rng, 's_prev', S)

    def build():
        context, alpha = global_attention_step(params['H'], params['s_prev'], GlobalAttentionParams.from_params(params))
        return ops.concat_rows(context, alpha)

    return _projected(rng, build, (E + T,)), params


@component('nn.decoder.toeplitz')
def _toeplitz_decoder(rng):
    E = 2 * H_ENC
    params = {'C': _param(rng, 'C', T, E, scale=1.0), **{
        name: _param(rng, name, *shape) for name, shape in Linear.shapes('fc', E + 3, 3).items()
    }}
    return _projected(rng, lambda: decode_toeplitz(params['C'], Linear.from_params(params)).logits, (T, 3)), params


@component('nn.decoder.global')
def _global_decoder(rng):
    E, S = 2 * H_ENC, 4
    shapes = {
        **GlobalAttentionParams.shapes('attn', E, S, 4),
        **GruParams.shapes('dec', E + 3, S),
        **Linear.shapes('fc', S, 3),
    }
    params = {name: _param(rng, name, *shape) for name, shape in shapes.items()}
    params['H'] = _param(rng, 'H', T, E, scale=1.0)

    def build():
        return decode_global(
            params['H'],
            GlobalAttentionParams.from_params(params),
            GruParams.from_params(params, 'dec'),
            Linear.from_params(params),
        ).logits

    return _projected(rng, build, (T, 3)), params


def _model_problem(rng, attention: str, mode: str) -> Problem:
    cfg = ModelConfig(
        attention=attention, D=1, raw_dim=F_RAW, feature_dim=3,
        encoder_hidden=H_ENC, decoder_hidden=H_ENC, attention_hidden=H_ENC,
    )
    params = {name: _param(rng, name, *shape) for name, shape in cfg.parameter_shapes().items()}
    model = Model(cfg, params)
    stack = StackSample('gradcheck', rng.normal(size=(T, F_RAW)), np.sort(rng.integers(0, 3, size=T)))
    return lambda: ops.cross_entropy(forward(model, stack, mode), stack.labels), params


@component('model.toeplitz.teacher_forcing')
def _model_toeplitz_tf(rng):
    return _model_problem(rng, 'toeplitz', 'teacher_forcing')


@component('model.toeplitz.free_running')
def _model_toeplitz_free(rng):
    return _model_problem(rng, 'toeplitz', 'free_running')


@component('model.global.teacher_forcing')
def _model_global_tf(rng):
    return _model_problem(rng, 'global', 'teacher_forcing')


@component('model.global.free_running')
def _model_global_free(rng):
    return _model_problem(rng, 'global', 'free_running')


@dataclass(frozen=True)
class GradCheckResult:
    component: str
    seed: int
    error: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def smallest_gradient(f: Callable[[], Tensor], params: dict[str, Tensor]) -> float:
    """Smallest nonzero |backprop gradient| over every coordinate (inf if all are zero)."""
    zero_grads(params.values())
    backward(f())
    grads = np.concatenate([np.zeros(0)] + [np.abs(p.grad).reshape(-1) for p in params.values() if p.grad is not None])
    zero_grads(params.values())
    nonzero = grads[grads > 0]
    return float(nonzero.min()) if nonzero.size else math.inf


def draw_problem(name: str, seed: int) -> Problem:
    try:
        build = COMPONENTS[name]
    except KeyError:
        raise UsageError(f"unknown gradcheck component {name!r}") from None
    rng = np.random.default_rng(seed)
    for attempt in range(1, MAX_DRAWS + 1):
        f, params = build(rng)
        if smallest_gradient(f, params) >= MIN_GRADIENT:
            if attempt > 1:
                logger.debug("%s seed %d: redrew the problem %d times", name, seed, attempt - 1)
            return f, params
    logger.warning("%s seed %d: no draw in %d cleared the gradient floor %.0e", name, seed, MAX_DRAWS, MIN_GRADIENT)
    return f, params


def check_component(name: str, seed: int) -> GradCheckResult:
    f, params = draw_problem(name, seed)
    return GradCheckResult(name, seed, finite_difference_check(f, params))


def select_components(only: str = '') -> list[str]:
    names = [name for name in COMPONENTS if only in name]
    if not names:
        raise UsageError(f"no gradcheck component matches {only!r}; components: {', '.join(COMPONENTS)}")
    return names


def run_gradcheck(seeds: int = 20, only: str = '', base_seed: int = 0, max_workers: int = 1) -> list[GradCheckResult]:
    if seeds < 1:
        raise UsageError(f"gradcheck needs at least one seed, got {seeds}")
    jobs = [(name, base_seed + s) for name in select_components(only) for s in range(seeds)]
    results = fan_out(lambda job: check_component(*job), jobs, max_workers=max_workers, label='gradcheck')
    failed = sum(not r.passed for r in results)
    logger.info("Gradient check: %d problems, %d failed", len(results), failed)
    return results


def format_results(results: list[GradCheckResult]) -> str:
    """One line per component: seeds run, worst error, PASS/FAIL."""
    worst: dict[str, list[GradCheckResult]] = {}
    for r in results:
        worst.setdefault(r.component, []).append(r)
    lines = []
    for name, rows in worst.items():
        error = max(r.error for r in rows)
        status = 'PASS' if all(r.passed for r in rows) else 'FAIL'
        lines.append(f"{name:<36} seeds={len(rows):<3} max_rel_err={error:.3e}  {status}")
    return '\n'.join(lines) + '\n'
