"""Tests for the finite-difference checker and the per-component registry."""

from unittest.mock import patch

import numpy as np
import pytest

from strata.errors import UsageError
from strata.grad import ops
from strata.grad.check import finite_difference_check, relative_errors
from strata.grad.tensor import constant, parameter, result
from strata.gradcheck import (
    COMPONENTS,
    MIN_GRADIENT,
    check_component,
    draw_problem,
    format_results,
    run_gradcheck,
    select_components,
    smallest_gradient,
)


class TestFiniteDifferenceCheck:
    def test_sum_of_squares(self):
        x = parameter(np.random.default_rng(0).normal(size=5), name='x')
        assert finite_difference_check(lambda: ops.total(ops.hadamard(x, x)), [x]) < 1e-8

    def test_wrong_backward_is_detected(self):
        x = parameter([0.3, -1.2], name='x')

        def doubled_wrong(t):
            return result(t.data * 2.0, (t,), lambda g: (g * 3.0,))

        assert finite_difference_check(lambda: ops.total(doubled_wrong(x)), [x]) > 0.1

    def test_errors_are_reported_per_name(self):
        a = parameter(np.ones(2), name='a')
        b = parameter(np.ones(2), name='b')
        errors = relative_errors(lambda: ops.total(ops.hadamard(a, ops.tanh(b))), {'a': a, 'b': b})
        assert set(errors) == {'a', 'b'}

    def test_parameters_are_restored_and_grads_cleared(self):
        x = parameter([0.1, 0.2, 0.3], name='x')
        before = x.data.copy()
        finite_difference_check(lambda: ops.total(ops.sigmoid(x)), [x])
        assert np.array_equal(x.data, before)
        assert x.grad is None


class TestGradcheckRegistry:
    def test_every_layer_and_both_models_are_registered(self):
        names = set(COMPONENTS)
        for expected in (
            'nn.gru_cell', 'nn.bigru_encoder', 'nn.toeplitz_attention.zero_pad',
            'nn.toeplitz_attention.renormalize', 'nn.global_attention',
            'model.toeplitz.teacher_forcing', 'model.global.teacher_forcing',
        ):
            assert expected in names

    def test_only_filter_matches_substrings(self):
        assert select_components('toeplitz') == [name for name in COMPONENTS if 'toeplitz' in name]

    def test_unknown_filter_raises(self):
        with pytest.raises(UsageError):
            select_components('no-such-layer')

    @pytest.mark.parametrize('name', list(COMPONENTS))
    def test_component_passes(self, name):
        for seed in range(2):
            assert check_component(name, seed).passed

    def test_runs_are_deterministic(self):
        first = run_gradcheck(seeds=2, only='ops.')
        second = run_gradcheck(seeds=2, only='ops.')
        assert [r.error for r in first] == [r.error for r in second]

    def test_format_results(self):
        text = format_results(run_gradcheck(seeds=1, only='ops.softmax'))
        assert 'ops.softmax' in text
        assert 'PASS' in text


class TestGradientFloor:
    @pytest.mark.parametrize('name,seed', [
        ('model.global.free_running', 1),
        ('model.global.free_running', 4),
        ('model.global.free_running', 6),
        ('model.toeplitz.teacher_forcing', 9),
        ('model.global.teacher_forcing', 6),
    ])
    def test_tiny_gradient_seeds_pass(self, name, seed):
        result = check_component(name, seed)
        assert result.passed, result.error

    def test_drawn_models_clear_the_floor(self):
        for name in ('model.global.free_running', 'model.toeplitz.teacher_forcing'):
            f, params = draw_problem(name, 1)
            assert smallest_gradient(f, params) >= MIN_GRADIENT
            assert all(p.grad is None for p in params.values())

    def test_exact_zeros_are_ignored(self):
        x = parameter([0.5, -2.0], name='x')
        unused = parameter([3.0], name='unused')
        assert smallest_gradient(lambda: ops.total(ops.hadamard(x, x)), {'x': x, 'unused': unused}) == 1.0

    def test_tiny_draw_is_replaced(self):
        def build(rng):
            factor = 1e-8 if rng.random() < 0.5 else 1.0
            x = parameter([0.3, 0.7], name='x')
            c = constant([factor, 1.0])
            return lambda: ops.total(ops.hadamard(x, c)), {'x': x}

        with patch.dict(COMPONENTS, {'tiny': build}):
            for seed in range(10):
                f, params = draw_problem('tiny', seed)
                assert smallest_gradient(f, params) == 1.0

