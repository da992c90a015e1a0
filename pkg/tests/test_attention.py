"""Tests for Toeplitz and global attention."""

import numpy as np
import pytest

from strata.errors import DimensionError, ValidationError
from strata.grad import ops
from strata.grad.tensor import parameter
from strata.nn.attention import (
    GlobalAttentionParams,
    ToeplitzKernel,
    build_attention_map,
    global_attention_step,
    kernel_summary,
    toeplitz_attention,
)
from tests import oracles


def _random_kernel(rng, D):
    return ToeplitzKernel(parameter(rng.normal(size=2 * D + 1)))


class TestToeplitzKernel:
    def test_uniform_weights(self):
        for D in range(5):
            weights = ToeplitzKernel.uniform(D).weight_values()
            assert np.allclose(weights, 1.0 / (2 * D + 1), atol=1e-15)

    def test_even_length_rejected(self):
        with pytest.raises(DimensionError):
            ToeplitzKernel(parameter(np.zeros(4)))

    def test_negative_width(self):
        with pytest.raises(ValidationError):
            ToeplitzKernel.uniform(-1)


class TestAttentionMap:
    def test_zero_width_is_identity(self):
        rng = np.random.default_rng(0)
        for T in range(1, 65):
            kernel = _random_kernel(rng, 0)
            for boundary in ops.BOUNDARY_MODES:
                assert np.array_equal(build_attention_map(kernel, T, boundary), np.eye(T))

    def test_zero_width_attention_is_passthrough(self):
        rng = np.random.default_rng(1)
        H = rng.normal(size=(12, 5))
        kernel = _random_kernel(rng, 0)
        for boundary in ops.BOUNDARY_MODES:
            assert np.array_equal(toeplitz_attention(H, kernel, boundary).data, H)

    def test_toeplitz_structure_and_band(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            T = int(rng.integers(1, 65))
            D = int(rng.integers(0, 8))
            A = build_attention_map(_random_kernel(rng, D), T)
            assert np.array_equal(A[:-1, :-1], A[1:, 1:])
            offsets = np.abs(np.arange(T)[None, :] - np.arange(T)[:, None])
            assert np.all(A[offsets > D] == 0)
            assert np.all(A[offsets <= D] > 0)

    def test_renormalized_rows_sum_to_one(self):
        A = build_attention_map(np.array([0.1, 0.2, 0.4, 0.2, 0.1]), 6, 'renormalize')
        assert np.allclose(A.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_pad_edge_rows_lose_mass(self):
        A = build_attention_map(np.array([0.25, 0.5, 0.25]), 4)
        assert A[0].sum() == pytest.approx(0.75)
        assert A[1].sum() == pytest.approx(1.0)

    def test_conv_path_equals_map(self):
        rng = np.random.default_rng(3)
        H = rng.normal(size=(20, 6))
        kernel = _random_kernel(rng, 3)
        for boundary in ops.BOUNDARY_MODES:
            conv = toeplitz_attention(H, kernel, boundary).data
            assert np.max(np.abs(conv - build_attention_map(kernel, 20, boundary) @ H)) <= 1e-9

    def test_invalid_length(self):
        with pytest.raises(ValidationError):
            build_attention_map(np.array([1.0]), 0)


class TestGlobalAttention:
    def _params(self, rng, E=6, S=4, A=5):
        return GlobalAttentionParams(
            W=parameter(rng.normal(size=(S, A))),
            U=parameter(rng.normal(size=(E, A))),
            v=parameter(rng.normal(size=A)),
            b=parameter(np.zeros(A)),
        )

    def test_context_is_convex_combination(self):
        rng = np.random.default_rng(4)
        p = self._params(rng)
        H = rng.normal(size=(7, 6))
        context, alpha = global_attention_step(H, rng.normal(size=4), p)
        assert alpha.shape == (7,)
        assert np.all(alpha.data > 0)
        assert alpha.data.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(context.data, alpha.data @ H, atol=1e-12)

    def test_precomputed_projection_gives_same_result(self):
        rng = np.random.default_rng(5)
        p = self._params(rng)
        H, s = rng.normal(size=(7, 6)), rng.normal(size=4)
        direct = global_attention_step(H, s, p)[1].data
        cached = global_attention_step(H, s, p, projected=ops.matmul(H, p.U))[1].data
        assert np.array_equal(direct, cached)

    def test_state_dim_mismatch(self):
        rng = np.random.default_rng(6)
        with pytest.raises(DimensionError):
            global_attention_step(rng.normal(size=(7, 6)), np.ones(3), self._params(rng))

    def test_single_slice_attends_to_itself(self):
        rng = np.random.default_rng(7)
        H = rng.normal(size=(1, 6))
        context, alpha = global_attention_step(H, rng.normal(size=4), self._params(rng))
        assert np.array_equal(alpha.data, np.array([1.0]))
        assert np.array_equal(context.data, H[0])

    def test_matches_explicit_scores(self):
        rng = np.random.default_rng(8)
        p = self._params(rng)
        p.b.data[:] = rng.normal(size=5)
        H, s = rng.normal(size=(7, 6)), rng.normal(size=4)
        context, alpha = global_attention_step(H, s, p)
        expected_context, expected_alpha = oracles.attend(H, s, {name: getattr(p, name).data for name in 'WUvb'})
        assert np.max(np.abs(alpha.data - expected_alpha)) <= 1e-12
        assert np.max(np.abs(context.data - expected_context)) <= 1e-12


class TestKernelSummary:
    def test_centered_peak(self):
        summary = kernel_summary(np.array([0.1, 0.8, 0.1]))
        assert summary['D'] == 1
        assert summary['peak_offset'] == 0
        assert summary['effective_support'] == 3

    def test_shifted_peak_and_support(self):
        summary = kernel_summary(np.array([0.001, 0.099, 0.2, 0.7, 0.0]))
        assert summary['peak_offset'] == 1
        assert summary['effective_support'] == 3
