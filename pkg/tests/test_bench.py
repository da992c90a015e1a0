"""Tests for the attention benchmark."""

from unittest.mock import patch

import numpy as np
import pytest

from strata.errors import BenchmarkGateError, ValidationError
from strata.evaluation import bench
from strata.evaluation.bench import benchmark_attention, median_time, run_benchmarks
from strata.grad.ops import band_convolve


class TestBenchmark:
    @pytest.mark.parametrize('T,E,D', [(8, 4, 1), (64, 16, 7), (5, 3, 4)])
    def test_gate_passes(self, T, E, D):
        result = benchmark_attention(T, E, D, reps=1)
        assert result.max_abs_diff <= 1e-9
        assert result.conv_seconds >= 0 and result.dense_seconds >= 0

    def test_gate_failure_aborts(self):
        def off_by_one(values, weights, boundary='zero_pad'):
            return band_convolve(values, weights, boundary) + 1.0

        with patch.object(bench, 'band_convolve', side_effect=off_by_one):
            with pytest.raises(BenchmarkGateError):
                benchmark_attention(16, 4, 1, reps=1)

    def test_work_ratio(self):
        assert benchmark_attention(512, 4, 7, reps=1).work_ratio == pytest.approx(512 / 15)
        assert benchmark_attention(5, 4, 4, reps=1).work_ratio == 1.0

    def test_invalid_sizes(self):
        with pytest.raises(ValidationError):
            benchmark_attention(0, 4, 1)
        with pytest.raises(ValidationError):
            benchmark_attention(4, 4, 4)

    def test_median_of_timed_reps(self):
        calls = []
        timer = iter([0.0, 1.0, 10.0, 13.0, 20.0, 22.0]).__next__
        assert median_time(lambda: calls.append(1), 3, timer=timer) == 2.0
        assert len(calls) == 4

    def test_sweep_table(self):
        report = run_benchmarks([8, 16], [0, 1], E=2, reps=1)
        assert [(r.T, r.D) for r in report.results] == [(8, 0), (8, 1), (16, 0), (16, 1)]
        assert report.format_table().count('\n') == 5
        assert set(report.to_dict()['results'][0]) >= {'speedup', 'work_ratio', 'max_abs_diff'}

    def test_same_inputs_for_both_paths(self):
        first = benchmark_attention(32, 8, 2, reps=1, seed=3)
        second = benchmark_attention(32, 8, 2, reps=1, seed=3)
        assert first.max_abs_diff == second.max_abs_diff
        assert np.isfinite(first.speedup)
