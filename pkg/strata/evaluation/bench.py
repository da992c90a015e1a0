"""Banded convolution vs. dense T x T map multiply."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import logging
import statistics
import time
from typing import Callable, Iterable

import numpy as np

from strata.errors import BenchmarkGateError, ValidationError
from strata.grad.ops import band_convolve
from strata.nn.attention import build_attention_map

logger = logging.getLogger(__name__)

GATE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BenchResult:
    T: int
    E: int
    D: int
    reps: int
    conv_seconds: float
    dense_seconds: float
    max_abs_diff: float

    @property
    def speedup(self) -> float:
        return self.dense_seconds / self.conv_seconds if self.conv_seconds > 0 else float('inf')

    @property
    def work_ratio(self) -> float:
        """Dense O(T^2 E) over banded O(T (2D+1) E); tends to 1 once the band covers the sequence."""
        return self.T / min(2 * self.D + 1, self.T)

    def to_dict(self) -> dict:
        return dict(asdict(self), speedup=self.speedup, work_ratio=self.work_ratio)


@dataclass
class BenchReport:
    results: list[BenchResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {'results': [r.to_dict() for r in self.results]}

    def format_table(self) -> str:
        lines = [f"{'T':>6}{'D':>4}{'E':>6}{'conv ms':>12}{'dense ms':>12}{'speedup':>10}{'work ratio':>12}"]
        for r in self.results:
            lines.append(
                f"{r.T:>6}{r.D:>4}{r.E:>6}{1e3 * r.conv_seconds:>12.4f}{1e3 * r.dense_seconds:>12.4f}"
                f"{r.speedup:>9.1f}x{r.work_ratio:>11.1f}x"
            )
        return '\n'.join(lines) + '\n'


def median_time(fn: Callable[[], object], reps: int, timer: Callable[[], float] = time.perf_counter) -> float:
    fn()
    samples = []
    for _ in range(reps):
        start = timer()
        fn()
        samples.append(timer() - start)
    return statistics.median(samples)


def benchmark_attention(
    T: int,
    E: int,
    D: int,
    reps: int = 5,
    seed: int = 0,
    boundary: str = 'zero_pad',
    timer: Callable[[], float] = time.perf_counter,
) -> BenchResult:
    """Check the two paths agree within 1e-9, then time both on the same inputs."""
    if T < 1 or E < 1 or reps < 1 or D < 0:
        raise ValidationError(f"benchmark sizes must be positive (T={T}, E={E}, D={D}, reps={reps})")
    if 2 * D + 1 > 2 * T - 1:
        raise ValidationError(f"D={D} gives a kernel longer than any offset in a sequence of length {T}")
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(T, E))
    logits = rng.normal(size=2 * D + 1)
    weights = np.exp(logits - logits.max())
    weights /= weights.sum()

    def conv():
        return band_convolve(H, weights, boundary)

    def dense():
        return build_attention_map(weights, T, boundary) @ H

    max_abs_diff = float(np.max(np.abs(conv() - dense())))
    if not max_abs_diff <= GATE_TOLERANCE:
        raise BenchmarkGateError(
            f"conv and dense attention disagree by {max_abs_diff:.3e} at T={T}, E={E}, D={D}"
        )
    result = BenchResult(
        T=T, E=E, D=D, reps=reps,
        conv_seconds=median_time(conv, reps, timer),
        dense_seconds=median_time(dense, reps, timer),
        max_abs_diff=max_abs_diff,
    )
    logger.info(
        "T=%d D=%d E=%d: conv %.3f ms, dense %.3f ms, speedup %.1fx (work ratio %.1fx)",
        T, D, E, 1e3 * result.conv_seconds, 1e3 * result.dense_seconds, result.speedup, result.work_ratio,
    )
    return result


def run_benchmarks(
    lengths: Iterable[int],
    widths: Iterable[int],
    E: int = 64,
    reps: int = 5,
    seed: int = 0,
) -> BenchReport:
    report = BenchReport()
    widths = list(widths)
    for T in lengths:
        for D in widths:
            report.results.append(benchmark_attention(T, E, D, reps=reps, seed=seed))
    return report
