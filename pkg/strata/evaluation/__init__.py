from strata.evaluation.metrics import (
    ALLOWED_TRANSITIONS,
    IMPOSSIBLE_NAMES,
    IMPOSSIBLE_TRANSITIONS,
    ClassMetrics,
    ConfusionMatrix,
    ImpossibleCounts,
    confusion_matrix,
    count_impossible,
    metrics,
)
from strata.evaluation.evaluate import EvalReport, StackResult, evaluate, format_report, save_report
from strata.evaluation.export import export_attention_map, export_kernel, to_grayscale
from strata.evaluation.bench import BenchReport, BenchResult, benchmark_attention, run_benchmarks

__all__ = [
    'ALLOWED_TRANSITIONS', 'BenchReport', 'BenchResult', 'ClassMetrics', 'ConfusionMatrix', 'EvalReport',
    'IMPOSSIBLE_NAMES', 'IMPOSSIBLE_TRANSITIONS', 'ImpossibleCounts', 'StackResult', 'benchmark_attention',
    'confusion_matrix', 'count_impossible', 'evaluate', 'export_attention_map', 'export_kernel',
    'format_report', 'metrics', 'run_benchmarks', 'save_report', 'to_grayscale',
]
