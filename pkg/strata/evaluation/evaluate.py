"""Free-running evaluation over a dataset and the report files."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
import json
import logging
import math
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from strata.errors import ValidationError
from strata.evaluation.metrics import (
    IMPOSSIBLE_NAMES,
    ConfusionMatrix,
    ImpossibleCounts,
    confusion_matrix,
    count_impossible,
    metrics,
)
from strata.jobs import fan_out
from strata.nn.attention import kernel_summary
from strata.nn.model import Model, predict
from strata.synth import CLASS_NAMES, StackSample

logger = logging.getLogger(__name__)

REPORT_JSON = 'report.json'
REPORT_TEXT = 'report.txt'

Predictor = Callable[[StackSample], np.ndarray]


@dataclass(frozen=True)
class StackResult:
    id: str
    length: int
    accuracy: float
    impossible: ImpossibleCounts


@dataclass
class EvalReport:
    accuracy: float
    sensitivity: tuple[float, ...]
    specificity: tuple[float, ...]
    impossible: ImpossibleCounts
    confusion: ConfusionMatrix
    per_stack: list[StackResult] = field(default_factory=list)
    kernel: dict | None = None

    @property
    def total_impossible(self) -> int:
        return self.impossible.total

    @property
    def n_slices(self) -> int:
        return self.confusion.total

    def to_dict(self) -> dict:
        return {
            'accuracy': self.accuracy,
            'sensitivity': _nullable(self.sensitivity),
            'specificity': _nullable(self.specificity),
            'classes': list(CLASS_NAMES),
            'impossible': dict(zip(IMPOSSIBLE_NAMES, self.impossible)),
            'total_impossible': self.total_impossible,
            'confusion_matrix': self.confusion.tolist(),
            'n_stacks': len(self.per_stack),
            'n_slices': self.n_slices,
            'kernel': self.kernel,
            'per_stack': [
                {
                    'id': s.id,
                    'length': s.length,
                    'accuracy': s.accuracy,
                    'impossible': list(s.impossible),
                }
                for s in self.per_stack
            ],
        }


def _nullable(values) -> list[float | None]:
    return [None if math.isnan(v) else v for v in values]


def _predictor(model: Union[Model, Predictor]) -> Predictor:
    if isinstance(model, Model):
        return partial(predict, model)
    if callable(model):
        return model
    raise ValidationError(f"cannot evaluate {type(model).__name__}; pass a Model or a predictor")


def _evaluate_stack(predictor: Predictor, stack: StackSample) -> tuple[StackResult, ConfusionMatrix]:
    pred = np.asarray(predictor(stack))
    cm = confusion_matrix(pred, stack.labels)
    result = StackResult(
        id=stack.id,
        length=len(stack),
        accuracy=float(np.mean(pred == stack.labels)),
        impossible=count_impossible(pred),
    )
    return result, cm


def evaluate(
    model: Union[Model, Predictor],
    dataset: Sequence[StackSample],
    max_workers: int = 1,
) -> EvalReport:
    """Per-slice pooled metrics and summed impossible transitions over free-running predictions.

    ``model`` may also be any callable mapping a stack to predicted labels.
    """
    if not dataset:
        raise ValidationError("cannot evaluate an empty dataset")
    per_stack = fan_out(partial(_evaluate_stack, _predictor(model)), dataset, max_workers=max_workers, label='evaluate')

    confusion = ConfusionMatrix(np.zeros((3, 3), dtype=np.int64))
    impossible = ImpossibleCounts()
    for result, cm in per_stack:
        confusion = confusion + cm
        impossible = impossible + result.impossible
    scores = metrics(confusion)

    kernel = None
    if isinstance(model, Model) and model.config.attention == 'toeplitz':
        kernel = kernel_summary(model.kernel())

    report = EvalReport(
        accuracy=scores.accuracy,
        sensitivity=scores.sensitivity,
        specificity=scores.specificity,
        impossible=impossible,
        confusion=confusion,
        per_stack=[result for result, _ in per_stack],
        kernel=kernel,
    )
    logger.info(
        "Evaluated %d stacks (%d slices): accuracy %.4f, impossible transitions %d",
        len(dataset), report.n_slices, report.accuracy, report.total_impossible,
    )
    return report


def _pct(value: float) -> str:
    return 'n/a' if math.isnan(value) else f"{100 * value:.2f}"


def format_report(report: EvalReport, title: str = 'Evaluation Report') -> str:
    """Human-readable tables: per-class metrics, then the impossible transitions."""
    text = (
        f"{title}\n"
        f"Stacks: {len(report.per_stack)} ({report.n_slices} slices)\n"
        f"Accuracy: {_pct(report.accuracy)}%\n\n"
        f"{'Class':<12}{'Sensitivity':>14}{'Specificity':>14}\n"
    )
    for name, sens, spec in zip(CLASS_NAMES, report.sensitivity, report.specificity):
        text += f"{name:<12}{_pct(sens):>14}{_pct(spec):>14}\n"

    text += "\nAnatomically impossible transitions:\n"
    for name, count in zip(IMPOSSIBLE_NAMES, report.impossible):
        text += f"- {name}: {count}\n"
    text += f"- total: {report.total_impossible}\n"

    if report.kernel is not None:
        weights = ', '.join(f"{w:.4f}" for w in report.kernel['weights'])
        text += (
            f"\nToeplitz kernel (D={report.kernel['D']}): [{weights}]\n"
            f"Peak offset: {report.kernel['peak_offset']}, effective support: {report.kernel['effective_support']}\n"
        )
    return text


def save_report(report: EvalReport, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / REPORT_JSON
    text_path = out_dir / REPORT_TEXT
    json_path.write_text(json.dumps(report.to_dict(), indent=2) + '\n', encoding='utf-8')
    text_path.write_text(format_report(report), encoding='utf-8')
    return json_path, text_path
