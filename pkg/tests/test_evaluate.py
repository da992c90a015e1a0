"""Tests for dataset evaluation and the report files."""

import json

import numpy as np
import pytest

from strata.errors import ValidationError
from strata.evaluation.evaluate import REPORT_JSON, REPORT_TEXT, evaluate, format_report, save_report
from strata.evaluation.metrics import IMPOSSIBLE_NAMES
from strata.synth import StackSample


def _oracle(stack):
    return stack.labels


def _all_epidermis(stack):
    return np.zeros(len(stack), dtype=np.int64)


class TestEvaluate:
    def test_oracle_is_perfect(self, tiny_dataset):
        report = evaluate(_oracle, tiny_dataset)
        assert report.accuracy == 1.0
        assert report.impossible == (0, 0, 0, 0)
        assert report.n_slices == sum(len(s) for s in tiny_dataset)
        assert len(report.per_stack) == len(tiny_dataset)

    def test_constant_prediction_has_no_impossible_transitions(self, tiny_dataset):
        report = evaluate(_all_epidermis, tiny_dataset)
        assert report.total_impossible == 0
        assert report.accuracy < 1.0
        assert report.sensitivity[0] == 1.0
        assert report.sensitivity[2] == 0.0

    def test_reversed_predictions_are_counted(self, tiny_dataset):
        report = evaluate(lambda s: s.labels[::-1].copy(), tiny_dataset)
        assert report.impossible.dej_to_epidermis == len(tiny_dataset)
        assert report.impossible.dermis_to_dej == len(tiny_dataset)
        assert report.total_impossible == sum(r.impossible.total for r in report.per_stack)

    def test_model_report_carries_kernel(self, toeplitz_model, tiny_dataset):
        report = evaluate(toeplitz_model, tiny_dataset)
        assert report.kernel['D'] == 1
        assert 0.0 <= report.accuracy <= 1.0

    def test_global_model_has_no_kernel(self, global_model, tiny_dataset):
        assert evaluate(global_model, tiny_dataset).kernel is None

    def test_worker_count_does_not_change_report(self, toeplitz_model, tiny_dataset):
        serial = evaluate(toeplitz_model, tiny_dataset)
        parallel = evaluate(toeplitz_model, tiny_dataset, max_workers=3)
        assert serial.to_dict() == parallel.to_dict()

    def test_empty_dataset(self):
        with pytest.raises(ValidationError):
            evaluate(_oracle, [])

    def test_non_predictor(self, tiny_dataset):
        with pytest.raises(ValidationError):
            evaluate('model', tiny_dataset)


class TestReportFiles:
    def test_text_lists_error_types_in_order(self, tiny_dataset):
        text = format_report(evaluate(_oracle, tiny_dataset))
        positions = [text.index(name) for name in IMPOSSIBLE_NAMES]
        assert positions == sorted(positions)
        assert 'Accuracy: 100.00%' in text

    def test_undefined_cells_become_null(self, tmp_path):
        stack = StackSample(id='flat', features=np.zeros((4, 3)), labels=np.zeros(4, dtype=np.int64))
        report = evaluate(_oracle, [stack])
        json_path, text_path = save_report(report, tmp_path)
        assert json_path.name == REPORT_JSON and text_path.name == REPORT_TEXT
        data = json.loads(json_path.read_text())
        assert data['sensitivity'] == [1.0, None, None]
        assert data['total_impossible'] == 0
        assert list(data['impossible']) == list(IMPOSSIBLE_NAMES)
        assert 'n/a' in text_path.read_text()
