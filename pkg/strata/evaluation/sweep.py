"""Train and evaluate a list of model variants on one dataset."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import json
import logging
import math
from pathlib import Path
from typing import Sequence

from strata.errors import ConfigError
from strata.evaluation.evaluate import EvalReport, evaluate
from strata.evaluation.metrics import IMPOSSIBLE_NAMES, ImpossibleCounts
from strata.jobs import fan_out
from strata.nn.model import ModelConfig
from strata.synth import CLASS_NAMES, StackSample
from strata.train import TrainConfig, split_dataset, train

logger = logging.getLogger(__name__)

# ModelConfig fields each variant pins; everything else comes from the base config.
VARIANTS: dict[str, dict] = {
    'toeplitz_d1': {'attention': 'toeplitz', 'D': 1, 'encoder': 'bigru', 'input_feeding': 'probs'},
    'toeplitz_d0': {'attention': 'toeplitz', 'D': 0, 'encoder': 'bigru', 'input_feeding': 'probs'},
    'toeplitz_d7': {'attention': 'toeplitz', 'D': 7, 'encoder': 'bigru', 'input_feeding': 'probs'},
    'global': {'attention': 'global', 'encoder': 'bigru', 'input_feeding': 'probs'},
    'full_sequence': {'attention': 'toeplitz', 'D': 0, 'encoder': 'bigru', 'input_feeding': 'none'},
    'baseline': {'attention': 'toeplitz', 'D': 0, 'encoder': 'per_slice', 'input_feeding': 'none'},
}

SWEEP_JSON = 'sweep.json'
SWEEP_TEXT = 'sweep.txt'


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
    try:
        return replace(base, **VARIANTS[name])
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


def variant_overrides(name: str) -> dict[str, object]:
    """The variant as RunConfig keys."""
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    return {key.upper(): value for key, value in VARIANTS[name].items()}


@dataclass(frozen=True)
class SweepRun:
    variant: str
    seed: int
    report: EvalReport
    final_train_loss: float


@dataclass
class SweepReport:
    runs: list[SweepRun] = field(default_factory=list)

    def variants(self) -> list[str]:
        return list(dict.fromkeys(run.variant for run in self.runs))

    def runs_of(self, variant: str) -> list[SweepRun]:
        return [run for run in self.runs if run.variant == variant]

    def mean_accuracy(self, variant: str) -> float:
        runs = self.runs_of(variant)
        return sum(run.report.accuracy for run in runs) / len(runs)

    def impossible(self, variant: str) -> ImpossibleCounts:
        """Impossible transitions summed over the variant's seeds."""
        total = ImpossibleCounts()
        for run in self.runs_of(variant):
            total = total + run.report.impossible
        return total

    def to_dict(self) -> dict:
        return {
            'variants': {
                name: {
                    'mean_accuracy': self.mean_accuracy(name),
                    'impossible': dict(zip(IMPOSSIBLE_NAMES, self.impossible(name))),
                    'total_impossible': self.impossible(name).total,
                    'runs': [
                        dict(
                            seed=run.seed,
                            final_train_loss=run.final_train_loss,
                            **{k: v for k, v in run.report.to_dict().items() if k != 'per_stack'},
                        )
                        for run in self.runs_of(name)
                    ],
                }
                for name in self.variants()
            }
        }

    def format_tables(self) -> str:
        def pct(value):
            return 'n/a' if math.isnan(value) else f"{100 * value:6.2f}"

        header = f"{'Variant':<15}{'Acc':>8}" + ''.join(
            f"{name[:3] + ' sens':>10}{name[:3] + ' spec':>10}" for name in CLASS_NAMES
        )
        lines = ['Accuracy, sensitivity and specificity (mean over seeds)', header]
        for name in self.variants():
            runs = self.runs_of(name)
            row = f"{name:<15}{pct(self.mean_accuracy(name)):>8}"
            for c in range(len(CLASS_NAMES)):
                sens = sum(r.report.sensitivity[c] for r in runs) / len(runs)
                spec = sum(r.report.specificity[c] for r in runs) / len(runs)
                row += f"{pct(sens):>10}{pct(spec):>10}"
            lines.append(row)

        lines += ['', 'Anatomically impossible transitions (summed over seeds)']
        lines.append(f"{'Variant':<15}" + ''.join(f"{name:>20}" for name in IMPOSSIBLE_NAMES) + f"{'total':>8}")
        for name in self.variants():
            counts = self.impossible(name)
            lines.append(f"{name:<15}" + ''.join(f"{c:>20}" for c in counts) + f"{counts.total:>8}")
        return '\n'.join(lines) + '\n'

    def save(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path, text_path = out_dir / SWEEP_JSON, out_dir / SWEEP_TEXT
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + '\n', encoding='utf-8')
        text_path.write_text(self.format_tables(), encoding='utf-8')
        return json_path, text_path


def _run_one(
    job: tuple[str, int],
    base: ModelConfig,
    train_cfg: TrainConfig,
    train_data: Sequence[StackSample],
    eval_data: Sequence[StackSample] | None,
) -> SweepRun:
    name, seed = job
    seeded = replace(train_cfg, seed=seed)
    if eval_data is None:
        _, eval_data = split_dataset(train_data, seeded)
        if not eval_data:
            raise ConfigError("no held-out stacks: pass evaluation data or enlarge the dataset")
    ckpt, history = train(variant_config(base, name), seeded, train_data)
    report = evaluate(ckpt.to_model(), eval_data)
    logger.info("Variant %s seed %d: accuracy %.4f, impossible %d", name, seed, report.accuracy, report.total_impossible)
    return SweepRun(variant=name, seed=seed, report=report, final_train_loss=history.train_loss[-1])


def run_sweep(
    base: ModelConfig,
    train_cfg: TrainConfig,
    train_data: Sequence[StackSample],
    eval_data: Sequence[StackSample] | None = None,
    variants: Sequence[str] = tuple(VARIANTS),
    seeds: int = 1,
    max_workers: int = 1,
) -> SweepReport:
    """Every variant trained with seeds ``train_cfg.seed .. train_cfg.seed + seeds - 1``.

    Without ``eval_data`` each run is scored on its own validation split of ``train_data``.
    """
    if seeds < 1:
        raise ConfigError(f"sweep needs at least one seed, got {seeds}")
    for name in variants:
        variant_config(base, name)

    jobs = [(name, train_cfg.seed + offset) for name in variants for offset in range(seeds)]

    def job_fn(job):
        return _run_one(job, base, train_cfg, train_data, eval_data)

    return SweepReport(fan_out(job_fn, jobs, max_workers=max_workers, label='sweep'))
