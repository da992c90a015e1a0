"""Command-line interface: one group, one subcommand per experiment step.

Every command resolves its configuration (profile defaults < ``--config``
file < ``--set KEY=VALUE`` < command flags), writes the resolved file into
the output directory and then does its work there.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from strata import __version__
from strata.checkpoint import load_checkpoint, save_checkpoint
from strata.config import RESOLVED_CONFIG_NAME, RunConfig, config as profiles, load_config, parse_int_list
from strata.errors import ConfigError, GradCheckFailed, StrataError, UsageError
from strata.evaluation.bench import run_benchmarks
from strata.evaluation.evaluate import evaluate, format_report, save_report
from strata.evaluation.export import EXPORT_FORMATS, export_attention_map, export_kernel
from strata.evaluation.sweep import VARIANTS, run_sweep, variant_overrides
from strata.grad.tensor import set_debug_finite
from strata.gradcheck import format_results, run_gradcheck
from strata.nn.attention import ToeplitzKernel, build_attention_map
from strata.nn.model import attention_map
from strata.synth import generate_dataset, load_dataset, save_dataset
from strata.train import split_dataset, train

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'checkpoint.json'
HISTORY_NAME = 'history.json'
DATASET_NAME = 'data.jsonl'
BENCH_NAME = 'bench.json'


class StrataGroup(click.Group):
    """Turns library errors into one ``error[<CODE>]: ...`` line and a nonzero exit."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except StrataError as e:
            click.echo(f"error[{e.code}]: {e}", err=True)
            ctx.exit(2)
        except OSError as e:
            click.echo(f"error[E_IO]: {e}", err=True)
            ctx.exit(1)


def _parse_sets(values: tuple[str, ...]) -> dict[str, str]:
    overrides = {}
    for item in values:
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint='--set')
        overrides[key.strip().upper()] = value.strip()
    return overrides


def _apply_log_level(run: RunConfig, verbosity: str | None) -> None:
    name = verbosity or run.LOG_LEVEL
    level = getattr(logging, str(name).upper(), None)
    if not isinstance(level, int):
        raise ConfigError(f"unknown log level {name!r}")
    logging.getLogger('strata').setLevel(level)


def resolve(ctx: click.Context, **flags) -> RunConfig:
    """Resolved config for this invocation, echoed into OUT_DIR."""
    obj = ctx.obj
    overrides = dict(obj['sets'])
    if obj['workers'] is not None:
        overrides['WORKERS'] = obj['workers']
    preset = flags.pop('preset', None)
    if preset:
        overrides.update(variant_overrides(preset))
    overrides.update({key: value for key, value in flags.items() if value is not None})
    run = load_config(obj['config_path'], overrides, profile=obj['profile'])
    _apply_log_level(run, obj['verbosity'])
    set_debug_finite(run.DEBUG_FINITE)
    out_dir = Path(run.OUT_DIR)
    run.save(out_dir / RESOLVED_CONFIG_NAME)
    logger.debug("Resolved config written to %s", out_dir / RESOLVED_CONFIG_NAME)
    return run


def _require_path(value: str, flag: str) -> Path:
    if not value:
        raise UsageError(f"missing {flag}")
    return Path(value)


@click.group(cls=StrataGroup)
@click.version_option(__version__, prog_name='strata')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='Flat KEY=value configuration file (e.g. a previous resolved_config.env).')
@click.option('--profile', type=click.Choice(sorted(profiles)), default='default', show_default=True,
              help='Set of built-in defaults.')
@click.option('--set', 'sets', multiple=True, metavar='KEY=VALUE', help='Override any configuration key.')
@click.option('--workers', type=int, default=None, help='Threads for generation and evaluation.')
@click.option('-v', '--verbose', 'verbosity', flag_value='DEBUG', default=None, help='Debug logging.')
@click.option('-q', '--quiet', 'verbosity', flag_value='WARNING', help='Warnings and errors only.')
@click.pass_context
def cli(ctx, config_path, profile, sets, workers, verbosity):
    """Toeplitz and global attention sequence labelling of layered stacks."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        config_path=config_path,
        profile=profile,
        sets=_parse_sets(sets),
        workers=workers,
        verbosity=verbosity,
    )


@cli.command()
@click.option('--n', 'n_stacks', type=int, help='Number of stacks.')
@click.option('--seed', 'data_seed', type=int, help='Master seed.')
@click.option('--out', 'data', type=click.Path(dir_okay=False), help='Dataset file to write.')
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.option('--t-min', type=int)
@click.option('--t-max', type=int)
@click.option('--noise', 'noise_sigma', type=float, help='Feature noise standard deviation.')
@click.option('--softness', type=float, help='Width of the sigmoid blend at layer boundaries.')
@click.pass_context
def generate(ctx, n_stacks, data_seed, data, out_dir, t_min, t_max, noise_sigma, softness):
    """Generate a synthetic dataset."""
    run = resolve(
        ctx, N_STACKS=n_stacks, DATA_SEED=data_seed, DATA=data, OUT_DIR=out_dir,
        T_MIN=t_min, T_MAX=t_max, NOISE_SIGMA=noise_sigma, SOFTNESS=softness,
    )
    path = Path(run.DATA) if run.DATA else Path(run.OUT_DIR) / DATASET_NAME
    samples = generate_dataset(run.synth(), run.N_STACKS, run.DATA_SEED, max_workers=run.WORKERS)
    save_dataset(samples, path)
    click.echo(f"Wrote {len(samples)} stacks (seed {run.DATA_SEED}) to {path}")


@cli.command(name='train')
@click.option('--data', type=click.Path(dir_okay=False), help='Training dataset.')
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.option('--attention', type=click.Choice(['toeplitz', 'global']))
@click.option('--d', 'D', type=int, help='Toeplitz kernel half-width.')
@click.option('--boundary', type=click.Choice(['zero_pad', 'renormalize']))
@click.option('--encoder', type=click.Choice(['bigru', 'per_slice']))
@click.option('--input-feeding', type=click.Choice(['probs', 'none']))
@click.option('--preset', type=click.Choice(sorted(VARIANTS)), help='Named model variant.')
@click.option('--seed', type=int)
@click.option('--epochs', type=int)
@click.option('--lr', type=float)
@click.option('--teacher-forcing/--no-teacher-forcing', default=None)
@click.option('--grad-clip', type=float, help='Global gradient-norm clip, 0 disables.')
@click.pass_context
def train_cmd(ctx, data, out_dir, attention, D, boundary, encoder, input_feeding, preset,
              seed, epochs, lr, teacher_forcing, grad_clip):
    """Train a model and write its checkpoint and history."""
    run = resolve(
        ctx, preset=preset, DATA=data, OUT_DIR=out_dir, ATTENTION=attention, D=D, BOUNDARY=boundary,
        ENCODER=encoder, INPUT_FEEDING=input_feeding, SEED=seed, EPOCHS=epochs, LR=lr,
        TEACHER_FORCING=teacher_forcing, GRAD_CLIP=grad_clip,
    )
    dataset = load_dataset(_require_path(run.DATA, '--data (or DATA in the config file)'))
    model_cfg, train_cfg = run.model(), run.train()
    ckpt, history = train(model_cfg, train_cfg, dataset, max_workers=run.WORKERS)

    out_dir = Path(run.OUT_DIR)
    ckpt_path = save_checkpoint(ckpt, out_dir / CHECKPOINT_NAME)
    history.save(out_dir / HISTORY_NAME)
    click.echo(
        f"Trained {model_cfg.attention} (D={model_cfg.D}) for {train_cfg.epochs} epochs: "
        f"train loss {history.train_loss[-1]:.4f}, val accuracy {history.val_accuracy[-1]:.4f}"
    )
    click.echo(f"Checkpoint: {ckpt_path}")


def _eval_dataset(run: RunConfig):
    if run.EVAL_DATA:
        return load_dataset(run.EVAL_DATA)
    dataset = load_dataset(_require_path(run.DATA, '--data or --eval-data'))
    _, held_out = split_dataset(dataset, run.train())
    if not held_out:
        raise UsageError("the dataset has no validation split; pass --eval-data")
    return held_out


@cli.command(name='eval')
@click.option('--checkpoint', type=click.Path(dir_okay=False), help='Trained checkpoint.')
@click.option('--eval-data', type=click.Path(dir_okay=False), help='Held-out dataset.')
@click.option('--data', type=click.Path(dir_okay=False),
              help='Training dataset; its validation split is used when --eval-data is absent.')
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.pass_context
def eval_cmd(ctx, checkpoint, eval_data, data, out_dir):
    """Evaluate a checkpoint and write report.json and report.txt."""
    run = resolve(ctx, CHECKPOINT=checkpoint, EVAL_DATA=eval_data, DATA=data, OUT_DIR=out_dir)
    ckpt = load_checkpoint(_require_path(run.CHECKPOINT, '--checkpoint'))
    report = evaluate(ckpt.to_model(), _eval_dataset(run), max_workers=run.WORKERS)
    save_report(report, run.OUT_DIR)
    click.echo(format_report(report), nl=False)


@cli.command(name='export-attention')
@click.option('--checkpoint', type=click.Path(dir_okay=False),
              help='Trained checkpoint; without one a uniform kernel of half-width --d is exported.')
@click.option('--d', 'D', type=int, help='Kernel half-width when no checkpoint is given.')
@click.option('--t', 'export_t', type=int, help='Map size for Toeplitz models.')
@click.option('--format', 'export_format', type=click.Choice(EXPORT_FORMATS))
@click.option('--boundary', type=click.Choice(['zero_pad', 'renormalize']))
@click.option('--data', type=click.Path(dir_okay=False),
              help='Dataset holding the stack to attend over (global models need one).')
@click.option('--stack', 'export_stack', type=int, help='Index of that stack in --data.')
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.pass_context
def export_attention(ctx, checkpoint, D, export_t, export_format, boundary, data, export_stack, out_dir):
    """Write the T x T attention map (and the Toeplitz kernel)."""
    run = resolve(
        ctx, CHECKPOINT=checkpoint, D=D, EXPORT_T=export_t, EXPORT_FORMAT=export_format,
        BOUNDARY=boundary, DATA=data, EXPORT_STACK=export_stack, OUT_DIR=out_dir,
    )
    out_dir = Path(run.OUT_DIR)
    fmt = run.EXPORT_FORMAT
    if fmt not in EXPORT_FORMATS:
        raise ConfigError(f"EXPORT_FORMAT must be one of {EXPORT_FORMATS}, got {fmt!r}")

    if run.CHECKPOINT:
        model = load_checkpoint(run.CHECKPOINT).to_model()
        if model.config.attention == 'global':
            if not run.DATA:
                raise UsageError("global attention maps depend on the input: pass --data and --stack")
            dataset = load_dataset(run.DATA)
            if not 0 <= run.EXPORT_STACK < len(dataset):
                raise UsageError(f"--stack {run.EXPORT_STACK} out of range for {len(dataset)} stacks")
            A, kernel = attention_map(model, dataset[run.EXPORT_STACK]), None
        else:
            A, kernel = attention_map(model, T=run.EXPORT_T), model.kernel()
    else:
        kernel = ToeplitzKernel.uniform(run.D)
        A = build_attention_map(kernel, run.EXPORT_T, run.BOUNDARY)

    map_path = export_attention_map(A, out_dir / f'attention.{fmt}', fmt)
    click.echo(f"Attention map ({A.shape[0]}x{A.shape[1]}): {map_path}")
    if kernel is not None:
        kernel_path = export_kernel(kernel, out_dir / 'kernel.csv')
        click.echo(f"Kernel weights: {kernel_path}")


@cli.command()
@click.option('--seeds', 'gradcheck_seeds', type=int, help='Random problems per component.')
@click.option('--only', 'gradcheck_only', help='Check only components whose name contains this text.')
@click.option('--seed', type=int, help='First seed.')
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.pass_context
def gradcheck(ctx, gradcheck_seeds, gradcheck_only, seed, out_dir):
    """Compare backprop with central finite differences."""
    run = resolve(ctx, GRADCHECK_SEEDS=gradcheck_seeds, GRADCHECK_ONLY=gradcheck_only, SEED=seed, OUT_DIR=out_dir)
    results = run_gradcheck(run.GRADCHECK_SEEDS, run.GRADCHECK_ONLY, base_seed=run.SEED, max_workers=run.WORKERS)
    click.echo(format_results(results), nl=False)
    failed = sorted({r.component for r in results if not r.passed})
    if failed:
        raise GradCheckFailed(f"relative error above tolerance in {', '.join(failed)}")


@cli.command()
@click.option('--t', 'bench_t', help='Comma-separated sequence lengths.')
@click.option('--d', 'bench_d', help='Comma-separated kernel half-widths.')
@click.option('--e', 'bench_e', type=int, help='Encoding width.')
@click.option('--reps', 'bench_reps', type=int, help='Timed repetitions per size.')
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.pass_context
def bench(ctx, bench_t, bench_d, bench_e, bench_reps, out_dir):
    """Time banded convolution against the dense map multiply."""
    run = resolve(ctx, BENCH_T=bench_t, BENCH_D=bench_d, BENCH_E=bench_e, BENCH_REPS=bench_reps, OUT_DIR=out_dir)
    report = run_benchmarks(
        parse_int_list(run.BENCH_T), parse_int_list(run.BENCH_D), E=run.BENCH_E, reps=run.BENCH_REPS, seed=run.SEED,
    )
    path = Path(run.OUT_DIR) / BENCH_NAME
    path.write_text(json.dumps(report.to_dict(), indent=2) + '\n', encoding='utf-8')
    click.echo(report.format_table(), nl=False)


@cli.command()
@click.option('--data', type=click.Path(dir_okay=False), help='Training dataset.')
@click.option('--eval-data', type=click.Path(dir_okay=False), help='Held-out dataset.')
@click.option('--variants', 'sweep_variants', help=f"Comma-separated subset of: {', '.join(VARIANTS)}.")
@click.option('--seeds', 'sweep_seeds', type=int, help='Training seeds per variant.')
@click.option('--epochs', type=int)
@click.option('--out-dir', type=click.Path(file_okay=False), help='Run directory.')
@click.pass_context
def sweep(ctx, data, eval_data, sweep_variants, sweep_seeds, epochs, out_dir):
    """Train and compare several model variants."""
    run = resolve(
        ctx, DATA=data, EVAL_DATA=eval_data, SWEEP_VARIANTS=sweep_variants, SWEEP_SEEDS=sweep_seeds,
        EPOCHS=epochs, OUT_DIR=out_dir,
    )
    train_data = load_dataset(_require_path(run.DATA, '--data'))
    eval_data = load_dataset(run.EVAL_DATA) if run.EVAL_DATA else None
    variants = [name.strip() for name in run.SWEEP_VARIANTS.split(',') if name.strip()]
    report = run_sweep(
        run.model(), run.train(), train_data, eval_data,
        variants=variants, seeds=run.SWEEP_SEEDS, max_workers=run.WORKERS,
    )
    report.save(run.OUT_DIR)
    click.echo(report.format_tables(), nl=False)
