"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(training divergence or a failed gradient check). The output root can be
overridden with the VQADISTILL_OUTPUT_ROOT environment variable.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import click

from . import harness
from .errors import (CheckpointError, ConfigError, DivergenceError,
                     NumericalFailure)

logger = logging.getLogger(__name__)


def _parse_weights(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise click.UsageError(f"--weights needs w1,w2,w3, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise click.UsageError(f"bad --weights value: {exc}") from exc


def _overrides(seed, steps, weights, output):
    over = {"distill": {}}
    if seed is not None:
        over["distill"]["seed"] = seed
    if steps is not None:
        over["distill"]["steps"] = steps
    if weights is not None:
        over["distill"]["loss_weights"] = list(_parse_weights(weights))
    if output is not None:
        over["output_dir"] = output
    if not over["distill"]:
        over.pop("distill")
    return over


_common = [
    click.option("--config", "config_path", type=click.Path(path_type=Path),
                 default=None, help="YAML config; keys overlay the defaults."),
    click.option("--seed", type=int, default=None, help="Run seed override."),
    click.option("--steps", type=int, default=None, help="Training steps override."),
    click.option("--weights", type=str, default=None,
                 help="Loss weights w1,w2,w3 override."),
    click.option("--output", type=str, default=None, help="Output directory."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def cli():
    """Teacher-student distillation for compressed-video quality assessment."""


@cli.command("generate-data")
@common_options
@click.option("--cache", is_flag=True, help="Also write per-clip .npy caches.")
def generate_data_cmd(config_path, seed, steps, weights, output, cache):
    """Write the synthetic dataset manifest."""
    config = harness.load_config(config_path,
                                 _overrides(seed, steps, weights, output))
    path = harness.cmd_generate_data(config, seed=seed, cache=cache)
    click.echo(str(path))


@cli.command("train-teacher")
@common_options
@click.option("--eval-every", type=int, default=None)
@click.option("--resume", type=click.Path(path_type=Path), default=None)
def train_teacher_cmd(config_path, seed, steps, weights, output,
                      eval_every, resume):
    """Train the teacher on the synthetic task (supervised MSE)."""
    over = _overrides(seed, steps, weights, output)
    if eval_every is not None:
        over["eval_every"] = eval_every
    config = harness.load_config(config_path, over)
    path = harness.cmd_train_teacher(config, resume=resume)
    click.echo(str(path))


@cli.command("train-baseline")
@common_options
@click.option("--mode", type=click.Choice(harness.MODES), default="homologous",
              help="Picks the default student family when no config is given.")
@click.option("--eval-every", type=int, default=None)
@click.option("--resume", type=click.Path(path_type=Path), default=None)
def train_baseline_cmd(config_path, seed, steps, weights, output, mode,
                       eval_every, resume):
    """Train a student without distillation (the comparison baseline)."""
    over = _overrides(seed, steps, weights, output)
    if eval_every is not None:
        over["eval_every"] = eval_every
    config = harness.load_config(config_path, over, mode=mode)
    path = harness.cmd_train_baseline(config, resume=resume)
    click.echo(str(path))


@cli.command("distill")
@common_options
@click.option("--teacher-checkpoint", type=click.Path(path_type=Path),
              required=True)
@click.option("--mode", type=click.Choice(harness.MODES), default="homologous")
@click.option("--baseline", "baseline_report",
              type=click.Path(path_type=Path), default=None,
              help="Baseline report.json for delta columns.")
@click.option("--eval-every", type=int, default=None)
def distill_cmd(config_path, seed, steps, weights, output, teacher_checkpoint,
                mode, baseline_report, eval_every):
    """Distill the teacher into a student (homologous or heterogeneous)."""
    over = _overrides(seed, steps, weights, output)
    if eval_every is not None:
        over["eval_every"] = eval_every
    config = harness.load_config(config_path, over, mode=mode)
    path = harness.cmd_distill(config, teacher_checkpoint, mode,
                               baseline_report=baseline_report)
    click.echo(str(path))


@cli.command("eval")
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True)
@click.option("--which", type=str, default=None,
              help="Model key inside the checkpoint (teacher/student).")
@click.option("--split", type=click.Choice(["train", "test"]), default="test")
@click.option("--json", "json_path", type=click.Path(path_type=Path),
              default=None, help="Also write the structured record here.")
def eval_cmd(checkpoint, which, split, json_path):
    """Evaluate a checkpointed model: PLCC/SRCC against the MOS labels."""
    report = harness.cmd_eval(checkpoint, which=which, split=split)
    click.echo(f"{report.model_name}: params={report.params} "
               f"plcc={report.plcc} srcc={report.srcc}")
    if report.plcc_error or report.srcc_error:
        click.echo(f"  errors: plcc={report.plcc_error} srcc={report.srcc_error}")
    if json_path is not None:
        Path(json_path).write_text(
            json.dumps(asdict(report), sort_keys=True, indent=2) + "\n")


@cli.command("grad-check")
@click.option("--seeds", type=str, default="0,1,2",
              help="Comma-separated seeds.")
@click.option("--eps", type=float, default=harness.DEFAULT_EPS)
@click.option("--tolerance", type=float, default=harness.DEFAULT_TOLERANCE)
@click.option("--json", "json_path", type=click.Path(path_type=Path),
              default=None)
def grad_check_cmd(seeds, eps, tolerance, json_path):
    """Check analytic loss gradients against central finite differences."""
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"bad --seeds value: {exc}") from exc
    if not seed_list:
        raise click.UsageError("--seeds must name at least one seed")
    summary = harness.cmd_grad_check(seeds=seed_list, eps=eps,
                                     tolerance=tolerance)
    for run in summary.runs:
        click.echo(f"seed {run['seed']}: max_rel_error={run['max_rel_error']:.3e}")
        for group, err in run["by_group"].items():
            status = "frozen" if err is None else f"{err:.3e}"
            click.echo(f"  {group}: {status}")
    verdict = "PASS" if summary.passed else "FAIL"
    click.echo(f"grad-check {verdict}: max_rel_error={summary.max_rel_error:.3e} "
               f"tolerance={summary.tolerance:.1e}")
    if json_path is not None:
        Path(json_path).write_text(
            json.dumps(summary.as_dict(), sort_keys=True, indent=2) + "\n")
    if not summary.passed:
        raise NumericalFailure(
            f"gradient check failed: {summary.max_rel_error:.3e} > "
            f"{summary.tolerance:.1e}")


@cli.command("compare")
@click.argument("reports", nargs=-1, type=click.Path(path_type=Path))
@click.option("--baseline", "baselines", multiple=True,
              help="MODEL=BASELINE pair; repeatable.")
@click.option("--json", "json_path", type=click.Path(path_type=Path),
              default=None, help="Write structured records here.")
def compare_cmd(reports, baselines, json_path):
    """Side-by-side table of saved reports, with optional baseline deltas."""
    if not reports:
        raise click.UsageError("compare needs at least one report file")
    mapping = {}
    for pair in baselines:
        if "=" not in pair:
            raise click.UsageError(f"--baseline needs MODEL=BASELINE, got {pair!r}")
        model, base = pair.split("=", 1)
        mapping[model] = base
    table = harness.cmd_compare(list(reports), mapping or None)
    click.echo(table.text)
    if json_path is not None:
        Path(json_path).write_text(
            json.dumps(table.records, sort_keys=True, indent=2) + "\n")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except DivergenceError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except NumericalFailure as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except (ConfigError, CheckpointError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
