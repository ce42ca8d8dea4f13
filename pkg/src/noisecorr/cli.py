"""Command-line interface.

Subcommands: inject, train, estimate, evaluate, run, sweep. Flags override
matching keys from the JSON config file. Failures exit nonzero with a
stage-tagged message on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .datasets import read_idx_images, read_idx_labels, write_idx_labels
from .estimator import EstimatorConfig, estimate_transition_matrix, collect_scores
from .harness import (
    ExperimentConfig,
    StageError,
    _load_datasets,
    load_config,
    run_experiment,
    sweep,
)
from .linalg import SingularMatrixError
from .network import load_checkpoint
from .noise import NoiseSpec, PairFlip, build_noise_matrix, corrupt_labels
from .training import accuracy


def _fail(stage: str, message) -> None:
    click.echo(f"[{stage}] {message}", err=True)
    sys.exit(1)


def _cli_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except StageError as err:
            click.echo(str(err), err=True)
            sys.exit(1)
        except (ValueError, OSError, SingularMatrixError) as err:
            _fail("cli", err)

    return wrapper


def _parse_pairs(text: str | None):
    if not text:
        return None
    pairs = []
    for chunk in text.split(","):
        bits = chunk.strip().split(":")
        if len(bits) not in (2, 3):
            raise ValueError(f"bad pair {chunk!r}; expected SRC:DST or SRC:DST:LEVEL")
        pairs.append([int(bits[0]), int(bits[1])] + ([float(bits[2])] if len(bits) == 3 else []))
    return pairs


def _parse_t_source(value: str | None):
    if value is None:
        return None, None
    if value.startswith("file="):
        return "file", value[len("file="):]
    if value in ("truth", "ground_truth"):
        return "ground_truth", None
    if value in ("estimate", "estimated"):
        return "estimated", None
    raise ValueError(f"bad --t-source {value!r}; expected truth|estimate|file=PATH")


def _common_options(command):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="JSON config file; flags override its keys."),
        click.option("--seed", type=int, default=None),
        click.option("--noise-kind", type=click.Choice(["identity", "symmetric", "pair_flip"]),
                     default=None),
        click.option("--noise-level", type=float, default=None),
        click.option("--pairs", default=None,
                     help="pair_flip pairs as SRC:DST[,SRC:DST:LEVEL,...]"),
        click.option("--loss", type=click.Choice(["plain", "backward", "forward"]), default=None),
        click.option("--t-source", default=None, help="truth | estimate | file=PATH"),
        click.option("--identity-mix", type=float, default=None),
        click.option("--alpha", type=float, default=None),
        click.option("--estimator-mode", type=click.Choice(["argmax", "percentile"]), default=None),
        click.option("--out", "out_dir", type=click.Path(), default=None),
        click.option("--warm-start", is_flag=True, default=None),
        click.option("--no-figures", "no_figures", is_flag=True, default=None),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _build_config(config_path, seed, noise_kind, noise_level, pairs, loss, t_source,
                  identity_mix, alpha, estimator_mode, out_dir, warm_start,
                  no_figures) -> ExperimentConfig:
    source, t_file = _parse_t_source(t_source)
    overrides = {
        "seed": seed,
        "noise.kind": noise_kind,
        "noise.level": noise_level,
        "noise.pairs": _parse_pairs(pairs),
        "loss": loss,
        "t_source": source,
        "t_file": t_file,
        "identity_mix": identity_mix,
        "estimator.alpha": alpha,
        "estimator.mode": estimator_mode,
        "out_dir": out_dir,
        "warm_start": warm_start,
        "figures": False if no_figures else None,
    }
    return load_config(config_path, overrides)


@click.group()
def main():
    """Label-noise robust training via backward/forward loss correction."""


@main.command()
@_common_options
@_cli_errors
def run(**kwargs):
    """Run the full two-stage pipeline and write a report."""
    config = _build_config(**kwargs)
    report = run_experiment(config)
    click.echo(f"test accuracy: {report.test_accuracy:.4f}")
    click.echo(f"report written to {config.out_dir}")


@main.command(name="sweep")
@_common_options
@click.option("--noise-levels", default="0.2,0.4,0.6", show_default=True,
              help="comma-separated noise levels")
@click.option("--losses", default="plain,forward", show_default=True,
              help="comma-separated loss modes")
@click.option("--seeds", default="0,1,2", show_default=True,
              help="comma-separated seeds")
@_cli_errors
def sweep_cmd(noise_levels, losses, seeds, **kwargs):
    """Sweep a noise-level x loss-mode grid; write sweep.csv (+ chart)."""
    config = _build_config(**kwargs)
    levels = [float(x) for x in noise_levels.split(",") if x.strip()]
    modes = [x.strip() for x in losses.split(",") if x.strip()]
    seed_list = [int(x) for x in seeds.split(",") if x.strip()]
    rows = sweep(config, levels, modes, seed_list, out_dir=config.out_dir)
    failed = sum(1 for r in rows if r.note)
    click.echo(f"sweep finished: {len(rows)} cells, {failed} failed; "
               f"CSV in {config.out_dir}")
    if failed:
        sys.exit(1)


@main.command()
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True,
              help="IDX label file to corrupt")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--noise-kind", type=click.Choice(["identity", "symmetric", "pair_flip"]),
              default="symmetric", show_default=True)
@click.option("--noise-level", type=float, default=0.2, show_default=True)
@click.option("--pairs", default=None)
@click.option("--classes", type=int, default=None,
              help="class count (default: max label + 1)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--t-out", "t_out", type=click.Path(), default=None,
              help="also write the transition matrix CSV here")
@_cli_errors
def inject(labels_path, out_path, noise_kind, noise_level, pairs, classes, seed, t_out):
    """Corrupt an IDX label file and write the noisy copy."""
    labels = read_idx_labels(labels_path).astype(np.int64)
    c = classes if classes is not None else int(labels.max()) + 1
    spec = NoiseSpec(noise_kind, noise_level,
                     tuple(PairFlip(*p) for p in (_parse_pairs(pairs) or ())))
    t = build_noise_matrix(spec, c)
    noisy = corrupt_labels(labels, t, seed)
    write_idx_labels(out_path, noisy.astype(np.uint8))
    if t_out:
        t.to_csv(t_out)
    flipped = float((noisy != labels).mean())
    click.echo(f"wrote {out_path} ({flipped:.1%} labels flipped)")


@main.command(name="train")
@_common_options
@click.option("--checkpoint-out", type=click.Path(), default=None,
              help="checkpoint path (default: OUT/model.json)")
@_cli_errors
def train_cmd(checkpoint_out, **kwargs):
    """Single training stage with the configured loss and T source."""
    config = _build_config(**kwargs)
    if config.t_source == "estimated":
        raise ValueError("the train subcommand needs a known T (truth or file=PATH); "
                         "use `run` for the estimate-then-retrain pipeline")
    report = run_experiment(config)
    out = Path(config.out_dir)
    if checkpoint_out is not None:
        (out / "model.json").rename(checkpoint_out)
    final = report.histories["final"][-1]
    click.echo(f"trained {config.train.epochs} epochs; "
               f"val loss {final.val_loss:.4f}, val accuracy {final.val_accuracy:.4f}")


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="config providing the feature source (train split)")
@click.option("--images", "images_path", type=click.Path(exists=True), default=None,
              help="IDX image file to use as the unlabeled sample X'")
@click.option("--alpha", type=float, default=0.97, show_default=True)
@click.option("--estimator-mode", type=click.Choice(["argmax", "percentile"]),
              default="percentile", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default="out", show_default=True)
@_cli_errors
def estimate(checkpoint, config_path, images_path, alpha, estimator_mode, out_dir):
    """Estimate the transition matrix from a trained model's scores."""
    net = load_checkpoint(checkpoint)
    if images_path is not None:
        images = read_idx_images(images_path)
        features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    elif config_path is not None:
        config = load_config(config_path, {})
        features = _load_datasets(config)[0].features
    else:
        raise ValueError("provide --images or --config as the feature source")
    est = estimate_transition_matrix(
        collect_scores(net, features),
        EstimatorConfig(mode=estimator_mode, alpha=alpha),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    est.save(out / "t_hat.csv", out / "t_hat.json")
    for warning in est.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"estimated T written to {out / 't_hat.csv'} "
               f"(condition {est.condition_estimate:.3g})")


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="config providing the clean test split")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_cli_errors
def evaluate(checkpoint, config_path, out_dir):
    """Clean-test accuracy of a checkpointed model."""
    net = load_checkpoint(checkpoint)
    config = load_config(config_path, {})
    _, test_ds = _load_datasets(config)
    acc = accuracy(net, test_ds.features, test_ds.clean_labels)
    click.echo(f"clean test accuracy: {acc:.4f}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval.json", "w", encoding="utf-8", newline="\n") as f:
            json.dump({"test_accuracy": acc, "checkpoint": str(checkpoint)}, f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
