# src/main.py
"""Command-line entry point: `python -m src.main --config <file> <command>`."""
import sys
from contextlib import nullcontext
from typing import Optional, Tuple

import click
from threadpoolctl import threadpool_limits

# --- Core Application Imports ---
from .config import configure_logging, load_experiment_config, num_threads
from .controllers import pipeline_controller
from .exceptions import ConfigError, StageError


class CliSettings:
    def __init__(self, config: str, out: Optional[str], seed: Optional[int], force: bool):
        self.config = config
        self.out = out
        self.seed = seed
        self.force = force


def _run(settings: CliSettings, stage: str, action):
    """Loads the config, opens the run context and maps failures to a nonzero exit naming the stage."""
    try:
        overrides = {"output_dir": settings.out, "seed": settings.seed}
        config = load_experiment_config(settings.config, overrides)
        threads = num_threads()
    except ConfigError as e:
        click.echo(f"❌ config: {e}", err=True)
        sys.exit(2)

    limits = threadpool_limits(limits=threads) if threads else nullcontext()
    ctx = pipeline_controller.RunContext(config, force=settings.force)
    try:
        with limits:
            return action(ctx)
    except StageError as e:
        click.echo(f"❌ {e}", err=True)
        sys.exit(1)
    except Exception as e:
        click.echo(f"❌ stage '{stage}' failed: {e}", err=True)
        sys.exit(1)
    finally:
        ctx.close()


@click.group()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Experiment config (KEY=VALUE file).")
@click.option("--out", default=None, help="Output directory (overrides output_dir).")
@click.option("--seed", type=int, default=None, help="Base seed; repeat i uses seed + i.")
@click.option("--force", is_flag=True, help="Recompute cells even if their outputs exist.")
@click.option("--log-level", default=None, help="Overrides UNLEARN_LOG_LEVEL.")
@click.pass_context
def cli(click_ctx, config_path, out, seed, force, log_level):
    configure_logging(log_level)
    click_ctx.obj = CliSettings(config_path, out, seed, force)


@cli.command()
@click.pass_obj
def prepare(settings: CliSettings):
    """Parse, filter and split the dataset; write the attribute table."""
    outputs = _run(settings, "prepare", pipeline_controller.cmd_prepare)
    click.echo(f"✅ prepared {len(outputs)} files")


@cli.command()
@click.pass_obj
def train(settings: CliSettings):
    """Train the recommender (and the Retrain baseline) for every seed."""
    outputs = _run(settings, "train", pipeline_controller.cmd_train)
    click.echo(f"✅ train produced {len(outputs)} files")


@cli.command()
@click.option("--checkpoint", default=None, type=click.Path(), help="Unlearn this checkpoint instead of the grid.")
@click.pass_obj
def unlearn(settings: CliSettings, checkpoint: Optional[str]):
    """Run the configured unlearning methods on the trained user embeddings."""
    outputs = _run(settings, "unlearn", lambda ctx: pipeline_controller.cmd_unlearn(ctx, checkpoint))
    click.echo(f"✅ unlearn produced {len(outputs)} files")


@cli.command()
@click.option("--checkpoint", default=None, type=click.Path(), help="Attack this checkpoint instead of the grid.")
@click.pass_obj
def attack(settings: CliSettings, checkpoint: Optional[str]):
    """Attribute-inference attacks on every embedding variant."""
    outputs = _run(settings, "attack", lambda ctx: pipeline_controller.cmd_attack(ctx, checkpoint))
    click.echo(f"✅ attack produced {len(outputs)} files")


@cli.command(name="eval")
@click.option("--checkpoint", default=None, type=click.Path(), help="Evaluate this checkpoint instead of the grid.")
@click.pass_obj
def evaluate(settings: CliSettings, checkpoint: Optional[str]):
    """Top-K ranking metrics and embedding statistics for every embedding variant."""
    outputs = _run(settings, "eval", lambda ctx: pipeline_controller.cmd_eval(ctx, checkpoint))
    click.echo(f"✅ eval produced {len(outputs)} files")


@cli.command()
@click.pass_obj
def pipeline(settings: CliSettings):
    """The full grid: methods x attackers x repeats, plus averaged tables."""
    manifest = _run(settings, "pipeline", pipeline_controller.cmd_pipeline)
    click.echo(
        f"✅ pipeline done: {len(manifest.executed_stages)} cells run, "
        f"{len(manifest.skipped_stages)} skipped, {len(manifest.files)} files"
    )


@cli.command()
@click.option("--alpha", "alphas", multiple=True, type=float, help="Alpha grid point (repeatable).")
@click.pass_obj
def sweep(settings: CliSettings, alphas: Tuple[float, ...]):
    """Alpha sweep of the configured unlearning method."""
    outputs = _run(settings, "sweep", lambda ctx: pipeline_controller.cmd_sweep(ctx, list(alphas) or None))
    click.echo(f"✅ sweep wrote {', '.join(outputs)}")


if __name__ == "__main__":
    cli()
