"""
advobj - Main Application Module

This module builds the command-line application, configures logging and
registers the command groups.

The CLI drives the full pipeline:
- Corpus generation and classifier training
- Saliency masks from the target renderer
- EOT-PGD texture attacks through the surrogate renderer
- Transfer evaluation and report tables

Exit codes: 0 success, 2 usage error, 3 config error, 4 runtime failure.
"""

import logging

import click

from app import __version__
from app.commands import attack, corpus, evaluate
from app.commands.common import CommandContext
from app.utils.logging_config import get_logger, setup_logging

logger = get_logger("main")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--threads", default=1, show_default=True, type=click.IntRange(min=1),
              help="Worker threads for per-view work (1 is bitwise deterministic)")
@click.option("--verbose", is_flag=True, help="Debug logging")
@click.option("--log-dir", default=None, type=click.Path(file_okay=False), help="Also write rotating log files here")
@click.version_option(__version__, prog_name="advobj")
@click.pass_context
def cli(ctx: click.Context, threads: int, verbose: bool, log_dir):
    """Adversarial textures for 3D objects: attack a differentiable renderer, measure transfer."""
    setup_logging(logging.DEBUG if verbose else logging.INFO, log_dir)
    ctx.obj = CommandContext(threads=threads)
    logger.debug(f"advobj {__version__}, threads={threads}")


# Registrar los comandos
cli.add_command(corpus.gen_corpus)
cli.add_command(corpus.train)
cli.add_command(attack.saliency)
cli.add_command(attack.attack)
cli.add_command(attack.sweep)
cli.add_command(evaluate.evaluate)
cli.add_command(evaluate.report)


def main() -> None:
    cli(prog_name="advobj")


if __name__ == "__main__":
    main()
