"""
Corpus Commands

gen-corpus: write the procedural object corpus.
train: render the corpus from both renderers and train the classifier.
"""

import os

import click

from app.commands.common import CommandContext
from app.exceptions import ConfigError
from app.middlewares.error_handler import handle_errors
from app.models.schemas import ClassifierSpec, TrainingConfig
from app.services.classifier_service import ClassifierService
from app.services.corpus_service import CorpusService
from app.services.manifest_service import ManifestService
from app.utils.logging_config import get_logger

logger = get_logger("commands.corpus")


@click.command("gen-corpus")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Corpus directory")
@click.option("--objects", "n_objects", default=10, show_default=True, type=click.IntRange(min=2))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--views", "n_views", default=60, show_default=True, type=click.IntRange(min=1))
@click.option("--resolution", default=128, show_default=True, type=click.IntRange(min=16))
@click.option("--texture-size", default=64, show_default=True, type=click.IntRange(min=4))
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def gen_corpus(ctx: CommandContext, out_dir, n_objects, seed, n_views, resolution, texture_size, force):
    """Generate meshes, textures and scene configs of primitive objects."""
    corpus = CorpusService.build_corpus(out_dir, n_objects, seed, n_views, resolution, texture_size, force)
    outputs = []
    for config_path, config in corpus:
        base = os.path.dirname(config_path)
        outputs += [config_path, os.path.join(base, config.object.mesh_path), os.path.join(base, config.object.texture_path)]
    ManifestService.write_manifest(
        ManifestService.manifest_path(out_dir, "gen-corpus", directory=True),
        "gen-corpus",
        {
            "objects": n_objects,
            "views": n_views,
            "resolution": resolution,
            "texture_size": texture_size,
        },
        inputs=[],
        outputs=outputs,
        seed=seed,
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    click.echo(f"{len(corpus)} objects written to {out_dir}")


@click.command("train")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Weight file")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--preset", default="standard", show_default=True, type=click.Choice(["standard", "compact"]))
@click.option("--epochs", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--batch-size", default=32, show_default=True, type=click.IntRange(min=1))
@click.option("--lr", "learning_rate", default=0.05, show_default=True, type=float)
@click.option("--momentum", default=0.9, show_default=True, type=float)
@click.option("--max-steps", default=None, type=click.IntRange(min=1))
@click.option("--classifier-id", default=None, help="Name recorded in reports")
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def train(ctx: CommandContext, corpus_dir, out_path, seed, preset, epochs, batch_size, learning_rate,
          momentum, max_steps, classifier_id, force):
    """Train the classifier on surrogate and target views of the corpus."""
    scenes = CorpusService.find_scenes(corpus_dir)
    resolutions = {config.rig.resolution for _, config in scenes}
    if len(resolutions) != 1 or len(set(next(iter(resolutions)))) != 1:
        raise ConfigError(f"Corpus scenes must share one square resolution, found {sorted(resolutions)}")
    resolution = next(iter(resolutions))[0]
    n_classes = max(config.object.label for _, config in scenes) + 1

    config = TrainingConfig(
        learning_rate=learning_rate,
        momentum=momentum,
        batch_size=batch_size,
        epochs=epochs,
        max_steps=max_steps,
        seed=seed,
    )
    spec = ClassifierSpec.preset(preset, n_classes, resolution)
    views = CorpusService.build_training_views(scenes, ctx.threads)
    model, accuracy = ClassifierService.train_classifier(views, config, spec, classifier_id)
    ClassifierService.save_weights(model, out_path, force)

    inputs = []
    for config_path, scene_config in scenes:
        base = os.path.dirname(config_path)
        inputs += [config_path, os.path.join(base, scene_config.object.mesh_path),
                   os.path.join(base, scene_config.object.texture_path)]
    ManifestService.write_manifest(
        ManifestService.manifest_path(out_path, "train", directory=False),
        "train",
        {
            "training": config.model_dump(mode="json"),
            "spec": spec.model_dump(mode="json"),
            "preset": preset,
            "classifier_id": model.classifier_id,
            "train_accuracy": accuracy,
        },
        inputs=inputs,
        outputs=[out_path],
        seed=seed,
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    click.echo(f"{model.classifier_id} trained_accuracy={accuracy!r} -> {out_path}")
