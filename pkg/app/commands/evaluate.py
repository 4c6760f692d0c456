"""
Evaluation Commands

evaluate: accuracy of a texture over the rig under one renderer.
report: tables and scatter data from a directory of attack reports.
"""

import click

from app.commands.common import CommandContext, load_bundle, load_classifier
from app.middlewares.error_handler import handle_errors
from app.models.models import Texture
from app.models.schemas import EvaluationReport, RendererKind
from app.services.manifest_service import ManifestService
from app.services.metrics_service import MetricsService
from app.services.report_service import ReportService
from app.services.texture_service import TextureService
from app.utils.files import atomic_write_text, file_digest
from app.utils.logging_config import get_logger

logger = get_logger("commands.evaluate")


@click.command("evaluate")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--texture", "texture_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--renderer", required=True, type=click.Choice([k.value for k in RendererKind]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Report JSON")
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def evaluate(ctx: CommandContext, scene_path, weights_path, texture_path, renderer, out_path, force):
    """Classify every rig view of the object wearing the given texture."""
    renderer = RendererKind(renderer)
    classifier = load_classifier(weights_path)
    bundle = load_bundle(scene_path, classifier, ctx.threads)
    texture: Texture = TextureService.load_texture(texture_path)
    predictions = MetricsService.predict_over_rig(
        bundle.scene, bundle.rig, texture, classifier, renderer, bundle.config.target,
        bundle.fragments, ctx.threads,
    )
    report = EvaluationReport(
        object_id=bundle.scene.object_id,
        label=bundle.scene.label,
        renderer=renderer,
        classifier_id=classifier.classifier_id,
        texture_digest=file_digest(texture_path),
        accuracy=MetricsService.accuracy(predictions, bundle.scene.label),
        predictions=predictions,
    )
    logger.info(
        f"{bundle.scene.object_id} on {renderer.value}: accuracy {report.accuracy:.3f} over {len(predictions)} views"
    )
    atomic_write_text(out_path, report.model_dump_json(indent=2) + "\n", force)
    ManifestService.write_manifest(
        ManifestService.manifest_path(out_path, "evaluate", directory=False),
        "evaluate",
        {"scene": bundle.config.model_dump(mode="json"), "renderer": renderer.value,
         "background": list(bundle.rig.background)},
        inputs=bundle.input_files + [weights_path, texture_path],
        outputs=[out_path],
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    click.echo(f"accuracy={report.accuracy!r}")


@click.command("report")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def report(ctx: CommandContext, in_dir, out_dir, force):
    """Write the accuracy-drop table, the long table and the scatter data from attack reports."""
    reports = ReportService.load_reports(in_dir)
    paths = ReportService.emit_report(reports, out_dir, force)
    ManifestService.write_manifest(
        ManifestService.manifest_path(out_dir, "report", directory=True),
        "report",
        {"reports": len(reports)},
        inputs=[],
        outputs=list(paths.values()),
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    for path in paths.values():
        click.echo(path)
