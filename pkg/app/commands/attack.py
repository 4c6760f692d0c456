"""
Attack Commands

saliency: build and export the texel mask of a scene.
attack: one EOT-PGD run with its surrogate and transfer reports.
sweep: the epsilon x tau grid over one or more classifiers, then the tables.
"""

import os
from typing import List, Optional

import click

from app.commands.common import CommandContext, SceneBundle, load_bundle, load_classifier, parse_floats, parse_taus
from app.middlewares.error_handler import handle_errors
from app.models.models import ClassifierModel
from app.models.schemas import AttackConfig
from app.services.attack_service import AttackService
from app.services.manifest_service import ManifestService
from app.services.metrics_service import MetricsService
from app.services.report_service import ReportService
from app.services.saliency_service import SaliencyService
from app.services.texture_service import TextureService
from app.utils.logging_config import get_logger

logger = get_logger("commands.attack")


def attack_and_save(
    bundle: SceneBundle,
    classifier: ClassifierModel,
    config: AttackConfig,
    out_dir: str,
    mask=None,
    transfer: bool = True,
    threads: int = 1,
    force: bool = False,
) -> List[str]:
    """
    Run one attack and write the adversarial texture and its report(s).

    Returns:
        List[str]: Written files
    """
    os.makedirs(out_dir, exist_ok=True)
    adversarial, report = AttackService.run_attack(
        bundle.scene, bundle.rig, classifier, config, mask, bundle.fragments, threads
    )
    texture_path = os.path.join(
        out_dir,
        ReportService.texture_filename(
            bundle.scene.object_id, classifier.classifier_id, config.epsilon, config.saliency_threshold
        ),
    )
    TextureService.save_texture(adversarial, texture_path, force)
    reports = [report]
    if transfer:
        reports.append(
            MetricsService.evaluate_transfer(
                bundle.scene, bundle.rig, classifier, adversarial, report,
                bundle.config.target, bundle.fragments, threads,
            )
        )
    written = [texture_path]
    for item in reports:
        path = os.path.join(out_dir, ReportService.report_filename(item))
        ReportService.save_report(item, path, force)
        written.append(path)
    return written


@click.command("saliency")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", required=True, type=float, help="Threshold in (0, 1)")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def saliency(ctx: CommandContext, scene_path, weights_path, tau, out_dir, force):
    """Export the target-renderer saliency of a scene as texture-space images."""
    classifier = load_classifier(weights_path)
    bundle = load_bundle(scene_path, classifier, ctx.threads)
    saliency_map = SaliencyService.build_saliency_mask(
        bundle.scene, bundle.rig, classifier, tau, bundle.config.target, bundle.fragments, ctx.threads
    )
    prefix = f"{bundle.scene.object_id}_{classifier.classifier_id}_tau{tau}"
    paths = SaliencyService.export_saliency(saliency_map, out_dir, prefix, force)
    ManifestService.write_manifest(
        os.path.join(out_dir, f"{prefix}.manifest.json"),
        "saliency",
        {"scene": bundle.config.model_dump(mode="json"), "tau": tau, "classifier_id": classifier.classifier_id,
         "mask_fraction": saliency_map.mask_fraction},
        inputs=bundle.input_files + [weights_path],
        outputs=list(paths.values()),
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    click.echo(f"mask_fraction={saliency_map.mask_fraction!r} -> {paths['mask']}")


@click.command("attack")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", required=True, type=float)
@click.option("--alpha", default=0.01, show_default=True, type=float)
@click.option("--steps", "n_steps", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--tau", default=None, type=float, help="Saliency threshold, no mask when omitted")
@click.option("--random-start", is_flag=True)
@click.option("--restarts", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--view-batch", default=None, type=click.IntRange(min=1), help="Views per step, all when omitted")
@click.option("--quantize/--no-quantize", default=True, show_default=True)
@click.option("--transfer/--no-transfer", default=True, show_default=True, help="Also evaluate on the target renderer")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def attack(ctx: CommandContext, scene_path, weights_path, epsilon, alpha, n_steps, tau, random_start,
           restarts, view_batch, quantize, transfer, seed, out_dir, force):
    """Craft an adversarial texture with EOT-PGD through the surrogate renderer."""
    config = AttackConfig(
        epsilon=epsilon,
        alpha=alpha,
        n_steps=n_steps,
        view_batch=view_batch,
        saliency_threshold=tau,
        seed=seed,
        random_start=random_start,
        restarts=restarts,
        quantize=quantize,
    )
    classifier = load_classifier(weights_path)
    bundle = load_bundle(scene_path, classifier, ctx.threads)
    mask = None
    if tau is not None:
        mask = SaliencyService.build_saliency_mask(
            bundle.scene, bundle.rig, classifier, tau, bundle.config.target, bundle.fragments, ctx.threads
        ).mask

    written = attack_and_save(bundle, classifier, config, out_dir, mask, transfer, ctx.threads, force)
    ManifestService.write_manifest(
        os.path.join(out_dir, f"attack_{bundle.scene.object_id}_{classifier.classifier_id}"
                              f"_eps{epsilon}_tau{tau if tau is not None else 'none'}.manifest.json"),
        "attack",
        {"scene": bundle.config.model_dump(mode="json"), "attack": config.model_dump(mode="json"),
         "transfer": transfer, "background": list(bundle.rig.background)},
        inputs=bundle.input_files + [weights_path],
        outputs=written,
        seed=seed,
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    for path in written:
        click.echo(path)


@click.command("sweep")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--weights", "weights_paths", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False), help="Repeat to compare classifiers")
@click.option("--epsilons", default="0.05,0.1,0.5", show_default=True, callback=parse_floats)
@click.option("--taus", default="none,0.05,0.2", show_default=True, callback=parse_taus)
@click.option("--alpha", default=0.01, show_default=True, type=float)
@click.option("--steps", "n_steps", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--random-start", is_flag=True)
@click.option("--view-batch", default=None, type=click.IntRange(min=1))
@click.option("--transfer/--no-transfer", default=True, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Overwrite existing outputs")
@click.pass_obj
@handle_errors
def sweep(ctx: CommandContext, scene_path, weights_paths, epsilons, taus, alpha, n_steps, random_start,
          view_batch, transfer, seed, out_dir, force):
    """Run the epsilon x tau attack grid and tabulate the reports."""
    written: List[str] = []
    for weights_path in weights_paths:
        classifier = load_classifier(weights_path)
        bundle = load_bundle(scene_path, classifier, ctx.threads)
        for tau in taus:
            mask = None
            if tau is not None:
                mask = SaliencyService.build_saliency_mask(
                    bundle.scene, bundle.rig, classifier, tau, bundle.config.target, bundle.fragments, ctx.threads
                ).mask
            for epsilon in epsilons:
                config = AttackConfig(
                    epsilon=epsilon,
                    alpha=min(alpha, epsilon),
                    n_steps=n_steps,
                    view_batch=view_batch,
                    saliency_threshold=tau,
                    seed=seed,
                    random_start=random_start,
                )
                written += attack_and_save(bundle, classifier, config, out_dir, mask, transfer, ctx.threads, force)

    reports = [ReportService.load_report(p) for p in written if p.endswith(".json")]
    tables = ReportService.emit_report(reports, out_dir, force)
    written += list(tables.values())
    ManifestService.write_manifest(
        ManifestService.manifest_path(out_dir, "sweep", directory=True),
        "sweep",
        {"epsilons": epsilons, "taus": taus, "alpha": alpha, "steps": n_steps, "random_start": random_start,
         "view_batch": view_batch, "transfer": transfer},
        inputs=[scene_path, *weights_paths],
        outputs=written,
        seed=seed,
        wall_clock_seconds=ctx.elapsed(),
        force=force,
    )
    click.echo(f"{len(reports)} reports, tables in {out_dir}")
