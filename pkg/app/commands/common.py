"""
Helpers shared by the CLI commands: run context, scene loading and option parsing.
"""

import os
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import click

from app.models.models import ClassifierModel, FragmentBuffer, SceneObject, ViewRig
from app.models.schemas import SceneConfig
from app.services.classifier_service import ClassifierService
from app.services.render_service import RenderService
from app.services.scene_service import SceneService
from app.utils.logging_config import get_logger

logger = get_logger("commands")


@dataclass
class CommandContext:
    """Options of the root group, available to every command."""
    threads: int = 1
    started: float = field(default_factory=time.perf_counter)

    def elapsed(self) -> float:
        return time.perf_counter() - self.started


@dataclass
class SceneBundle:
    """
    A loaded scene ready to render: config, object, rig with a resolved
    background and the shaded surrogate fragments of every rig entry.
    """
    config_path: str
    config: SceneConfig
    scene: SceneObject
    rig: ViewRig
    fragments: Sequence[FragmentBuffer]

    @property
    def input_files(self) -> List[str]:
        base = os.path.dirname(os.path.abspath(self.config_path))
        return [
            self.config_path,
            os.path.join(base, self.config.object.mesh_path),
            os.path.join(base, self.config.object.texture_path),
        ]


def load_bundle(config_path: str, classifier: Optional[ClassifierModel], threads: int = 1) -> SceneBundle:
    """
    Load a scene and resolve an "auto" background with the classifier.

    Args:
        config_path: Scene YAML
        classifier: Classifier used to pick the background, required when it is "auto"
        threads: Worker threads

    Returns:
        SceneBundle: Ready-to-render scene
    """
    config = SceneService.load_scene_config(config_path)
    scene = SceneService.load_scene_object(config, config_path)
    rig = SceneService.build_view_rig(config)
    fragments = RenderService.rasterize_rig(scene, rig, threads)
    if config.background == "auto" and classifier is not None:
        background = SceneService.choose_background(scene, rig, classifier, fragments=fragments)
        rig = rig.with_background(background)
    return SceneBundle(config_path=config_path, config=config, scene=scene, rig=rig, fragments=fragments)


def load_classifier(path: str) -> ClassifierModel:
    return ClassifierService.load_weights(path)


def parse_floats(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    """click callback for comma separated floats."""
    if value is None:
        return None
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma separated numbers, got {value!r}")


def parse_taus(ctx, param, value: Optional[str]) -> Optional[List[Optional[float]]]:
    """click callback for comma separated thresholds where ``none`` disables the mask."""
    if value is None:
        return None
    taus: List[Optional[float]] = []
    for item in value.split(","):
        item = item.strip().lower()
        if not item:
            continue
        if item == "none":
            taus.append(None)
            continue
        try:
            taus.append(float(item))
        except ValueError:
            raise click.BadParameter(f"expected numbers or 'none', got {item!r}")
    return taus
