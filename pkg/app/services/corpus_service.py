"""
Corpus Service

Generates the desk corpus of textured primitives (one class per object) and
renders the labeled training views for the classifier from both renderers.
"""

import glob
import os
from typing import List, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigError
from app.models.models import LabeledView
from app.models.schemas import (
    BLACK,
    WHITE,
    ObjectSettings,
    PrimitiveKind,
    RendererKind,
    RigSettings,
    SceneConfig,
    TexturePattern,
)
from app.services.mesh_service import MeshService
from app.services.render_service import RenderService
from app.services.scene_service import SceneService
from app.services.target_render_service import TargetRenderService
from app.services.texture_service import TextureService
from app.utils.files import atomic_write_text
from app.utils.logging_config import get_logger

logger = get_logger("corpus_service")

KINDS = [
    PrimitiveKind.CUBE,
    PrimitiveKind.UV_SPHERE,
    PrimitiveKind.TORUS,
    PrimitiveKind.CYLINDER,
    PrimitiveKind.CONE,
]
PATTERNS = ["checker", "stripes", "noise"]
MESH_RESOLUTION = 16
SCENE_FILE = "scene.yaml"


class CorpusService:
    """
    Service for the procedural object corpus and its training views.
    """

    @staticmethod
    def object_recipe(index: int, rng: np.random.Generator, texture_size: int) -> Tuple[PrimitiveKind, TexturePattern]:
        """Kind and texture pattern of the index-th corpus object."""
        kind = KINDS[index % len(KINDS)]
        dark = np.round(rng.uniform(0.05, 0.45, size=3), 3)
        light = np.round(rng.uniform(0.55, 0.95, size=3), 3)
        pattern = TexturePattern(
            kind=PATTERNS[(index + index // len(KINDS)) % len(PATTERNS)],
            count=(4, 8)[(index // len(KINDS)) % 2],
            size=texture_size,
            colors=(tuple(float(c) for c in dark), tuple(float(c) for c in light)),
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        return kind, pattern

    @staticmethod
    def build_corpus(
        out_dir: str,
        n_objects: int,
        seed: int = 0,
        n_views: int = 60,
        resolution: int = 128,
        texture_size: int = 64,
        force: bool = False,
    ) -> List[Tuple[str, SceneConfig]]:
        """
        Write meshes, textures and scene configs of n_objects primitives.

        Object i gets label i; kinds cycle through the primitive list and textures vary
        in pattern, frequency and colors drawn from the seeded generator.

        Args:
            out_dir: Corpus directory, one sub-directory per object
            n_objects: Number of objects (>= 2)
            seed: Seed
            n_views: Cameras per rig
            resolution: Square render resolution
            texture_size: Texture side
            force: Overwrite existing files

        Returns:
            List[Tuple[str, SceneConfig]]: (scene config path, config) per object
        """
        if n_objects < 2:
            raise ConfigError(f"A corpus needs at least 2 objects, got {n_objects}")
        rng = np.random.default_rng(seed)
        corpus = []
        for index in range(n_objects):
            kind, pattern = CorpusService.object_recipe(index, rng, texture_size)
            object_id = f"{kind.value}-{index:02d}"
            object_dir = os.path.join(out_dir, object_id)
            os.makedirs(object_dir, exist_ok=True)

            mesh_resolution = 1 if kind == PrimitiveKind.CUBE else MESH_RESOLUTION
            mesh, texture = MeshService.generate_primitive(kind, mesh_resolution, pattern)
            MeshService.save_obj(mesh, os.path.join(object_dir, "mesh.obj"), force)
            TextureService.save_texture(texture, os.path.join(object_dir, "texture.png"), force)

            config = SceneConfig(
                object=ObjectSettings(id=object_id, label=index, mesh_path="mesh.obj", texture_path="texture.png"),
                rig=RigSettings(n_views=n_views, resolution=(resolution, resolution)),
            )
            config_path = os.path.join(object_dir, SCENE_FILE)
            atomic_write_text(config_path, SceneService.dump_scene_config(config), force)
            corpus.append((config_path, config))
            logger.info(f"Corpus object {object_id}: {mesh.n_faces} faces, {pattern.kind}-{pattern.count}")
        return corpus

    @staticmethod
    def find_scenes(corpus_dir: str) -> List[Tuple[str, SceneConfig]]:
        """Scene configs of a corpus directory, sorted by path."""
        paths = sorted(glob.glob(os.path.join(corpus_dir, "*", SCENE_FILE)))
        if not paths:
            raise ConfigError(f"No {SCENE_FILE} found under {corpus_dir}", path=corpus_dir)
        return [(path, SceneService.load_scene_config(path)) for path in paths]

    @staticmethod
    def build_training_views(scenes: Sequence[Tuple[str, SceneConfig]], threads: int = 1) -> List[LabeledView]:
        """
        Render the labeled views of every object from both renderers.

        Objects with an "auto" background alternate black (even views) and white
        (odd views) so the classifier sees both candidates.

        Args:
            scenes: (config path, config) pairs
            threads: Worker threads for rendering

        Returns:
            List[LabeledView]: Views tagged with their renderer, float32 images
        """
        views: List[LabeledView] = []
        for config_path, config in scenes:
            scene = SceneService.load_scene_object(config, config_path)
            if config.background == "auto":
                rigs = [SceneService.build_view_rig(config, BLACK), SceneService.build_view_rig(config, WHITE)]
            else:
                rigs = [SceneService.build_view_rig(config)]
            fragments = RenderService.rasterize_rig(scene, rigs[0], threads)

            for renderer in (RendererKind.SURROGATE, RendererKind.TARGET):
                per_background = [
                    TargetRenderService.render_rig(
                        scene, rig, renderer, config.target, fragments=fragments, threads=threads
                    )
                    for rig in rigs
                ]
                for view_id in range(len(fragments)):
                    image = per_background[view_id % len(rigs)][view_id]
                    views.append(
                        LabeledView(
                            image=image.astype(np.float32),
                            label=config.object.label,
                            view_id=view_id,
                            renderer=renderer,
                            object_id=config.object.id,
                        )
                    )
            logger.info(f"Rendered {2 * len(fragments)} training views of {config.object.id}")
        return views
