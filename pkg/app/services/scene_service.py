"""
Scene Service

Cameras, lights, backgrounds and the multi-view rig that defines the expectation
over camera and light placements. Scene configuration documents are YAML files
validated by the SceneConfig schema.
"""

import math
import os
from typing import Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import ValidationError

from app.exceptions import ConfigError, GimbalLock
from app.models.models import ClassifierModel, FragmentBuffer, SceneObject, ViewRig
from app.models.schemas import (
    BLACK,
    RGB,
    WHITE,
    Camera,
    DirectionalLight,
    RendererKind,
    SceneConfig,
    TargetSettings,
)
from app.services.mesh_service import MeshService
from app.services.texture_service import TextureService
from app.utils.logging_config import get_logger

logger = get_logger("scene_service")

NEAR_PLANE = 0.01
FAR_PLANE = 100.0
UP = np.array([0.0, 1.0, 0.0])


def _orbit_direction(azimuth: float, elevation: float) -> np.ndarray:
    a, e = math.radians(azimuth), math.radians(elevation)
    return np.array([math.cos(e) * math.sin(a), math.sin(e), math.cos(e) * math.cos(a)])


class SceneService:
    """
    Service for cameras, lights and view rigs.
    """

    @staticmethod
    def camera_from_orbit(
        distance: float,
        azimuth: float,
        elevation: float,
        fov_y: float = 45.0,
        resolution: Tuple[int, int] = (128, 128),
    ) -> Tuple[Camera, np.ndarray, np.ndarray]:
        """
        Place a camera on the orbit sphere looking at the origin with +Y up.

        position = distance * (cos e sin a, sin e, cos e cos a)

        Args:
            distance: Distance from the origin
            azimuth: Degrees, normalized into [0, 360)
            elevation: Degrees
            fov_y: Vertical field of view in degrees
            resolution: (width, height)

        Returns:
            Tuple[Camera, np.ndarray, np.ndarray]: Camera, 4x4 view matrix, 4x4 projection matrix

        Raises:
            GimbalLock: If |elevation| >= 90
        """
        if abs(elevation) >= 90.0:
            raise GimbalLock(f"Elevation {elevation} is at or beyond the pole", elevation=elevation)
        camera = Camera(
            distance=distance,
            azimuth=azimuth % 360.0,
            elevation=elevation,
            fov_y=fov_y,
            width=resolution[0],
            height=resolution[1],
        )
        view, projection = SceneService.camera_matrices(camera)
        return camera, view, projection

    @staticmethod
    def camera_position(camera: Camera) -> np.ndarray:
        return camera.distance * _orbit_direction(camera.azimuth, camera.elevation)

    @staticmethod
    def camera_matrices(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
        """
        Right-handed look-at view matrix and perspective projection.

        Args:
            camera: The camera

        Returns:
            Tuple[np.ndarray, np.ndarray]: (view, projection), both 4x4
        """
        position = SceneService.camera_position(camera)
        forward = -position / np.linalg.norm(position)
        right = np.cross(forward, UP)
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)

        view = np.eye(4)
        view[0, :3], view[1, :3], view[2, :3] = right, up, -forward
        view[:3, 3] = -view[:3, :3] @ position

        f = 1.0 / math.tan(math.radians(camera.fov_y) / 2.0)
        aspect = camera.width / camera.height
        projection = np.zeros((4, 4))
        projection[0, 0] = f / aspect
        projection[1, 1] = f
        projection[2, 2] = (FAR_PLANE + NEAR_PLANE) / (NEAR_PLANE - FAR_PLANE)
        projection[2, 3] = 2.0 * FAR_PLANE * NEAR_PLANE / (NEAR_PLANE - FAR_PLANE)
        projection[3, 2] = -1.0
        return view, projection

    @staticmethod
    def light_direction(light: DirectionalLight) -> np.ndarray:
        """Unit vector from the surface toward the light."""
        return _orbit_direction(light.azimuth, light.elevation)

    @staticmethod
    def build_view_rig(config: SceneConfig, background: Optional[RGB] = None) -> ViewRig:
        """
        Build the rig: azimuths evenly spaced over [0, 360), elevations cycling
        through an even grid over [elevation_min, elevation_max].

        Args:
            config: Scene configuration
            background: Overrides the configured background (needed when it is "auto")

        Returns:
            ViewRig: The rig
        """
        rig = config.rig
        if rig.elevation_levels > 1 and rig.elevation_max > rig.elevation_min:
            grid = np.linspace(rig.elevation_min, rig.elevation_max, rig.elevation_levels)
        else:
            grid = np.array([rig.elevation_min])

        cameras = []
        for i in range(rig.n_views):
            camera, _, _ = SceneService.camera_from_orbit(
                rig.distance,
                360.0 * i / rig.n_views,
                float(grid[i % len(grid)]),
                rig.fov_y,
                rig.resolution,
            )
            cameras.append(camera)

        if background is None:
            if config.background == "auto":
                logger.debug("Background is 'auto' and unresolved, using black")
                background = BLACK
            else:
                background = config.background

        lights = tuple(config.rig_lights())
        logger.debug(
            f"Rig for {config.object.id}: {len(cameras)} cameras x {len(lights)} light(s), "
            f"elevations {grid.round(2).tolist()}"
        )
        return ViewRig(
            views=tuple(cameras),
            light=config.light,
            background=tuple(float(c) for c in background),
            lights=lights,
        )

    @staticmethod
    def choose_background(
        scene: SceneObject,
        rig: ViewRig,
        classifier: ClassifierModel,
        renderer: RendererKind = RendererKind.SURROGATE,
        target: Optional[TargetSettings] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
    ) -> RGB:
        """
        Pick white or black, whichever gives the higher clean accuracy over the rig.

        Ties go to black.

        Args:
            scene: Object to render
            rig: View rig (its background is ignored)
            classifier: Trained classifier
            renderer: Renderer used for the comparison
            target: Target settings when renderer is TARGET
            fragments: Shaded fragments of the rig to reuse

        Returns:
            RGB: WHITE or BLACK
        """
        from app.services.metrics_service import MetricsService

        accuracy_white = MetricsService.accuracy_over_rig(
            scene, rig.with_background(WHITE), scene.texture, classifier, renderer, target, fragments
        )
        accuracy_black = MetricsService.accuracy_over_rig(
            scene, rig.with_background(BLACK), scene.texture, classifier, renderer, target, fragments
        )
        choice = WHITE if accuracy_white > accuracy_black else BLACK
        logger.info(
            f"Background for {scene.object_id}: white={accuracy_white:.3f}, "
            f"black={accuracy_black:.3f} -> {'white' if choice == WHITE else 'black'}"
        )
        return choice

    @staticmethod
    def load_scene_config(path: str) -> SceneConfig:
        """
        Read and validate a YAML scene configuration.

        Args:
            path: Config file

        Returns:
            SceneConfig: Validated configuration

        Raises:
            ConfigError: On unreadable YAML, unknown keys or invalid values
        """
        try:
            with open(path, "r", encoding="utf-8") as handle:
                document = yaml.safe_load(handle)
        except OSError as exc:
            raise ConfigError(f"Cannot read scene config {path}: {exc}", path=path)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Invalid YAML in {path}: {exc}", path=path)
        if not isinstance(document, dict):
            raise ConfigError(f"Scene config {path} must be a mapping", path=path)
        try:
            return SceneConfig.model_validate(document)
        except ValidationError as exc:
            first = exc.errors()[0]
            location = ".".join(str(part) for part in first.get("loc", ()))
            raise ConfigError(
                f"Invalid scene config {path}: {location}: {first.get('msg', '')}",
                path=path,
                errors=len(exc.errors()),
            )

    @staticmethod
    def dump_scene_config(config: SceneConfig) -> str:
        """Serialize a scene configuration to YAML with a stable key order."""
        document = config.model_dump(mode="json", exclude_none=True)
        return yaml.safe_dump(document, sort_keys=False, default_flow_style=None)

    @staticmethod
    def load_scene_object(config: SceneConfig, config_path: str) -> SceneObject:
        """
        Load mesh and texture referenced by a scene configuration.

        Args:
            config: Scene configuration
            config_path: Path of the config file; relative asset paths resolve against it

        Returns:
            SceneObject: Object with its base texture
        """
        base_dir = os.path.dirname(os.path.abspath(config_path))
        mesh_path = os.path.join(base_dir, config.object.mesh_path)
        texture_path = os.path.join(base_dir, config.object.texture_path)
        return SceneObject(
            object_id=config.object.id,
            label=config.object.label,
            mesh=MeshService.load_obj(mesh_path),
            texture=TextureService.load_texture(texture_path),
        )
