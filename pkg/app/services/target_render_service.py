"""
Target Render Service

The black-box renderer transfer is measured on. It shares the rasterizer with
the surrogate and adds a white Blinn-Phong highlight and gamma encoding, so the
two renderers differ only in shading. Nothing here exposes gradients.
"""

from typing import List, Optional, Sequence

import numpy as np

from app.models.models import FragmentBuffer, SceneObject, Texture, ViewRig
from app.models.schemas import RGB, Camera, DirectionalLight, RendererKind, TargetSettings
from app.services.render_service import RenderService
from app.services.scene_service import SceneService
from app.utils.logging_config import get_logger
from app.utils.parallel import ordered_map

logger = get_logger("target_render_service")


class TargetRenderService:
    """
    Service for target renders and order-preserving rig rendering.
    """

    @staticmethod
    def shade_target(
        fragments: FragmentBuffer,
        texture: Texture,
        camera: Camera,
        light: DirectionalLight,
        background: RGB,
        settings: TargetSettings,
    ) -> np.ndarray:
        """Target shading of precomputed, shaded fragments."""
        color = RenderService.bilinear_sample(texture, fragments) * fragments.shading[:, :, None]
        if settings.spec_strength > 0:
            light_dir = SceneService.light_direction(light)
            to_camera = SceneService.camera_position(camera)[None, None, :] - fragments.position
            to_camera /= np.maximum(np.linalg.norm(to_camera, axis=2, keepdims=True), 1e-12)
            half = to_camera + light_dir[None, None, :]
            half /= np.maximum(np.linalg.norm(half, axis=2, keepdims=True), 1e-12)
            n_dot_h = np.clip(np.sum(fragments.normal * half, axis=2), 0.0, 1.0)
            color = color + (settings.spec_strength * n_dot_h ** settings.shininess)[:, :, None]
        if settings.gamma:
            color = np.power(np.clip(color, 0.0, None), 1.0 / settings.gamma_value)
        image = np.where(fragments.covered[:, :, None], color, np.asarray(background, dtype=np.float64))
        return np.clip(image, 0.0, 1.0)

    @staticmethod
    def render_target(
        scene: SceneObject,
        camera: Camera,
        light: DirectionalLight,
        background: RGB,
        settings: TargetSettings,
        texture: Optional[Texture] = None,
    ) -> np.ndarray:
        """
        Render one view with the target shading model.

        covered pixel = gamma(texel * (ambient + diffuse * max(0, n.l))
                              + spec_strength * max(0, n.h)^shininess), clamped to [0, 1]

        Args:
            scene: Object
            camera: Camera
            light: Light
            background: Background color (not gamma encoded)
            settings: Target shading settings
            texture: Texture to use instead of the object's base texture

        Returns:
            np.ndarray: (H, W, 3) image
        """
        texture = texture if texture is not None else scene.texture
        fragments = RenderService.rasterize(scene.mesh, camera, (texture.height, texture.width))
        fragments = RenderService.compute_shading(fragments, light)
        return TargetRenderService.shade_target(fragments, texture, camera, light, background, settings)

    @staticmethod
    def render_rig(
        scene: SceneObject,
        rig: ViewRig,
        renderer: RendererKind,
        target: Optional[TargetSettings] = None,
        texture: Optional[Texture] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
        threads: int = 1,
    ) -> List[np.ndarray]:
        """
        Render every rig entry with the chosen renderer, in rig order.

        Args:
            scene: Object
            rig: View rig
            renderer: SURROGATE or TARGET
            target: Target settings, defaults when None
            texture: Texture to render, the object's base texture when None
            fragments: Shaded fragments from RenderService.rasterize_rig to reuse
            threads: Worker threads

        Returns:
            List[np.ndarray]: One image per rig entry
        """
        if texture is not None:
            scene = scene.with_texture(texture)
        texture = scene.texture
        if fragments is None:
            fragments = RenderService.rasterize_rig(scene, rig, threads)
        entries = list(rig.entries())

        if renderer == RendererKind.SURROGATE:
            def render(i: int) -> np.ndarray:
                return RenderService.shade(fragments[i], texture, None, rig.background)
        else:
            settings = target if target is not None else TargetSettings()

            def render(i: int) -> np.ndarray:
                entry = entries[i]
                return TargetRenderService.shade_target(
                    fragments[i], texture, entry.camera, entry.light, rig.background, settings
                )

        images = ordered_map(render, range(len(entries)), threads)
        logger.debug(f"Rendered {len(images)} {renderer.value} views of {scene.object_id}")
        return images
