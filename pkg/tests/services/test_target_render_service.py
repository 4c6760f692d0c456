import numpy as np
import pytest

from app.models.schemas import RendererKind, TargetSettings
from app.services.render_service import RenderService
from app.services.target_render_service import TargetRenderService
from .test_base import TestBase

FULL_SCREEN = [(-4.0, -4.0, 1.0), (4.0, -4.0, 1.0), (0.0, 4.0, 1.0)]
LOWER_LEFT = [(-1.0, -1.0, 1.0), (1.0, -1.0, 1.0), (-1.0, 1.0, 1.0)]


class TestTargetRenderService(TestBase):
    """
    Pruebas unitarias para el renderizador objetivo.
    """

    def test_degenerate_settings_match_surrogate(self, small_scene, small_rig, degenerate_target):
        """
        Prueba que sin brillo especular ni gamma el objetivo coincide bit a bit con el sustituto.
        """
        for entry in small_rig.entries():
            surrogate = RenderService.render_surrogate(
                small_scene, entry.camera, entry.light, small_rig.background
            ).image
            target = TargetRenderService.render_target(
                small_scene, entry.camera, entry.light, small_rig.background, degenerate_target
            )
            assert np.array_equal(surrogate, target)

    def test_specular_highlight_closed_form(self, front_camera, front_light):
        """
        Prueba el término Blinn-Phong sin gamma sobre un plano frontal.
        """
        mesh = self.create_triangle_mesh([FULL_SCREEN])
        fragments = RenderService.compute_shading(RenderService.rasterize(mesh, front_camera, (8, 8)), front_light)
        settings = TargetSettings(spec_strength=0.4, shininess=16.0, gamma=False)

        image = TargetRenderService.shade_target(
            fragments, self.create_constant_texture(0.25), front_camera, front_light, (0.0, 0.0, 0.0), settings
        )

        # Configurar el valor esperado: h = normalize(to_camera + l), l = (0, 0, 1)
        to_camera = np.array([0.0, 0.0, 2.0]) - fragments.position
        to_camera /= np.linalg.norm(to_camera, axis=2, keepdims=True)
        half = to_camera + np.array([0.0, 0.0, 1.0])
        half /= np.linalg.norm(half, axis=2, keepdims=True)
        expected = np.clip(0.25 + 0.4 * half[:, :, 2] ** 16, 0.0, 1.0)
        assert np.allclose(image[:, :, 0], expected, atol=1e-12)
        # El resalte es mayor en el centro que en la esquina
        assert image[8, 8, 0] > image[0, 0, 0]

    def test_gamma_only_on_covered_pixels(self, front_camera, front_light):
        """
        Prueba que la gamma se aplica a los pixeles cubiertos y no al fondo.
        """
        mesh = self.create_triangle_mesh([LOWER_LEFT])
        fragments = RenderService.compute_shading(RenderService.rasterize(mesh, front_camera, (8, 8)), front_light)
        settings = TargetSettings(spec_strength=0.0, gamma=True, gamma_value=2.2)
        background = (0.25, 0.25, 0.25)

        image = TargetRenderService.shade_target(
            fragments, self.create_constant_texture(0.25), front_camera, front_light, background, settings
        )

        assert image[15, 0, 0] == pytest.approx(0.25 ** (1.0 / 2.2))
        assert image[0, 15].tolist() == [0.25, 0.25, 0.25]

    def test_default_target_differs_and_stays_in_range(self, small_scene, small_rig):
        """
        Prueba que los ajustes por defecto cambian el render y lo mantienen en [0, 1].
        """
        entry = next(small_rig.entries())
        surrogate = RenderService.render_surrogate(
            small_scene, entry.camera, entry.light, small_rig.background
        ).image

        target = TargetRenderService.render_target(
            small_scene, entry.camera, entry.light, small_rig.background, TargetSettings()
        )

        assert not np.array_equal(surrogate, target)
        assert target.min() >= 0.0 and target.max() <= 1.0

    def test_render_rig_surrogate_matches_single_renders(self, small_scene, small_rig, small_fragments):
        """
        Prueba que render_rig con el sustituto reproduce los renders individuales en orden.
        """
        images = TargetRenderService.render_rig(
            small_scene, small_rig, RendererKind.SURROGATE, fragments=small_fragments
        )

        assert len(images) == len(small_rig)
        for entry, image in zip(small_rig.entries(), images):
            single = RenderService.render_surrogate(small_scene, entry.camera, entry.light, small_rig.background)
            assert np.array_equal(single.image, image)

    def test_render_rig_target_threads(self, small_scene, small_rig, small_fragments):
        """
        Prueba que el orden y los valores no dependen del número de hilos.
        """
        serial = TargetRenderService.render_rig(
            small_scene, small_rig, RendererKind.TARGET, fragments=small_fragments, threads=1
        )
        parallel = TargetRenderService.render_rig(
            small_scene, small_rig, RendererKind.TARGET, fragments=small_fragments, threads=4
        )

        for a, b in zip(serial, parallel):
            assert np.array_equal(a, b)

    def test_render_rig_uses_given_texture(self, small_scene, small_rig, small_fragments):
        """
        Prueba que la textura pasada sustituye a la textura base del objeto.
        """
        texture = self.create_constant_texture(0.0, size=16)

        images = TargetRenderService.render_rig(
            small_scene, small_rig, RendererKind.SURROGATE, texture=texture, fragments=small_fragments
        )

        # Textura negra sobre fondo negro: imagen negra
        assert all(np.all(image == 0.0) for image in images)
