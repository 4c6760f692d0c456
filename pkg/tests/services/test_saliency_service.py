import numpy as np
import pytest

from app.exceptions import InvalidThreshold, RigMismatch
from app.services.saliency_service import SaliencyService
from .test_base import TestBase


class TestSaliencyService(TestBase):
    """
    Pruebas unitarias para el servicio de saliencia.
    """

    def _two_by_two_buffer(self):
        # Pixel (1, 0) sin cobertura; los demás apuntan a una textura 2x2
        index = np.tile(np.arange(4), (2, 2, 1))
        weight = np.zeros((2, 2, 4))
        weight[0, 0] = [1.0, 0.0, 0.0, 0.0]
        weight[0, 1] = [0.0, 0.5, 0.0, 0.5]
        weight[1, 1] = [0.25, 0.25, 0.25, 0.25]
        return self.create_fragment_buffer([[0, 0], [-1, 0]], index, weight, (2, 2))

    def test_splat_to_texels_manual(self):
        """
        Prueba la acumulación bilineal y la normalización por el máximo global.
        """
        fragments = self._two_by_two_buffer()
        saliency = np.array([[4.0, 2.0], [100.0, 0.0]])

        texel = SaliencyService.splat_to_texels([saliency], [fragments])

        assert texel.shape == (2, 2)
        assert np.allclose(texel.ravel(), [1.0, 0.25, 0.0, 0.25])

    def test_splat_sums_views(self):
        """
        Prueba que las vistas se suman antes de normalizar.
        """
        fragments = self._two_by_two_buffer()
        first = np.array([[4.0, 0.0], [0.0, 0.0]])
        second = np.array([[0.0, 0.0], [0.0, 8.0]])

        texel = SaliencyService.splat_to_texels([first, second], [fragments, fragments])

        # Configurar: [4 + 2, 2, 2, 2] / 6
        assert np.allclose(texel.ravel(), [1.0, 1 / 3, 1 / 3, 1 / 3])

    def test_splat_all_zero_stays_zero(self):
        """
        Prueba que una saliencia nula no se normaliza.
        """
        texel = SaliencyService.splat_to_texels([np.zeros((2, 2))], [self._two_by_two_buffer()])

        assert np.all(texel == 0.0)

    def test_splat_rig_mismatch(self):
        """
        Prueba que conteos o formas distintos producen RigMismatch.
        """
        fragments = self._two_by_two_buffer()

        with pytest.raises(RigMismatch):
            SaliencyService.splat_to_texels([np.zeros((2, 2))] * 2, [fragments])
        with pytest.raises(RigMismatch):
            SaliencyService.splat_to_texels([np.zeros((3, 3))], [fragments])
        with pytest.raises(RigMismatch):
            SaliencyService.splat_to_texels([], [])

    def test_binarize(self):
        """
        Prueba la máscara saliency >= tau.
        """
        texel = np.array([[0.1, 0.5], [0.49, 1.0]])

        mask = SaliencyService.binarize(texel, 0.5)

        assert mask.tolist() == [[False, True], [False, True]]

    @pytest.mark.parametrize("threshold", [0.0, 1.0, 1.5, -0.2])
    def test_binarize_invalid_threshold(self, threshold):
        """
        Prueba que tau fuera de (0, 1) produce InvalidThreshold.
        """
        with pytest.raises(InvalidThreshold):
            SaliencyService.binarize(np.zeros((2, 2)), threshold)

    def test_view_saliency_shape(self, compact_classifier):
        """
        Prueba que la saliencia por pixel es no negativa y tiene la forma de la imagen.
        """
        image = np.random.default_rng(0).random((16, 16, 3))

        saliency = SaliencyService.view_saliency(compact_classifier, image, 1)

        assert saliency.shape == (16, 16)
        assert np.all(saliency >= 0.0)

    def test_build_saliency_mask(self, small_scene, small_rig, small_fragments, compact_classifier):
        """
        Prueba el rango [0, 1], el máximo 1 y que los texels no visibles valen cero.
        """
        saliency = SaliencyService.build_saliency_mask(
            small_scene, small_rig, compact_classifier, 0.3, fragments=small_fragments
        )

        texel = saliency.texel_saliency
        assert texel.shape == (16, 16)
        assert texel.min() >= 0.0
        assert texel.max() == pytest.approx(1.0)
        assert len(saliency.pixel_saliency) == len(small_rig)
        assert np.array_equal(saliency.mask, texel >= 0.3)
        reachable = SaliencyService.reachable_texels(small_fragments)
        assert np.all(texel[~reachable] == 0.0)

    def test_mask_shrinks_with_threshold(self, small_scene, small_rig, small_fragments, compact_classifier):
        """
        Prueba que la fracción de máscara no crece al subir tau.
        """
        fractions = [
            SaliencyService.build_saliency_mask(
                small_scene, small_rig, compact_classifier, tau, fragments=small_fragments
            ).mask_fraction
            for tau in (0.1, 0.5, 0.9)
        ]

        assert fractions[0] >= fractions[1] >= fractions[2] > 0.0

    def test_build_saliency_mask_threads(self, small_scene, small_rig, small_fragments, compact_classifier):
        """
        Prueba que el resultado no depende del número de hilos.
        """
        serial = SaliencyService.build_saliency_mask(
            small_scene, small_rig, compact_classifier, 0.5, fragments=small_fragments, threads=1
        )
        parallel = SaliencyService.build_saliency_mask(
            small_scene, small_rig, compact_classifier, 0.5, fragments=small_fragments, threads=4
        )

        assert np.array_equal(serial.texel_saliency, parallel.texel_saliency)
        assert np.array_equal(serial.mask, parallel.mask)

    def test_build_saliency_mask_invalid_threshold(self, small_scene, small_rig, compact_classifier):
        """
        Prueba que tau inválido se rechaza antes de renderizar.
        """
        with pytest.raises(InvalidThreshold):
            SaliencyService.build_saliency_mask(small_scene, small_rig, compact_classifier, 1.0)

    def test_export_and_load_mask(self, tmp_path, small_scene, small_rig, small_fragments, compact_classifier):
        """
        Prueba que la máscara exportada como PNG se vuelve a leer igual.
        """
        saliency = SaliencyService.build_saliency_mask(
            small_scene, small_rig, compact_classifier, 0.4, fragments=small_fragments
        )

        paths = SaliencyService.export_saliency(saliency, str(tmp_path), "cube-00")

        assert sorted(paths) == ["heatmap", "mask", "saliency"]
        assert all((tmp_path / f"cube-00_{kind}.png").exists() for kind in paths)
        assert np.array_equal(SaliencyService.load_mask(paths["mask"]), saliency.mask)
