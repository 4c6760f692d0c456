from unittest.mock import patch

import numpy as np
import pytest

from app.exceptions import ChecksumMismatch, DivergedLoss, MissingClass, ResolutionMismatch, SpecMismatch
from app.models.models import LabeledView
from app.models.schemas import ClassifierSpec, ConvBlock, RendererKind, TrainingConfig
from app.services.classifier_service import ClassifierService
from .test_base import TestBase

# Red diminuta para las diferencias finitas
TINY_SPEC = ClassifierSpec(blocks=[ConvBlock(width=4), ConvBlock(width=4)], n_classes=3, resolution=8)


def relu_masks(model, image):
    x = ClassifierService._as_batch(model, image)
    _, _, caches, _ = ClassifierService._forward(model, x, ClassifierService._params64(model))
    return [active for _, _, active in caches]


def constant_views(n_per_class, resolution=16):
    """Vistas de color uniforme: clase 0 oscura, clase 1 clara."""
    views = []
    for label, value in ((0, 0.1), (1, 0.9)):
        for i in range(n_per_class):
            image = np.full((resolution, resolution, 3), value + 0.01 * i, dtype=np.float32)
            views.append(LabeledView(image=image, label=label, view_id=i, renderer=RendererKind.SURROGATE))
    return views


class TestClassifierService(TestBase):
    """
    Pruebas unitarias para el servicio del clasificador.
    """

    def test_layer_shapes_compact(self):
        """
        Prueba las formas de los parámetros del preset compacto.
        """
        spec = ClassifierSpec.preset("compact", 3, 16)

        shapes = dict(ClassifierService.layer_shapes(spec))

        assert shapes["conv0.weight"] == (8, 3, 3, 3)
        assert shapes["conv3.weight"] == (64, 32, 3, 3)
        assert shapes["head.weight"] == (3, 64)
        expected = sum(int(np.prod(s)) for s in shapes.values())
        assert ClassifierService.weight_count(spec) == expected

    def test_preset_unknown(self):
        """
        Prueba que un preset desconocido se rechaza.
        """
        with pytest.raises(ValueError):
            ClassifierSpec.preset("huge", 3)

    def test_init_model_is_seeded(self):
        """
        Prueba que la inicialización depende solo de la semilla y que los sesgos empiezan en cero.
        """
        first = ClassifierService.init_model(TINY_SPEC, seed=5)
        again = ClassifierService.init_model(TINY_SPEC, seed=5)
        other = ClassifierService.init_model(TINY_SPEC, seed=6)

        assert first.weights.dtype == np.float32
        assert np.array_equal(first.weights, again.weights)
        assert not np.array_equal(first.weights, other.weights)
        params = ClassifierService.unpack(TINY_SPEC, first.weights)
        assert np.all(params["conv0.bias"] == 0.0)
        assert np.all(params["head.bias"] == 0.0)

    def test_forward_and_resolution_mismatch(self, compact_classifier):
        """
        Prueba la forma de los logits y el rechazo de resoluciones distintas.
        """
        image = np.full((16, 16, 3), 0.5)

        logits = ClassifierService.forward(compact_classifier, image)

        assert logits.shape == (3,)
        with pytest.raises(ResolutionMismatch):
            ClassifierService.forward(compact_classifier, np.zeros((32, 32, 3)))

    def test_predict_ties_go_to_lowest_class(self):
        """
        Prueba que con logits iguales gana la clase de menor índice.
        """
        model = ClassifierService.init_model(TINY_SPEC, seed=0)
        model.weights = np.zeros_like(model.weights)

        assert ClassifierService.predict(model, np.full((8, 8, 3), 0.3)) == 0

    def test_forward_batch_matches_forward(self, compact_classifier):
        """
        Prueba que la evaluación por lotes coincide con la individual.
        """
        rng = np.random.default_rng(1)
        images = rng.random((5, 16, 16, 3))

        batch = ClassifierService.forward_batch(compact_classifier, images)

        for image, logits in zip(images, batch):
            assert np.allclose(ClassifierService.forward(compact_classifier, image), logits, atol=1e-12)

    def test_softmax_and_cross_entropy(self):
        """
        Prueba softmax y entropía cruzada con logits grandes.
        """
        logits = np.array([1000.0, 1001.0, 999.0])

        probs = ClassifierService.softmax(logits)

        assert probs.sum() == pytest.approx(1.0)
        assert ClassifierService.cross_entropy(logits, 1) == pytest.approx(-np.log(probs[1]))
        assert np.isfinite(ClassifierService.cross_entropy(logits, 2))

    def test_cross_entropy_values(self):
        """
        Prueba ln 10 para logits uniformes y pérdida casi nula con margen grande.
        """
        assert ClassifierService.cross_entropy(np.zeros(10), 3) == pytest.approx(np.log(10.0))
        assert ClassifierService.cross_entropy(np.array([25.0, 0.0, 1.0]), 0) < 1e-6
        assert ClassifierService.cross_entropy(np.array([0.0, 25.0]), 0) >= 0.0

    def test_zero_weights_give_zero_gradient(self):
        """
        Prueba que un modelo con pesos nulos tiene gradiente de entrada nulo.
        """
        model = ClassifierService.init_model(TINY_SPEC, seed=0)
        model.weights = np.zeros_like(model.weights)

        gradient = ClassifierService.grad_input(model, np.full((8, 8, 3), 0.4), 1)

        assert np.all(gradient == 0.0)

    def test_permuting_head_rows_permutes_logits(self):
        """
        Prueba que permutar las filas de la cabeza permuta los logits.
        """
        model = ClassifierService.init_model(TINY_SPEC, seed=7)
        image = np.random.default_rng(8).random((8, 8, 3))
        params = ClassifierService.unpack(TINY_SPEC, model.weights)
        # Configurar la cabeza con sesgos distintos para que la permutación se note
        params["head.bias"][:] = [0.1, -0.2, 0.3]
        logits = ClassifierService.forward(model, image)

        params["head.weight"][:] = params["head.weight"][[2, 0, 1]]
        params["head.bias"][:] = params["head.bias"][[2, 0, 1]]

        assert np.allclose(ClassifierService.forward(model, image), logits[[2, 0, 1]], atol=1e-12)

    def test_grad_input_finite_differences(self):
        """
        Prueba el gradiente respecto a la imagen con diferencias centrales.
        """
        model = ClassifierService.init_model(TINY_SPEC, seed=3)
        rng = np.random.default_rng(4)
        image = rng.random((8, 8, 3))
        h = 1e-6

        gradient = ClassifierService.grad_input(model, image, 2)

        checked = 0
        for flat in rng.choice(image.size, size=25, replace=False):
            index = np.unravel_index(flat, image.shape)
            plus, minus = image.copy(), image.copy()
            plus[index] += h
            minus[index] -= h
            # Omitir muestras que cruzan un pliegue de ReLU
            if any(not np.array_equal(a, b) for a, b in zip(relu_masks(model, plus), relu_masks(model, minus))):
                continue
            numeric = (
                ClassifierService.cross_entropy(ClassifierService.forward(model, plus), 2)
                - ClassifierService.cross_entropy(ClassifierService.forward(model, minus), 2)
            ) / (2 * h)
            assert numeric == pytest.approx(gradient[index], rel=1e-4, abs=1e-7)
            checked += 1
        assert checked >= 10

    def test_grad_input_finite_differences_many_pixels(self):
        """
        Prueba el gradiente respecto a la imagen en al menos 100 pixeles al azar con h = 1e-3.
        """
        # Configurar una red de dos bloques sobre imágenes de 16 px
        spec = ClassifierSpec(blocks=[ConvBlock(width=4), ConvBlock(width=4)], n_classes=3, resolution=16)
        model = ClassifierService.init_model(spec, seed=11)
        rng = np.random.default_rng(12)
        image = rng.random((16, 16, 3))
        h = 1e-3
        center = relu_masks(model, image)

        gradient = ClassifierService.grad_input(model, image, 1)

        checked = 0
        for pixel in rng.choice(16 * 16, size=200, replace=False):
            index = (pixel // 16, pixel % 16, int(rng.integers(3)))
            plus, minus = image.copy(), image.copy()
            plus[index] += h
            minus[index] -= h
            masks = [center, relu_masks(model, plus), relu_masks(model, minus)]
            # Omitir muestras en las que algún ReLU cambia de lado
            if any(not np.array_equal(a, b) for other in masks[1:] for a, b in zip(center, other)):
                continue
            numeric = (
                ClassifierService.cross_entropy(ClassifierService.forward(model, plus), 1)
                - ClassifierService.cross_entropy(ClassifierService.forward(model, minus), 1)
            ) / (2 * h)
            # Verificar error relativo < 1e-3
            assert numeric == pytest.approx(gradient[index], rel=1e-3, abs=1e-9)
            checked += 1
        assert checked >= 100

    def test_head_gradient_finite_differences(self):
        """
        Prueba el gradiente de los pesos de la cabeza lineal con diferencias centrales.
        """
        model = ClassifierService.init_model(TINY_SPEC, seed=3)
        rng = np.random.default_rng(5)
        images = rng.random((2, 8, 8, 3))
        labels = [0, 2]

        _, _, gradient = ClassifierService.loss_and_gradients(model, images, labels)

        head_start = ClassifierService.weight_count(TINY_SPEC) - 3 * 4 - 3
        for k in range(head_start, head_start + 6):
            original = model.weights.copy()
            model.weights = original.copy()
            model.weights[k] = original[k] + np.float32(1e-3)
            plus_value = float(model.weights[k])
            loss_plus, _, _ = ClassifierService.loss_and_gradients(model, images, labels, need_params=False)
            model.weights[k] = original[k] - np.float32(1e-3)
            minus_value = float(model.weights[k])
            loss_minus, _, _ = ClassifierService.loss_and_gradients(model, images, labels, need_params=False)
            model.weights = original

            numeric = (loss_plus - loss_minus) / (plus_value - minus_value)
            assert numeric == pytest.approx(gradient[k], rel=1e-3, abs=1e-6)

    def test_batch_loss_is_mean(self):
        """
        Prueba que la pérdida y el gradiente de entrada de un lote son medias por imagen.
        """
        model = ClassifierService.init_model(TINY_SPEC, seed=2)
        rng = np.random.default_rng(6)
        images = rng.random((2, 8, 8, 3))

        loss, d_input, d_params = ClassifierService.loss_and_gradients(
            model, images, [1, 0], need_input=True, need_params=False
        )

        single = [
            ClassifierService.cross_entropy(ClassifierService.forward(model, images[i]), y)
            for i, y in enumerate([1, 0])
        ]
        assert d_params is None
        assert loss == pytest.approx(np.mean(single))
        assert np.allclose(d_input[0], ClassifierService.grad_input(model, images[0], 1) / 2, atol=1e-12)

    def test_train_classifier_reproducible(self):
        """
        Prueba que el entrenamiento es reproducible y reduce la pérdida.
        """
        views = constant_views(4)
        spec = ClassifierSpec.preset("compact", 2, 16)
        config = TrainingConfig(learning_rate=0.01, momentum=0.9, batch_size=4, epochs=10, seed=1)

        model, accuracy = ClassifierService.train_classifier(views, config, spec)
        again, _ = ClassifierService.train_classifier(views, config, spec)

        assert np.array_equal(model.weights, again.weights)
        assert model.weights.dtype == np.float32
        assert model.classifier_id == ClassifierService.default_classifier_id(model)
        assert model.classifier_id.startswith("clf-") and len(model.classifier_id) == 12
        assert accuracy == ClassifierService.accuracy(model, views)

        images = np.stack([v.image for v in views])
        labels = [v.label for v in views]
        initial = ClassifierService.init_model(spec, config.seed)
        loss_before, _, _ = ClassifierService.loss_and_gradients(initial, images, labels, need_params=False)
        loss_after, _, _ = ClassifierService.loss_and_gradients(model, images, labels, need_params=False)
        assert loss_after < loss_before

    def test_train_classifier_separable_toy_reaches_full_accuracy(self):
        """
        Prueba que un problema separable (vistas oscuras frente a claras) llega al 100% en 200 pasos.
        """
        # Configurar 8 vistas en un único lote: un paso por época
        views = constant_views(4)
        spec = ClassifierSpec.preset("compact", 2, 16)
        config = TrainingConfig(learning_rate=0.02, momentum=0.9, batch_size=8, epochs=200, max_steps=200, seed=0)

        with patch.object(
            ClassifierService, "loss_and_gradients", wraps=ClassifierService.loss_and_gradients
        ) as spy:
            model, accuracy = ClassifierService.train_classifier(views, config, spec)

        # Verificar el presupuesto de pasos y la precisión
        assert spy.call_count <= 200
        assert accuracy == 1.0
        assert ClassifierService.accuracy(model, views) == 1.0

    def test_train_classifier_max_steps_and_id(self):
        """
        Prueba el límite de pasos y el identificador explícito.
        """
        views = constant_views(2)
        spec = ClassifierSpec.preset("compact", 2, 16)
        config = TrainingConfig(batch_size=2, epochs=5, max_steps=1)

        with patch.object(
            ClassifierService, "loss_and_gradients", wraps=ClassifierService.loss_and_gradients
        ) as spy:
            model, _ = ClassifierService.train_classifier(views, config, spec, classifier_id="mine")

        assert spy.call_count == 1
        assert model.classifier_id == "mine"

    def test_train_classifier_missing_class(self):
        """
        Prueba que una clase sin vistas produce MissingClass.
        """
        views = [v for v in constant_views(2) if v.label == 0]

        with pytest.raises(MissingClass):
            ClassifierService.train_classifier(views, TrainingConfig(epochs=1), ClassifierSpec.preset("compact", 2, 16))

    def test_train_classifier_diverged(self):
        """
        Prueba que una pérdida no finita produce DivergedLoss.
        """
        views = constant_views(2)
        spec = ClassifierSpec.preset("compact", 2, 16)
        n = ClassifierService.weight_count(spec)

        with patch.object(ClassifierService, "loss_and_gradients", return_value=(float("nan"), None, np.zeros(n))):
            with pytest.raises(DivergedLoss):
                ClassifierService.train_classifier(views, TrainingConfig(epochs=1), spec)

    def test_weights_roundtrip(self, tmp_path, compact_classifier):
        """
        Prueba que el archivo de pesos conserva pesos, arquitectura e identificador.
        """
        path = str(tmp_path / "clf.bin")

        ClassifierService.save_weights(compact_classifier, path)
        loaded = ClassifierService.load_weights(path, compact_classifier.spec)

        assert np.array_equal(loaded.weights, compact_classifier.weights)
        assert loaded.spec == compact_classifier.spec
        assert loaded.classifier_id == "clf-test"

    def test_weights_corruption(self, compact_classifier):
        """
        Prueba que un byte alterado o un archivo truncado producen ChecksumMismatch.
        """
        data = bytearray(ClassifierService.to_bytes(compact_classifier))
        corrupted = bytes(data[:100]) + bytes([data[100] ^ 0xFF]) + bytes(data[101:])

        with pytest.raises(ChecksumMismatch):
            ClassifierService.from_bytes(corrupted)
        with pytest.raises(ChecksumMismatch):
            ClassifierService.from_bytes(bytes(data[:-10]))
        with pytest.raises(ChecksumMismatch):
            ClassifierService.from_bytes(b"short")

    def test_weights_spec_mismatch(self, compact_classifier):
        """
        Prueba que cargar con otra arquitectura produce SpecMismatch.
        """
        data = ClassifierService.to_bytes(compact_classifier)

        with pytest.raises(SpecMismatch):
            ClassifierService.from_bytes(data, ClassifierSpec.preset("standard", 3, 16))
