"""
Metrics Service

Evaluation quantities: accuracy over the rig, relative accuracy drop and the
mean absolute texel change, plus the transfer evaluation of an adversarial
texture under the target renderer.
"""

from typing import List, Optional, Sequence

import numpy as np

from app.exceptions import NotApplicable, ShapeMismatch
from app.models.models import ClassifierModel, FragmentBuffer, SceneObject, Texture, ViewRig
from app.models.schemas import AttackReport, RendererKind, TargetSettings, ViewPrediction
from app.services.classifier_service import ClassifierService
from app.services.target_render_service import TargetRenderService
from app.utils.logging_config import get_logger

logger = get_logger("metrics_service")

CHANGE_TOLERANCE = 1e-9


class MetricsService:
    """
    Service for accuracy and perturbation metrics.
    """

    @staticmethod
    def predict_over_rig(
        scene: SceneObject,
        rig: ViewRig,
        texture: Texture,
        classifier: ClassifierModel,
        renderer: RendererKind,
        target: Optional[TargetSettings] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
        threads: int = 1,
    ) -> List[int]:
        """
        Predicted class of every rig view.

        Args:
            scene: Object
            rig: View rig
            texture: Texture to render
            classifier: Classifier
            renderer: Renderer to evaluate under
            target: Target settings for the TARGET renderer
            fragments: Precomputed shaded fragments of the rig
            threads: Worker threads for rendering

        Returns:
            List[int]: Predictions in rig order
        """
        images = TargetRenderService.render_rig(
            scene, rig, renderer, target, texture, fragments=fragments, threads=threads
        )
        logits = ClassifierService.forward_batch(classifier, np.stack(images))
        return [int(p) for p in np.argmax(logits, axis=1)]

    @staticmethod
    def accuracy_over_rig(
        scene: SceneObject,
        rig: ViewRig,
        texture: Texture,
        classifier: ClassifierModel,
        renderer: RendererKind = RendererKind.SURROGATE,
        target: Optional[TargetSettings] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
        threads: int = 1,
    ) -> float:
        """Fraction of rig views whose prediction equals the object label."""
        predictions = MetricsService.predict_over_rig(
            scene, rig, texture, classifier, renderer, target, fragments, threads
        )
        return MetricsService.accuracy(predictions, scene.label)

    @staticmethod
    def accuracy(predictions: Sequence[int], label: int) -> float:
        return float(np.mean([p == label for p in predictions])) if predictions else 0.0

    @staticmethod
    def accuracy_drop(a_before: float, a_after: float) -> float:
        """
        Relative accuracy drop (a_before - a_after) / a_before.

        Negative values are legal.

        Raises:
            NotApplicable: If a_before is 0
        """
        if a_before == 0:
            raise NotApplicable("Accuracy drop is undefined when the clean accuracy is 0")
        return (a_before - a_after) / a_before

    @staticmethod
    def safe_accuracy_drop(a_before: float, a_after: float, context: str = "") -> Optional[float]:
        """accuracy_drop, or None ("n.a.") with a warning when undefined."""
        try:
            return MetricsService.accuracy_drop(a_before, a_after)
        except NotApplicable:
            logger.warning(f"Clean accuracy is 0 {context}, accuracy drop reported as n.a.")
            return None

    @staticmethod
    def texel_change(before: np.ndarray, after: np.ndarray) -> float:
        """
        Mean absolute componentwise difference, ||before - after||_1 / |before|.

        Raises:
            ShapeMismatch: If the textures differ in shape
        """
        if before.shape != after.shape:
            raise ShapeMismatch(f"Texture shapes differ: {before.shape} vs {after.shape}")
        return float(np.mean(np.abs(before - after)))

    @staticmethod
    def changed_texel_fraction(before: np.ndarray, after: np.ndarray) -> float:
        """Fraction of components that changed by more than 1e-9."""
        if before.shape != after.shape:
            raise ShapeMismatch(f"Texture shapes differ: {before.shape} vs {after.shape}")
        return float(np.mean(np.abs(before - after) > CHANGE_TOLERANCE))

    @staticmethod
    def evaluate_transfer(
        scene: SceneObject,
        rig: ViewRig,
        classifier: ClassifierModel,
        adversarial: Texture,
        surrogate_report: AttackReport,
        target: Optional[TargetSettings] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
        threads: int = 1,
    ) -> AttackReport:
        """
        Evaluate an adversarial texture under the target renderer.

        The texture metrics and attack settings are copied from the surrogate report;
        accuracies and predictions are recomputed on target renders.

        Args:
            scene: Object with its clean texture
            rig: View rig
            classifier: Classifier
            adversarial: Texture produced by the attack
            surrogate_report: Report of the white-box evaluation
            target: Target settings
            fragments: Precomputed shaded fragments of the rig
            threads: Worker threads

        Returns:
            AttackReport: Report tagged TARGET
        """
        clean = MetricsService.predict_over_rig(
            scene, rig, scene.texture, classifier, RendererKind.TARGET, target, fragments, threads
        )
        adv = MetricsService.predict_over_rig(
            scene, rig, adversarial, classifier, RendererKind.TARGET, target, fragments, threads
        )
        a_before = MetricsService.accuracy(clean, scene.label)
        a_after = MetricsService.accuracy(adv, scene.label)
        a_drop = MetricsService.safe_accuracy_drop(a_before, a_after, f"for {scene.object_id} on target")
        logger.info(
            f"Transfer {scene.object_id}: A_before={a_before:.3f} A_after={a_after:.3f} "
            f"A_drop={'n.a.' if a_drop is None else f'{a_drop:.3f}'}"
        )
        return surrogate_report.model_copy(
            update={
                "renderer": RendererKind.TARGET,
                "a_before": a_before,
                "a_after": a_after,
                "a_drop": a_drop,
                "predictions": [
                    ViewPrediction(view_id=i, clean=c, adversarial=a)
                    for i, (c, a) in enumerate(zip(clean, adv))
                ],
                "max_view_linf": None,
            }
        )
