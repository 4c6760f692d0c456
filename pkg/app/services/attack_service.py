"""
Attack Service

EOT-PGD on the object texture: sign-gradient ascent on the expected
cross-entropy over the view rig, computed through the surrogate renderer and
projected onto the L-infinity ball around the clean texture. An optional binary
texel mask restricts which texels may change.

This module never reads target renderer settings.
"""

import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigError, ConstraintViolation, ShapeMismatch
from app.models.models import AttackState, ClassifierModel, FragmentBuffer, SceneObject, Texture, ViewRig
from app.models.schemas import AttackConfig, AttackReport, RendererKind, ViewPrediction
from app.services.classifier_service import ClassifierService
from app.services.metrics_service import MetricsService
from app.services.render_service import RenderService
from app.services.texture_service import TextureService
from app.utils.logging_config import get_logger
from app.utils.parallel import ordered_map

logger = get_logger("attack_service")

BALL_TOLERANCE = 1e-7
LOG_EVERY = 10


class AttackService:
    """
    Service for the expectation-over-views PGD texture attack.
    """

    @staticmethod
    def view_gradient(
        fragments: FragmentBuffer,
        texture: np.ndarray,
        background,
        classifier: ClassifierModel,
        label: int,
    ) -> Tuple[np.ndarray, float]:
        """
        Texture gradient and loss of a single surrogate view.

        Returns:
            Tuple[np.ndarray, float]: (Ht, Wt, 3) gradient and cross-entropy
        """
        image = RenderService.shade(fragments, Texture(texture), None, background)
        loss, d_image, _ = ClassifierService.loss_and_gradients(
            classifier, image[None], [label], need_input=True, need_params=False
        )
        return RenderService.backprop_texture(fragments, d_image[0]), loss

    @staticmethod
    def select_batch(order: np.ndarray, step: int, view_batch: Optional[int]) -> List[int]:
        """
        Views used at a step: consecutive slices of the seeded order, wrapping around.

        Returns:
            List[int]: View indices sorted ascending

        Raises:
            ConfigError: If view_batch exceeds the number of views
        """
        n = len(order)
        if view_batch is not None and view_batch > n:
            raise ConfigError(
                f"view_batch {view_batch} exceeds the rig size {n}", view_batch=view_batch, n_views=n
            )
        if view_batch is None or view_batch == n:
            return list(range(n))
        start = step * view_batch
        return sorted(int(order[(start + j) % n]) for j in range(view_batch))

    @staticmethod
    def eot_gradient(
        state: AttackState,
        scene: SceneObject,
        rig: ViewRig,
        classifier: ClassifierModel,
        fragments: Sequence[FragmentBuffer],
        views: Sequence[int],
        threads: int = 1,
    ) -> Tuple[np.ndarray, float]:
        """
        Mean texture gradient over a batch of views.

        Per-view gradients may be computed in parallel; the sum runs in view-index order.

        Args:
            state: Current iterate
            scene: Object (its label is the attacked class)
            rig: View rig
            classifier: Classifier
            fragments: Shaded surrogate fragments for every rig entry
            views: Batch of view indices, ascending
            threads: Worker threads

        Returns:
            Tuple[np.ndarray, float]: Mean gradient and mean loss over the batch
        """
        results = ordered_map(
            lambda i: AttackService.view_gradient(
                fragments[i], state.current, rig.background, classifier, scene.label
            ),
            views,
            threads,
        )
        total = np.zeros_like(state.current)
        loss = 0.0
        for gradient, view_loss in results:
            total += gradient
            loss += view_loss
        return total / len(views), loss / len(views)

    @staticmethod
    def expected_loss(
        scene: SceneObject,
        rig: ViewRig,
        classifier: ClassifierModel,
        texture: Texture,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
    ) -> float:
        """Mean cross-entropy over the full rig under the surrogate renderer."""
        if fragments is None:
            fragments = RenderService.rasterize_rig(scene, rig)
        images = np.stack([RenderService.shade(f, texture, None, rig.background) for f in fragments])
        loss, _, _ = ClassifierService.loss_and_gradients(
            classifier, images, [scene.label] * len(images), need_input=False, need_params=False
        )
        return loss

    @staticmethod
    def pgd_step(state: AttackState, gradient: np.ndarray, config: AttackConfig) -> AttackState:
        """
        One projected sign step.

        t' = clip01(clip_{t0 +- eps}(t + alpha * sign(grad) * mask)), sign(0) = 0.

        Raises:
            ShapeMismatch: If the gradient shape differs from the texture
        """
        if gradient.shape != state.current.shape:
            raise ShapeMismatch(f"Gradient shape {gradient.shape} != texture shape {state.current.shape}")
        step = config.alpha * np.sign(gradient) * state.mask_multiplier()
        moved = np.clip(state.current + step, state.base - config.epsilon, state.base + config.epsilon)
        return AttackState(
            base=state.base,
            current=np.clip(moved, 0.0, 1.0),
            step=state.step + 1,
            losses=state.losses,
            mask=state.mask,
        )

    @staticmethod
    def check_constraints(state: AttackState, epsilon: float) -> None:
        """
        Assert the iterate is inside the ball, inside [0, 1] and unchanged off-mask.

        Raises:
            ConstraintViolation: On any breach
        """
        deviation = float(np.max(np.abs(state.current - state.base))) if state.base.size else 0.0
        if deviation > epsilon + BALL_TOLERANCE:
            raise ConstraintViolation(
                f"Step {state.step}: L-inf distance {deviation} exceeds epsilon {epsilon}", step=state.step
            )
        if np.any(state.current < 0.0) or np.any(state.current > 1.0):
            raise ConstraintViolation(f"Step {state.step}: texture left [0, 1]", step=state.step)
        if state.mask is not None:
            frozen = ~state.mask
            if not np.array_equal(state.current[frozen], state.base[frozen]):
                raise ConstraintViolation(f"Step {state.step}: texels outside the mask changed", step=state.step)

    @staticmethod
    def initial_state(
        base: np.ndarray,
        config: AttackConfig,
        rng: np.random.Generator,
        mask: Optional[np.ndarray] = None,
    ) -> AttackState:
        """Clean start, or a uniform point of the ball (masked, clipped) when random_start."""
        state = AttackState(base=base, current=base.copy(), mask=mask)
        if config.random_start:
            noise = rng.uniform(-config.epsilon, config.epsilon, size=base.shape)
            state.current = np.clip(base + noise * state.mask_multiplier(), 0.0, 1.0)
        return state

    @staticmethod
    def finalize_texture(state: AttackState, config: AttackConfig) -> np.ndarray:
        """
        Snap the iterate to the 8-bit grid inside the ball so the saved texture is the
        evaluated one. Skipped when the clean texture is not itself on the grid.
        """
        if not config.quantize:
            return state.current
        if not np.array_equal(TextureService.to_grid(state.base), state.base):
            logger.debug("Clean texture is off the 8-bit grid, keeping the unquantized texture")
            return state.current
        snapped = TextureService.quantize_in_ball(state.current, state.base, config.epsilon)
        return np.where(state.mask_multiplier() > 0, snapped, state.base)

    @staticmethod
    def run_attack(
        scene: SceneObject,
        rig: ViewRig,
        classifier: ClassifierModel,
        config: AttackConfig,
        mask: Optional[np.ndarray] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
        threads: int = 1,
        on_step: Optional[Callable[[AttackState], None]] = None,
    ) -> Tuple[Texture, AttackReport]:
        """
        Run EOT-PGD and evaluate the result on the surrogate renderer.

        Args:
            scene: Object with its clean texture
            rig: View rig
            classifier: Classifier
            config: Attack settings
            mask: Optional (Ht, Wt) boolean texel mask
            fragments: Precomputed shaded fragments of the rig
            threads: Worker threads for per-view work
            on_step: Called with the state after every projected step

        Returns:
            Tuple[Texture, AttackReport]: Adversarial texture and surrogate report

        Raises:
            ConfigError: If view_batch exceeds the number of views
            ShapeMismatch: If the mask does not match the texture
            ConstraintViolation: If a step or the final texture leaves the feasible set
        """
        started = time.perf_counter()
        if fragments is None:
            fragments = RenderService.rasterize_rig(scene, rig, threads)
        n_views = len(fragments)
        if config.view_batch is not None and config.view_batch > n_views:
            raise ConfigError(
                f"view_batch {config.view_batch} exceeds the rig size {n_views}",
                view_batch=config.view_batch,
                n_views=n_views,
            )
        base = scene.texture.data
        if mask is not None and mask.shape != base.shape[:2]:
            raise ShapeMismatch(f"Mask shape {mask.shape} != texture shape {base.shape[:2]}")

        clean_predictions = MetricsService.predict_over_rig(
            scene, rig, scene.texture, classifier, RendererKind.SURROGATE, fragments=fragments, threads=threads
        )
        a_before = MetricsService.accuracy(clean_predictions, scene.label)
        if a_before < 0.5:
            logger.warning(
                f"Classifier recognizes {scene.object_id} on only {a_before:.2%} of the views before the attack"
            )
        initial_loss = AttackService.expected_loss(scene, rig, classifier, scene.texture, fragments)
        logger.info(
            f"Attacking {scene.object_id}: eps={config.epsilon} alpha={config.alpha} steps={config.n_steps} "
            f"views={n_views} texels={scene.texture.n_texels} mask={'none' if mask is None else f'{mask.mean():.3f}'} "
            f"A_before={a_before:.3f} loss={initial_loss:.4f}"
        )

        rng = np.random.default_rng(config.seed)
        best: Optional[Tuple[float, np.ndarray, List[float]]] = None
        restart_losses = []
        for restart in range(config.restarts):
            state = AttackService.initial_state(base, config, rng, mask)
            AttackService.check_constraints(state, config.epsilon)
            order = rng.permutation(n_views)
            for step in range(config.n_steps):
                views = AttackService.select_batch(order, step, config.view_batch)
                gradient, loss = AttackService.eot_gradient(
                    state, scene, rig, classifier, fragments, views, threads
                )
                state.losses.append(loss)
                state = AttackService.pgd_step(state, gradient, config)
                AttackService.check_constraints(state, config.epsilon)
                if on_step is not None:
                    on_step(state)
                if (step + 1) % LOG_EVERY == 0:
                    logger.info(f"Restart {restart} step {step + 1}/{config.n_steps}: batch loss {loss:.4f}")

            final = AttackService.finalize_texture(state, config)
            final_loss = AttackService.expected_loss(scene, rig, classifier, Texture(final), fragments)
            restart_losses.append(final_loss)
            if best is None or final_loss > best[0]:
                best = (final_loss, final, list(state.losses))

        final_loss, final, trajectory = best
        adversarial = Texture(final)
        adv_predictions = MetricsService.predict_over_rig(
            scene, rig, adversarial, classifier, RendererKind.SURROGATE, fragments=fragments, threads=threads
        )
        a_after = MetricsService.accuracy(adv_predictions, scene.label)
        max_view_linf = AttackService.max_view_change(rig, scene.texture, adversarial, fragments)
        if max_view_linf > config.epsilon + BALL_TOLERANCE:
            raise ConstraintViolation(
                f"Rendered views moved by {max_view_linf}, more than epsilon {config.epsilon}"
            )

        report = AttackReport(
            object_id=scene.object_id,
            label=scene.label,
            renderer=RendererKind.SURROGATE,
            classifier_id=classifier.classifier_id,
            epsilon=config.epsilon,
            alpha=config.alpha,
            n_steps=config.n_steps,
            view_batch=config.view_batch,
            tau=config.saliency_threshold,
            seed=config.seed,
            random_start=config.random_start,
            restarts=config.restarts,
            a_before=a_before,
            a_after=a_after,
            a_drop=MetricsService.safe_accuracy_drop(a_before, a_after, f"for {scene.object_id}"),
            n_pct=MetricsService.texel_change(base, final),
            changed_texel_fraction=MetricsService.changed_texel_fraction(base, final),
            mask_fraction=1.0 if mask is None else float(mask.mean()),
            predictions=[
                ViewPrediction(view_id=i, clean=c, adversarial=a)
                for i, (c, a) in enumerate(zip(clean_predictions, adv_predictions))
            ],
            initial_loss=initial_loss,
            final_loss=final_loss,
            loss_trajectory=trajectory,
            restart_losses=restart_losses if config.restarts > 1 else [],
            max_view_linf=max_view_linf,
            wall_clock_seconds=time.perf_counter() - started,
        )
        logger.info(
            f"Attack on {scene.object_id} done: A_after={a_after:.3f} N%={report.n_pct:.5f} "
            f"loss {initial_loss:.4f} -> {final_loss:.4f}"
        )
        return adversarial, report

    @staticmethod
    def max_view_change(
        rig: ViewRig,
        clean: Texture,
        adversarial: Texture,
        fragments: Sequence[FragmentBuffer],
    ) -> float:
        """Largest per-pixel change between clean and adversarial surrogate renders over the rig."""
        worst = 0.0
        for f in fragments:
            before = RenderService.shade(f, clean, None, rig.background)
            after = RenderService.shade(f, adversarial, None, rig.background)
            worst = max(worst, float(np.max(np.abs(after - before))))
        return worst
