"""
Saliency Service

Texel mask of the regions the target renderer is sensitive to: loss gradients
are taken on target renders, then projected onto the texture through the
surrogate fragment buffers of the same rig, accumulated, normalized and
thresholded.
"""

import os
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

from app.exceptions import InvalidThreshold, RigMismatch
from app.models.models import ClassifierModel, FragmentBuffer, SaliencyMap, SceneObject, ViewRig
from app.models.schemas import RendererKind, TargetSettings
from app.services.classifier_service import ClassifierService
from app.services.render_service import RenderService
from app.services.target_render_service import TargetRenderService
from app.services.texture_service import TextureService
from app.utils.files import staged_path
from app.utils.logging_config import get_logger
from app.utils.parallel import ordered_map

logger = get_logger("saliency_service")


class SaliencyService:
    """
    Service for building and exporting saliency masks.
    """

    @staticmethod
    def view_saliency(classifier: ClassifierModel, image: np.ndarray, y: int) -> np.ndarray:
        """
        Per-pixel max over color channels of |dLoss/dPixel|, unnormalized.

        Args:
            classifier: Classifier
            image: Target-rendered (H, W, 3) image
            y: Ground-truth class

        Returns:
            np.ndarray: (H, W) saliency
        """
        return np.max(np.abs(ClassifierService.grad_input(classifier, image, y)), axis=2)

    @staticmethod
    def splat_to_texels(
        pixel_saliencies: Sequence[np.ndarray],
        fragments: Sequence[FragmentBuffer],
    ) -> np.ndarray:
        """
        Accumulate pixel saliency onto texels and rescale to [0, 1] by the global max.

        Each covered pixel adds saliency x bilinear weight to its four footprint
        texels; views are summed in rig order. An all-zero grid stays zero.

        Args:
            pixel_saliencies: Per-view (H, W) saliency
            fragments: Surrogate fragments of the same rig

        Returns:
            np.ndarray: (Ht, Wt) normalized texel saliency

        Raises:
            RigMismatch: If the view counts differ
        """
        if len(pixel_saliencies) != len(fragments):
            raise RigMismatch(
                f"{len(pixel_saliencies)} saliency maps for {len(fragments)} fragment buffers"
            )
        if not fragments:
            raise RigMismatch("Saliency needs at least one view")
        tex_h, tex_w = fragments[0].texture_shape
        total = np.zeros(tex_h * tex_w)
        for saliency, frag in zip(pixel_saliencies, fragments):
            if saliency.shape != frag.image_shape:
                raise RigMismatch(f"Saliency shape {saliency.shape} != image shape {frag.image_shape}")
            covered = frag.covered
            index = frag.texel_index[covered].reshape(-1)
            weights = (frag.texel_weight[covered] * saliency[covered][:, None]).reshape(-1)
            total += np.bincount(index, weights=weights, minlength=tex_h * tex_w)
        peak = total.max()
        if peak > 0:
            total = total / peak
        return total.reshape(tex_h, tex_w)

    @staticmethod
    def binarize(texel_saliency: np.ndarray, threshold: float) -> np.ndarray:
        """
        mask = saliency >= threshold.

        Raises:
            InvalidThreshold: If threshold is outside (0, 1)
        """
        if not 0.0 < threshold < 1.0:
            raise InvalidThreshold(f"Saliency threshold must lie in (0, 1), got {threshold}", tau=threshold)
        return texel_saliency >= threshold

    @staticmethod
    def build_saliency_mask(
        scene: SceneObject,
        rig: ViewRig,
        classifier: ClassifierModel,
        threshold: float,
        target: Optional[TargetSettings] = None,
        fragments: Optional[Sequence[FragmentBuffer]] = None,
        threads: int = 1,
    ) -> SaliencyMap:
        """
        Target renders, per-view saliency, surrogate projection, normalization, threshold.

        Args:
            scene: Object with its clean texture
            rig: View rig
            classifier: Classifier
            threshold: tau in (0, 1)
            target: Target renderer settings
            fragments: Precomputed surrogate fragments of the rig
            threads: Worker threads

        Returns:
            SaliencyMap: Pixel and texel saliency with the mask
        """
        if not 0.0 < threshold < 1.0:
            raise InvalidThreshold(f"Saliency threshold must lie in (0, 1), got {threshold}", tau=threshold)
        if fragments is None:
            fragments = RenderService.rasterize_rig(scene, rig, threads)
        images = TargetRenderService.render_rig(
            scene, rig, RendererKind.TARGET, target, fragments=fragments, threads=threads
        )
        pixel = ordered_map(
            lambda image: SaliencyService.view_saliency(classifier, image, scene.label), images, threads
        )
        texel = SaliencyService.splat_to_texels(pixel, fragments)
        mask = SaliencyService.binarize(texel, threshold)
        logger.info(
            f"Saliency for {scene.object_id}: tau={threshold}, mask covers {mask.mean():.2%} of the texels"
        )
        return SaliencyMap(
            pixel_saliency=tuple(pixel),
            texel_saliency=texel,
            threshold=threshold,
            mask=mask,
        )

    @staticmethod
    def reachable_texels(fragments: Sequence[FragmentBuffer]) -> np.ndarray:
        """(Ht, Wt) boolean map of texels with nonzero footprint weight in some view."""
        tex_h, tex_w = fragments[0].texture_shape
        reached = np.zeros(tex_h * tex_w, dtype=bool)
        for frag in fragments:
            covered = frag.covered
            index = frag.texel_index[covered].reshape(-1)
            weight = frag.texel_weight[covered].reshape(-1)
            reached[index[weight > 0]] = True
        return reached.reshape(tex_h, tex_w)

    @staticmethod
    def export_saliency(saliency: SaliencyMap, out_dir: str, prefix: str, force: bool = False) -> Dict[str, str]:
        """
        Write the gray saliency map, the colored heat map and the binary mask as PNGs.

        Args:
            saliency: Saliency map
            out_dir: Output directory
            prefix: File name prefix
            force: Overwrite existing files

        Returns:
            Dict[str, str]: Kind -> written path
        """
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "saliency": os.path.join(out_dir, f"{prefix}_saliency.png"),
            "heatmap": os.path.join(out_dir, f"{prefix}_heatmap.png"),
            "mask": os.path.join(out_dir, f"{prefix}_mask.png"),
        }
        writers: List = [
            (paths["saliency"], lambda p: TextureService.save_grayscale(saliency.texel_saliency, p)),
            (paths["heatmap"], lambda p: TextureService.save_heatmap(saliency.texel_saliency, p, saliency.mask)),
            (paths["mask"], lambda p: TextureService.save_grayscale(saliency.mask.astype(np.float64), p)),
        ]
        for path, write in writers:
            with staged_path(path, force) as temp:
                write(temp)
        logger.info(f"Saliency images written to {out_dir}")
        return paths

    @staticmethod
    def load_mask(path: str) -> np.ndarray:
        """Read a mask PNG written by export_saliency."""
        with Image.open(path) as image:
            return np.asarray(image.convert("L")) >= 128
