"""
Render Service

The differentiable surrogate renderer: hard z-buffer rasterization, bilinear
texture sampling with clamp-to-edge and Lambert + ambient shading. Geometry and
lighting do not depend on the texture, so the texture gradient computed from the
fragment buffer is exact.
"""

from typing import List, Optional, Tuple

import numpy as np

from app.exceptions import ShapeMismatch
from app.models.models import FragmentBuffer, Mesh, RenderedView, SceneObject, Texture, ViewRig
from app.models.schemas import RGB, Camera, DirectionalLight
from app.services.scene_service import NEAR_PLANE, SceneService
from app.utils.logging_config import get_logger
from app.utils.parallel import ordered_map

logger = get_logger("render_service")


class RenderService:
    """
    Service for surrogate rendering and texture backpropagation.
    """

    @staticmethod
    def rasterize(mesh: Mesh, camera: Camera, texture_shape: Tuple[int, int] = (64, 64)) -> FragmentBuffer:
        """
        Rasterize the mesh: nearest front-facing triangle per pixel via z-buffer,
        perspective-correct barycentrics and the bilinear texel footprint of the
        interpolated UV.

        Faces are scanned in id order and a pixel only changes owner on a strictly
        nearer depth, so depth ties go to the lower face id. Triangles with a vertex
        behind the near plane are skipped.

        Args:
            mesh: Geometry
            camera: Camera
            texture_shape: (height, width) of the texture the footprint addresses

        Returns:
            FragmentBuffer: Fragments without shading
        """
        width, height = camera.width, camera.height
        view, projection = SceneService.camera_matrices(camera)
        homogeneous = np.concatenate([mesh.vertices, np.ones((len(mesh.vertices), 1))], axis=1)
        clip = homogeneous @ (projection @ view).T
        w = clip[:, 3]
        safe_w = np.where(w > NEAR_PLANE, w, 1.0)
        ndc = clip[:, :2] / safe_w[:, None]

        face_id = np.full((height, width), -1, dtype=np.int64)
        depth = np.full((height, width), np.inf)
        bary = np.zeros((height, width, 3))

        # Centros de pixel en coordenadas NDC (y hacia arriba)
        px_x = (np.arange(width) + 0.5) / width * 2.0 - 1.0
        px_y = 1.0 - (np.arange(height) + 0.5) / height * 2.0

        for f, (i0, i1, i2) in enumerate(mesh.face_vertices):
            if w[i0] <= NEAR_PLANE or w[i1] <= NEAR_PLANE or w[i2] <= NEAR_PLANE:
                continue
            (x0, y0), (x1, y1), (x2, y2) = ndc[i0], ndc[i1], ndc[i2]
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if area <= 0.0:
                continue  # back-facing or degenerate on screen

            cols = np.flatnonzero((px_x >= min(x0, x1, x2)) & (px_x <= max(x0, x1, x2)))
            rows = np.flatnonzero((px_y >= min(y0, y1, y2)) & (px_y <= max(y0, y1, y2)))
            if cols.size == 0 or rows.size == 0:
                continue
            gx = px_x[cols][None, :]
            gy = px_y[rows][:, None]
            l0 = ((x1 - gx) * (y2 - gy) - (x2 - gx) * (y1 - gy)) / area
            l1 = ((x2 - gx) * (y0 - gy) - (x0 - gx) * (y2 - gy)) / area
            l2 = 1.0 - l0 - l1
            inside = (l0 >= 0.0) & (l1 >= 0.0) & (l2 >= 0.0)
            if not np.any(inside):
                continue

            p0, p1, p2 = l0 / w[i0], l1 / w[i1], l2 / w[i2]
            inv_depth = p0 + p1 + p2
            z = 1.0 / inv_depth
            window = (rows[:, None], cols[None, :])
            closer = inside & (z < depth[window])
            if not np.any(closer):
                continue
            r, c = np.nonzero(closer)
            rr, cc = rows[r], cols[c]
            face_id[rr, cc] = f
            depth[rr, cc] = z[r, c]
            bary[rr, cc, 0] = p0[r, c] * z[r, c]
            bary[rr, cc, 1] = p1[r, c] * z[r, c]
            bary[rr, cc, 2] = p2[r, c] * z[r, c]

        covered = face_id >= 0
        normal = np.zeros((height, width, 3))
        position = np.zeros((height, width, 3))
        texel_index = np.zeros((height, width, 4), dtype=np.int64)
        texel_weight = np.zeros((height, width, 4))
        if np.any(covered):
            faces = face_id[covered]
            b = bary[covered]
            uv = np.einsum("pk,pkj->pj", b, mesh.uvs[mesh.face_uvs[faces]])
            n = np.einsum("pk,pkj->pj", b, mesh.normals[mesh.face_normals[faces]])
            n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
            normal[covered] = n
            position[covered] = np.einsum("pk,pkj->pj", b, mesh.vertices[mesh.face_vertices[faces]])
            idx, weights = RenderService.bilinear_footprint(uv, texture_shape)
            texel_index[covered] = idx
            texel_weight[covered] = weights

        return FragmentBuffer(
            face_id=face_id,
            barycentrics=bary,
            normal=normal,
            position=position,
            depth=depth,
            texel_index=texel_index,
            texel_weight=texel_weight,
            texture_shape=tuple(texture_shape),
        )

    @staticmethod
    def bilinear_footprint(uv: np.ndarray, texture_shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Four texel indices and bilinear weights for each UV, clamp-to-edge.

        v = 0 is the bottom row of the texture image.

        Args:
            uv: (P, 2) coordinates
            texture_shape: (height, width)

        Returns:
            Tuple[np.ndarray, np.ndarray]: (P, 4) flat indices and (P, 4) weights summing to 1
        """
        tex_h, tex_w = texture_shape
        x = uv[:, 0] * tex_w - 0.5
        y = (1.0 - uv[:, 1]) * tex_h - 0.5
        x0, y0 = np.floor(x), np.floor(y)
        fx, fy = x - x0, y - y0
        xa = np.clip(x0, 0, tex_w - 1).astype(np.int64)
        xb = np.clip(x0 + 1, 0, tex_w - 1).astype(np.int64)
        ya = np.clip(y0, 0, tex_h - 1).astype(np.int64)
        yb = np.clip(y0 + 1, 0, tex_h - 1).astype(np.int64)
        index = np.stack([ya * tex_w + xa, ya * tex_w + xb, yb * tex_w + xa, yb * tex_w + xb], axis=1)
        weight = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1)
        return index, weight

    @staticmethod
    def compute_shading(fragments: FragmentBuffer, light: DirectionalLight) -> FragmentBuffer:
        """
        Attach the shading scalar ambient + diffuse * max(0, n.l) to the fragments.

        Args:
            fragments: Fragments from rasterize
            light: Directional light

        Returns:
            FragmentBuffer: Copy with shading, zero on uncovered pixels
        """
        direction = SceneService.light_direction(light)
        n_dot_l = np.clip(fragments.normal @ direction, 0.0, 1.0)
        shading = np.minimum(light.ambient_strength + light.diffuse_strength * n_dot_l, 1.0)
        return fragments.with_shading(np.where(fragments.covered, shading, 0.0))

    @staticmethod
    def bilinear_sample(texture: Texture, fragments: FragmentBuffer) -> np.ndarray:
        """
        Sample the texture through the fragment footprints.

        Args:
            texture: Texture
            fragments: Fragments addressing a texture of the same shape

        Returns:
            np.ndarray: (H, W, 3) colors, zero on uncovered pixels
        """
        if (texture.height, texture.width) != tuple(fragments.texture_shape):
            raise ShapeMismatch(
                f"Texture {texture.height}x{texture.width} does not match fragments "
                f"{fragments.texture_shape}"
            )
        flat = texture.data.reshape(-1, 3)
        samples = np.einsum("hwk,hwkc->hwc", fragments.texel_weight, flat[fragments.texel_index])
        return samples

    @staticmethod
    def shade(
        fragments: FragmentBuffer,
        texture: Texture,
        light: Optional[DirectionalLight],
        background: RGB,
    ) -> np.ndarray:
        """
        Lambert + ambient shading, no gamma.

        Args:
            fragments: Fragments; their shading is used when light is None
            texture: Texture
            light: Light, or None to reuse the stored shading
            background: Color of uncovered pixels

        Returns:
            np.ndarray: (H, W, 3) image
        """
        if light is not None:
            fragments = RenderService.compute_shading(fragments, light)
        elif fragments.shading is None:
            raise ShapeMismatch("Fragments carry no shading and no light was given")
        color = RenderService.bilinear_sample(texture, fragments) * fragments.shading[:, :, None]
        image = np.where(fragments.covered[:, :, None], color, np.asarray(background, dtype=np.float64))
        # Solo recorta el redondeo; el modelo ya garantiza [0, 1]
        return np.clip(image, 0.0, 1.0)

    @staticmethod
    def render_surrogate(
        scene: SceneObject,
        camera: Camera,
        light: DirectionalLight,
        background: RGB,
        texture: Optional[Texture] = None,
        view_id: int = 0,
    ) -> RenderedView:
        """
        Rasterize then shade; the fragments are kept for backprop.

        Args:
            scene: Object
            camera: Camera
            light: Light
            background: Background color
            texture: Texture to use instead of the object's base texture
            view_id: Rig entry index

        Returns:
            RenderedView: Image and fragments
        """
        texture = texture if texture is not None else scene.texture
        fragments = RenderService.rasterize(scene.mesh, camera, (texture.height, texture.width))
        fragments = RenderService.compute_shading(fragments, light)
        image = RenderService.shade(fragments, texture, None, background)
        return RenderedView(image=image, fragments=fragments, view_id=view_id)

    @staticmethod
    def rasterize_rig(scene: SceneObject, rig: ViewRig, threads: int = 1) -> List[FragmentBuffer]:
        """
        Shaded fragments for every rig entry, rasterizing each camera once.

        Args:
            scene: Object
            rig: View rig
            threads: Worker threads for the per-camera rasterization

        Returns:
            List[FragmentBuffer]: One per rig entry, in rig order
        """
        shape = (scene.texture.height, scene.texture.width)
        per_camera = ordered_map(lambda cam: RenderService.rasterize(scene.mesh, cam, shape), rig.views, threads)
        fragments = []
        for camera_index, base in enumerate(per_camera):
            for light in rig.lights:
                fragments.append(RenderService.compute_shading(base, light))
        logger.debug(f"Rasterized {len(rig.views)} cameras for {scene.object_id}")
        return fragments

    @staticmethod
    def backprop_texture(fragments: FragmentBuffer, image_gradient: np.ndarray) -> np.ndarray:
        """
        Pull an image-space gradient back onto the texels.

        Each covered pixel sends its gradient to its 4 footprint texels scaled by
        bilinear weight x shading. Accumulation runs in pixel-scan order.

        Args:
            fragments: Shaded fragments of the render
            image_gradient: (H, W, 3) dLoss/dImage

        Returns:
            np.ndarray: (Ht, Wt, 3) dLoss/dTexture

        Raises:
            ShapeMismatch: If the gradient does not match the image
        """
        height, width = fragments.image_shape
        if image_gradient.shape != (height, width, 3):
            raise ShapeMismatch(
                f"Image gradient shape {image_gradient.shape} != ({height}, {width}, 3)"
            )
        if fragments.shading is None:
            raise ShapeMismatch("Fragments carry no shading")
        tex_h, tex_w = fragments.texture_shape
        covered = fragments.covered
        index = fragments.texel_index[covered].reshape(-1)
        scale = (fragments.texel_weight[covered] * fragments.shading[covered][:, None]).reshape(-1)
        grads = np.repeat(image_gradient[covered], 4, axis=0) * scale[:, None]

        out = np.empty((tex_h * tex_w, 3))
        for channel in range(3):
            out[:, channel] = np.bincount(index, weights=grads[:, channel], minlength=tex_h * tex_w)
        return out.reshape(tex_h, tex_w, 3)
