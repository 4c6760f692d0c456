"""
Texture Service

Procedural texture patterns and lossless 8-bit image input/output. Texture
values live on the 8-bit grid (k/255) so a saved and reloaded texture is
bitwise identical to the in-memory one.
"""

from typing import Optional

import numpy as np
from PIL import Image

from app.exceptions import ShapeMismatch
from app.models.models import Texture
from app.models.schemas import TexturePattern
from app.utils.files import staged_path
from app.utils.logging_config import get_logger

logger = get_logger("texture_service")


class TextureService:
    """
    Service for creating, quantizing, loading and saving textures.
    """

    @staticmethod
    def make_pattern(pattern: TexturePattern) -> Texture:
        """
        Render a deterministic procedural pattern.

        Args:
            pattern: Pattern description

        Returns:
            Texture: size x size texture on the 8-bit grid
        """
        size = pattern.size
        coords = np.arange(size)
        cell = size / pattern.count
        c0 = np.asarray(pattern.colors[0], dtype=np.float64)
        c1 = np.asarray(pattern.colors[1], dtype=np.float64)

        if pattern.kind == "checker":
            cells = (coords // cell).astype(np.int64)
            t = ((cells[:, None] + cells[None, :]) % 2).astype(np.float64)
        elif pattern.kind == "stripes":
            cells = (coords // cell).astype(np.int64)
            t = np.broadcast_to((cells % 2).astype(np.float64)[None, :], (size, size))
        else:
            rng = np.random.default_rng(pattern.seed)
            grid = rng.random((pattern.count, pattern.count))
            cells = np.minimum((coords // cell).astype(np.int64), pattern.count - 1)
            t = grid[cells[:, None], cells[None, :]]

        data = c0[None, None, :] * (1.0 - t[:, :, None]) + c1[None, None, :] * t[:, :, None]
        return Texture(TextureService.to_grid(data))

    @staticmethod
    def to_grid(data: np.ndarray) -> np.ndarray:
        """Snap values in [0, 1] to the nearest 8-bit level."""
        return np.round(np.clip(data, 0.0, 1.0) * 255.0) / 255.0

    @staticmethod
    def quantize_in_ball(texture: np.ndarray, base: np.ndarray, epsilon: float) -> np.ndarray:
        """
        Snap a texture to the 8-bit grid without leaving the epsilon ball around base.

        Base must already lie on the grid; levels are rounded then clamped to the
        grid levels inside [base - epsilon, base + epsilon] and [0, 1].

        Args:
            texture: Perturbed texture
            base: Grid-aligned reference texture
            epsilon: Ball radius

        Returns:
            np.ndarray: Grid-aligned texture in the ball
        """
        if texture.shape != base.shape:
            raise ShapeMismatch(f"Texture shape {texture.shape} != base shape {base.shape}")
        levels = np.round(texture * 255.0)
        base_levels = np.round(base * 255.0)
        reach = np.floor(epsilon * 255.0 + 1e-9)
        low = np.maximum(base_levels - reach, 0.0)
        high = np.minimum(base_levels + reach, 255.0)
        return np.clip(levels, low, high) / 255.0

    @staticmethod
    def load_texture(path: str) -> Texture:
        """
        Load an 8-bit RGB image as a texture in [0, 1].

        Args:
            path: Image file

        Returns:
            Texture: The texture
        """
        with Image.open(path) as image:
            data = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
        if min(data.shape[:2]) < 4:
            raise ShapeMismatch(f"Texture {path} is smaller than 4x4", path=path)
        return Texture(data)

    @staticmethod
    def save_texture(texture: Texture, path: str, force: bool = False) -> None:
        """Save a texture as a lossless 8-bit RGB PNG, atomically."""
        with staged_path(path, force) as temp:
            Image.fromarray(TextureService.to_bytes(texture.data)).save(temp, format="PNG")
        logger.debug(f"Texture written to {path}")

    @staticmethod
    def to_bytes(data: np.ndarray) -> np.ndarray:
        return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)

    @staticmethod
    def save_grayscale(values: np.ndarray, path: str) -> None:
        """Save a (H, W) array in [0, 1] as an 8-bit grayscale PNG."""
        Image.fromarray(TextureService.to_bytes(values)).save(path, format="PNG")

    @staticmethod
    def save_heatmap(values: np.ndarray, path: str, mask: Optional[np.ndarray] = None) -> None:
        """
        Save a (H, W) array in [0, 1] with a blue (low) to red (high) colormap.

        Args:
            values: Normalized values
            path: Output PNG
            mask: Optional boolean mask; texels outside it are drawn dark
        """
        v = np.clip(values, 0.0, 1.0)
        rgb = np.stack([v, 1.0 - np.abs(2.0 * v - 1.0), 1.0 - v], axis=2)
        if mask is not None:
            rgb = np.where(mask[:, :, None], rgb, rgb * 0.25)
        Image.fromarray(TextureService.to_bytes(rgb)).save(path, format="PNG")
