"""
Domain Models Module

This module defines the numpy-backed records the services pass around: meshes,
textures, fragment buffers, rendered views, view rigs, classifiers and attack state.
They are immutable value types; services return new instances instead of mutating.

Models:
- Mesh: Triangle geometry with per-corner UV and normal indices
- Texture: H x W x 3 color grid in [0, 1]
- FragmentBuffer: Per-pixel rasterization record
- RenderedView: Image plus the fragments that produced it
- ViewRig: Cameras, lights and background of the expectation distribution
- SceneObject: Mesh, texture and label of one object
- ClassifierModel: Layer spec plus flat weight store
- LabeledView: Training/evaluation sample
- SaliencyMap: Pixel and texel saliency with the binary mask
- AttackState: PGD iterate and its history
"""

from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Tuple

import numpy as np

from app.models.schemas import RGB, Camera, ClassifierSpec, DirectionalLight, RendererKind


@dataclass(frozen=True)
class Mesh:
    """
    Triangle mesh. Indices are 0-based.

    Attributes:
        vertices (np.ndarray): (V, 3) positions
        uvs (np.ndarray): (T, 2) texture coordinates in [0, 1]
        normals (np.ndarray): (N, 3) unit normals
        face_vertices (np.ndarray): (F, 3) vertex indices
        face_uvs (np.ndarray): (F, 3) UV indices
        face_normals (np.ndarray): (F, 3) normal indices
    """
    vertices: np.ndarray
    uvs: np.ndarray
    normals: np.ndarray
    face_vertices: np.ndarray
    face_uvs: np.ndarray
    face_normals: np.ndarray

    @property
    def n_faces(self) -> int:
        return int(self.face_vertices.shape[0])

    def face_areas(self, faces: Optional[np.ndarray] = None) -> np.ndarray:
        """Object-space area of every triangle, or only of the listed faces."""
        tri = self.vertices[self.face_vertices if faces is None else self.face_vertices[faces]]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


@dataclass(frozen=True)
class Texture:
    """
    Color texture.

    Attributes:
        data (np.ndarray): (H, W, 3) float64 values in [0, 1]
    """
    data: np.ndarray

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def n_texels(self) -> int:
        return self.height * self.width

    def scaled(self, factor: float) -> "Texture":
        return Texture(self.data * factor)


@dataclass(frozen=True)
class FragmentBuffer:
    """
    Per-pixel rasterization record of one view.

    Uncovered pixels have face_id -1 and zero weights.

    Attributes:
        face_id (np.ndarray): (H, W) covering face, -1 when none
        barycentrics (np.ndarray): (H, W, 3) perspective-correct barycentrics
        normal (np.ndarray): (H, W, 3) interpolated unit normal
        position (np.ndarray): (H, W, 3) interpolated object-space position
        depth (np.ndarray): (H, W) view depth, inf when uncovered
        texel_index (np.ndarray): (H, W, 4) flat texel indices of the bilinear footprint
        texel_weight (np.ndarray): (H, W, 4) bilinear weights
        texture_shape (Tuple[int, int]): (H, W) of the texture the footprint addresses
        shading (Optional[np.ndarray]): (H, W) ambient + diffuse * max(0, n.l), set by lighting
    """
    face_id: np.ndarray
    barycentrics: np.ndarray
    normal: np.ndarray
    position: np.ndarray
    depth: np.ndarray
    texel_index: np.ndarray
    texel_weight: np.ndarray
    texture_shape: Tuple[int, int]
    shading: Optional[np.ndarray] = None

    @property
    def covered(self) -> np.ndarray:
        return self.face_id >= 0

    @property
    def image_shape(self) -> Tuple[int, int]:
        return (int(self.face_id.shape[0]), int(self.face_id.shape[1]))

    def with_shading(self, shading: np.ndarray) -> "FragmentBuffer":
        return replace(self, shading=shading)


@dataclass(frozen=True)
class RenderedView:
    """
    Rendered image with the fragments retained for backprop.

    Attributes:
        image (np.ndarray): (H, W, 3) in [0, 1]
        fragments (FragmentBuffer): Fragments of the render
        view_id (int): Rig entry index
    """
    image: np.ndarray
    fragments: FragmentBuffer
    view_id: int


@dataclass(frozen=True)
class RigEntry:
    """One (camera, light) pair of the expectation distribution."""
    view_id: int
    camera: Camera
    light: DirectionalLight


@dataclass(frozen=True)
class ViewRig:
    """
    Cameras and lights sampled for the expectation, plus a uniform background.

    Entries are the cartesian product views x lights in view-major order.

    Attributes:
        views (Tuple[Camera, ...]): Cameras, all with the same resolution
        light (DirectionalLight): Main light
        background (RGB): Uniform background color
        lights (Tuple[DirectionalLight, ...]): Lighting variations, defaults to (light,)
    """
    views: Tuple[Camera, ...]
    light: DirectionalLight
    background: RGB
    lights: Tuple[DirectionalLight, ...] = ()

    def __post_init__(self):
        if not self.views:
            raise ValueError("A view rig needs at least one camera")
        if len({cam.resolution for cam in self.views}) != 1:
            raise ValueError("All rig cameras must share the resolution")
        if not self.lights:
            object.__setattr__(self, "lights", (self.light,))

    def __len__(self) -> int:
        return len(self.views) * len(self.lights)

    def entries(self) -> Iterator[RigEntry]:
        view_id = 0
        for camera in self.views:
            for light in self.lights:
                yield RigEntry(view_id=view_id, camera=camera, light=light)
                view_id += 1

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.views[0].resolution

    def with_background(self, background: RGB) -> "ViewRig":
        return replace(self, background=tuple(float(c) for c in background))


@dataclass(frozen=True)
class SceneObject:
    """
    The attacked object: geometry, texture and ground-truth label.

    Attributes:
        object_id (str): Identifier
        label (int): Class index
        mesh (Mesh): Geometry (never modified by the attack)
        texture (Texture): Base texture t0
    """
    object_id: str
    label: int
    mesh: Mesh
    texture: Texture

    def with_texture(self, texture: Texture) -> "SceneObject":
        return replace(self, texture=texture)


@dataclass
class ClassifierModel:
    """
    Convolutional classifier with a flat float32 weight store.

    Layer weights are views into ``weights``; the training loop is the only
    writer and owns the model exclusively while it runs.

    Attributes:
        spec (ClassifierSpec): Architecture
        weights (np.ndarray): Flat float32 parameter store
        classifier_id (str): Identifier used in reports
    """
    spec: ClassifierSpec
    weights: np.ndarray
    classifier_id: str = ""

    @property
    def n_classes(self) -> int:
        return self.spec.n_classes

    @property
    def resolution(self) -> int:
        return self.spec.resolution


@dataclass(frozen=True)
class LabeledView:
    """
    Annotated image.

    Attributes:
        image (np.ndarray): (H, W, 3) in [0, 1]
        label (int): Class index
        view_id (int): Rig entry index
        renderer (RendererKind): Which renderer produced it
        object_id (str): Source object
    """
    image: np.ndarray
    label: int
    view_id: int
    renderer: RendererKind
    object_id: str = ""


@dataclass(frozen=True)
class SaliencyMap:
    """
    Saliency of the target renderer projected onto texture space.

    Attributes:
        pixel_saliency (Tuple[np.ndarray, ...]): Per-view (H, W) raw saliency
        texel_saliency (np.ndarray): (Ht, Wt) normalized accumulated saliency
        threshold (float): tau_S
        mask (np.ndarray): (Ht, Wt) boolean, texel_saliency >= threshold
    """
    pixel_saliency: Tuple[np.ndarray, ...]
    texel_saliency: np.ndarray
    threshold: float
    mask: np.ndarray

    @property
    def mask_fraction(self) -> float:
        return float(self.mask.mean())


@dataclass
class AttackState:
    """
    PGD iterate. Owned exclusively by the attack loop.

    Attributes:
        base (np.ndarray): t0, (H, W, 3)
        current (np.ndarray): t^t
        step (int): Step index
        losses (List[float]): Expected loss before every step
        mask (Optional[np.ndarray]): (H, W) boolean texel mask
    """
    base: np.ndarray
    current: np.ndarray
    step: int = 0
    losses: List[float] = field(default_factory=list)
    mask: Optional[np.ndarray] = None

    def mask_multiplier(self) -> np.ndarray:
        """Mask broadcast to the texture shape, all ones without saliency."""
        if self.mask is None:
            return np.ones_like(self.base)
        return np.repeat(self.mask[:, :, None].astype(self.base.dtype), 3, axis=2)
