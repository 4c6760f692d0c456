"""
Pydantic Schemas Module

This module defines the Pydantic models used for validation and serialization of
everything that crosses a file or command boundary: cameras, lights, scene
configuration documents, attack and training settings, classifier specs, reports
and run manifests.

Configuration models forbid unknown keys (fail-closed parsing).
"""

import enum
import re
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

RGB = Tuple[float, float, float]

WHITE: RGB = (1.0, 1.0, 1.0)
BLACK: RGB = (0.0, 0.0, 0.0)


class StrictModel(BaseModel):
    """Base for configuration documents: unknown keys are an error."""
    model_config = ConfigDict(extra="forbid", frozen=True)


class PrimitiveKind(str, enum.Enum):
    """
    Procedural object kinds.

    Attributes:
        CUBE: Unit cube with shared corners
        UV_SPHERE: Latitude/longitude sphere
        TORUS: Ring torus
        CYLINDER: Capped cylinder
        CONE: Capped cone
    """
    CUBE = "cube"
    UV_SPHERE = "uv-sphere"
    TORUS = "torus"
    CYLINDER = "cylinder"
    CONE = "cone"


class RendererKind(str, enum.Enum):
    """
    Renderer tags.

    Attributes:
        SURROGATE: Differentiable diffuse renderer (white-box)
        TARGET: Specular + gamma renderer (black-box)
    """
    SURROGATE = "surrogate"
    TARGET = "target"


# Texture patterns
_PATTERN_RE = re.compile(r"^(checker|stripes|noise)-(\d+)$")


class TexturePattern(StrictModel):
    """
    Procedural texture description.

    Attributes:
        kind (str): checker, stripes or noise
        count (int): Number of checks/stripes/noise cells per side
        size (int): Texture side in texels
        colors (Tuple[RGB, RGB]): Two colors; noise interpolates between them
        seed (int): Seed for the noise pattern
    """
    kind: Literal["checker", "stripes", "noise"]
    count: int = Field(ge=1)
    size: int = Field(default=64, ge=4)
    colors: Tuple[RGB, RGB] = ((0.1, 0.1, 0.1), (0.9, 0.9, 0.9))
    seed: int = 0

    @classmethod
    def parse(cls, text: str, **overrides) -> "TexturePattern":
        """
        Parse a short pattern spec such as ``checker-8`` or ``stripes-4``.

        Args:
            text: Pattern spec
            **overrides: Extra fields (size, colors, seed)

        Returns:
            TexturePattern: The parsed pattern

        Raises:
            ValueError: If the string does not match ``<kind>-<count>``
        """
        match = _PATTERN_RE.match(text.strip())
        if not match:
            raise ValueError(f"Unsupported texture pattern spec: {text!r}")
        return cls(kind=match.group(1), count=int(match.group(2)), **overrides)


class MeshViolation(BaseModel):
    """
    One broken mesh invariant.

    Attributes:
        invariant (str): index_range, uv_range, unit_normal or degenerate_face
        element (str): vertex, uv, normal or face
        index (int): Offending element index (0-based)
        detail (str): Description
    """
    invariant: str
    element: str
    index: int
    detail: str = ""


# Scene schemas
class Camera(StrictModel):
    """
    Orbit camera looking at the origin with +Y up.

    Attributes:
        distance (float): Distance from the origin
        azimuth (float): Degrees in [0, 360)
        elevation (float): Degrees in [-89, 89]
        fov_y (float): Vertical field of view in degrees
        width (int): Image width in pixels
        height (int): Image height in pixels
    """
    distance: float = Field(gt=0)
    azimuth: float = Field(ge=0, lt=360)
    elevation: float = Field(ge=-89, le=89)
    fov_y: float = Field(default=45.0, gt=1, lt=179)
    width: int = Field(default=128, ge=16)
    height: int = Field(default=128, ge=16)

    @property
    def resolution(self) -> Tuple[int, int]:
        return (self.width, self.height)


class DirectionalLight(StrictModel):
    """
    Directional light placed on the unit sphere by azimuth/elevation.

    Attributes:
        azimuth (float): Degrees, 0 is the front of the object (+Z)
        elevation (float): Degrees
        diffuse_strength (float): Lambert weight in [0, 1]
        ambient_strength (float): Ambient weight in [0, 1]
    """
    azimuth: float = 0.0
    elevation: float = 75.0
    diffuse_strength: float = Field(default=0.7, ge=0, le=1)
    ambient_strength: float = Field(default=0.3, ge=0, le=1)

    @model_validator(mode="after")
    def check_energy(self) -> "DirectionalLight":
        # ambient + diffuse <= 1 keeps every shading scalar inside [0, 1]
        if self.diffuse_strength + self.ambient_strength > 1.0 + 1e-12:
            raise ValueError("diffuse_strength + ambient_strength must not exceed 1")
        return self


class TargetSettings(StrictModel):
    """
    Target renderer settings. Only the target renderer and saliency read these.

    Attributes:
        spec_strength (float): Blinn-Phong highlight weight
        shininess (float): Blinn-Phong exponent
        gamma (bool): Apply gamma encoding
        gamma_value (float): Encoding exponent is 1/gamma_value
    """
    spec_strength: float = Field(default=0.4, ge=0, le=1)
    shininess: float = Field(default=16.0, gt=0)
    gamma: bool = True
    gamma_value: float = Field(default=2.2, gt=0)

    @property
    def is_degenerate(self) -> bool:
        """True when the target renders exactly like the surrogate."""
        return self.spec_strength == 0 and not self.gamma


class ObjectSettings(StrictModel):
    """
    Object section of a scene configuration.

    Attributes:
        id (str): Object identifier used in reports and file names
        label (int): Ground-truth class index
        mesh_path (str): OBJ file, relative to the config file
        texture_path (str): PNG texture, relative to the config file
    """
    id: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    label: int = Field(ge=0)
    mesh_path: str
    texture_path: str


class RigSettings(StrictModel):
    """
    Multi-view rig parameters.

    Attributes:
        n_views (int): Number of cameras
        distance (float): Camera distance
        elevation_min (float): Lowest elevation in degrees
        elevation_max (float): Highest elevation in degrees
        elevation_levels (int): Size of the elevation grid cycled across views
        fov_y (float): Vertical field of view
        resolution (Tuple[int, int]): (width, height)
    """
    n_views: int = Field(default=60, ge=1)
    distance: float = Field(default=2.5, gt=0)
    elevation_min: float = Field(default=0.0, ge=-89, le=89)
    elevation_max: float = Field(default=40.0, ge=-89, le=89)
    elevation_levels: int = Field(default=4, ge=1)
    fov_y: float = Field(default=45.0, gt=1, lt=179)
    resolution: Tuple[int, int] = (128, 128)

    @model_validator(mode="after")
    def check_ranges(self) -> "RigSettings":
        if self.elevation_min > self.elevation_max:
            raise ValueError("elevation_min must not exceed elevation_max")
        if min(self.resolution) < 16:
            raise ValueError("resolution components must be >= 16")
        return self


class SceneConfig(StrictModel):
    """
    Scene configuration document.

    Attributes:
        object (ObjectSettings): Object, label and asset paths
        rig (RigSettings): Camera rig
        light (DirectionalLight): Main light
        lights (Optional[List[DirectionalLight]]): Lighting variations for the expectation
        background (Union[str, RGB]): RGB color or "auto" (chosen by the classifier)
        target (TargetSettings): Target renderer settings
    """
    object: ObjectSettings
    rig: RigSettings = RigSettings()
    light: DirectionalLight = DirectionalLight()
    lights: Optional[List[DirectionalLight]] = None
    background: Union[Literal["auto"], RGB] = "auto"
    target: TargetSettings = TargetSettings()

    @field_validator("background")
    @classmethod
    def check_background(cls, value):
        if value != "auto" and any(c < 0 or c > 1 for c in value):
            raise ValueError("background components must lie in [0, 1]")
        return value

    @field_validator("lights")
    @classmethod
    def check_lights(cls, value):
        if value is not None and len(value) == 0:
            raise ValueError("lights must be non-empty when given")
        return value

    def rig_lights(self) -> List[DirectionalLight]:
        """Lights of the expectation distribution, the main light when no list is given."""
        return list(self.lights) if self.lights else [self.light]


# Attack and training schemas
class AttackConfig(StrictModel):
    """
    EOT-PGD settings.

    Attributes:
        epsilon (float): L-infinity radius in texture space, in (0, 1]
        alpha (float): Step length
        n_steps (int): Number of PGD steps
        view_batch (Optional[int]): Views per gradient estimate, None means all views
        saliency_threshold (Optional[float]): tau_S in (0, 1), None disables the mask
        seed (int): Seed for random start and batch order
        random_start (bool): Start from a uniform point in the ball
        restarts (int): Number of random restarts (requires random_start when > 1)
        quantize (bool): Snap the final texture to the 8-bit grid inside the ball
    """
    epsilon: float = Field(gt=0, le=1)
    alpha: float = Field(default=0.01, gt=0)
    n_steps: int = Field(default=100, ge=0)
    view_batch: Optional[int] = Field(default=None, ge=1)
    saliency_threshold: Optional[float] = Field(default=None, gt=0, lt=1)
    seed: int = 0
    random_start: bool = False
    restarts: int = Field(default=1, ge=1)
    quantize: bool = True

    @model_validator(mode="after")
    def check_steps(self) -> "AttackConfig":
        if self.alpha > self.epsilon:
            raise ValueError("alpha must not exceed epsilon")
        if self.restarts > 1 and not self.random_start:
            raise ValueError("restarts > 1 requires random_start")
        return self


class TrainingConfig(StrictModel):
    """
    Classifier training hyperparameters.

    Attributes:
        learning_rate (float): SGD step
        momentum (float): Momentum coefficient
        batch_size (int): Minibatch size
        epochs (int): Passes over the corpus
        max_steps (Optional[int]): Optional cap on the number of updates
        seed (int): Seed for initialization and shuffling
    """
    learning_rate: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    batch_size: int = Field(default=32, ge=1)
    epochs: int = Field(default=20, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    seed: int = 0


class ConvBlock(StrictModel):
    """3x3 convolution + ReLU."""
    width: int = Field(ge=1)
    stride: int = Field(default=2, ge=1)
    kernel: int = Field(default=3, ge=1)


class ClassifierSpec(StrictModel):
    """
    Classifier architecture: conv blocks, global average pool, linear head.

    Attributes:
        blocks (List[ConvBlock]): Convolution blocks in order
        n_classes (int): Number of classes (>= 2)
        resolution (int): Square input side in pixels
    """
    blocks: List[ConvBlock]
    n_classes: int = Field(ge=2)
    resolution: int = Field(default=128, ge=4)

    @classmethod
    def preset(cls, name: str, n_classes: int, resolution: int = 128) -> "ClassifierSpec":
        """
        Build a named architecture.

        Args:
            name: "standard" (16/32/64/128) or "compact" (8/16/32/64)
            n_classes: Number of classes
            resolution: Input side

        Returns:
            ClassifierSpec: The spec
        """
        widths = {"standard": (16, 32, 64, 128), "compact": (8, 16, 32, 64)}
        if name not in widths:
            raise ValueError(f"Unknown classifier preset: {name}")
        return cls(
            blocks=[ConvBlock(width=w) for w in widths[name]],
            n_classes=n_classes,
            resolution=resolution,
        )


# Report schemas
class ViewPrediction(BaseModel):
    """
    Prediction pair for one rig view.

    Attributes:
        view_id (int): Index in the rig
        clean (int): Prediction on the clean texture
        adversarial (int): Prediction on the adversarial texture
    """
    view_id: int
    clean: int
    adversarial: int


class AttackReport(BaseModel):
    """
    Outcome of one attack evaluated on one renderer.

    ``a_drop`` is None when the clean accuracy is zero ("n.a.").
    ``wall_clock_seconds`` is kept out of the serialized report so primary outputs
    stay byte-stable; it is recorded in the run manifest instead.
    """
    object_id: str
    label: int
    renderer: RendererKind
    classifier_id: str
    epsilon: float
    alpha: float
    n_steps: int
    view_batch: Optional[int] = None
    tau: Optional[float] = None
    seed: int = 0
    random_start: bool = False
    restarts: int = 1
    a_before: float = Field(ge=0, le=1)
    a_after: float = Field(ge=0, le=1)
    a_drop: Optional[float] = Field(default=None, le=1)
    n_pct: float = Field(ge=0)
    changed_texel_fraction: float = Field(ge=0, le=1)
    mask_fraction: float = Field(default=1.0, ge=0, le=1)
    predictions: List[ViewPrediction] = []
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    loss_trajectory: List[float] = []
    restart_losses: List[float] = []
    max_view_linf: Optional[float] = None
    wall_clock_seconds: float = Field(default=0.0, exclude=True)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


class EvaluationReport(BaseModel):
    """
    Accuracy of one texture over the rig under one renderer.

    Attributes:
        object_id (str): Object identifier
        label (int): Ground-truth class
        renderer (RendererKind): Renderer used
        classifier_id (str): Classifier identifier
        texture_digest (str): SHA-256 of the evaluated texture file
        accuracy (float): Fraction of correct views
        predictions (List[int]): Prediction per view
    """
    object_id: str
    label: int
    renderer: RendererKind
    classifier_id: str
    texture_digest: str
    accuracy: float = Field(ge=0, le=1)
    predictions: List[int]


class RunManifest(BaseModel):
    """
    Reproducibility envelope written next to every command output.

    Attributes:
        command (str): Subcommand name
        config (Dict): Resolved configuration snapshot
        inputs (Dict[str, str]): Input path -> SHA-256 digest
        outputs (Dict[str, str]): Output path -> SHA-256 digest
        seed (int): Seed of the run
        tool_version (str): Package version
        wall_clock_seconds (float): Duration of the run
    """
    command: str
    config: Dict
    inputs: Dict[str, str] = {}
    outputs: Dict[str, str] = {}
    seed: int = 0
    tool_version: str
    wall_clock_seconds: float = 0.0
