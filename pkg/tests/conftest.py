"""
Configuración de pruebas para el proyecto advobj.

Este archivo contiene configuraciones y fixtures compartidos para todas las pruebas:
una escena pequeña (cubo texturizado), su rig de 4 vistas a 16 px, los fragmentos
sombreados y un clasificador compacto sin entrenar.
"""

import os
import sys

import pytest

# Añadir el directorio raíz al PATH para que las importaciones funcionen
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.models.models import SceneObject
from app.models.schemas import (
    BLACK,
    ClassifierSpec,
    ObjectSettings,
    RigSettings,
    SceneConfig,
    TargetSettings,
    TexturePattern,
)
from app.services.classifier_service import ClassifierService
from app.services.mesh_service import MeshService
from app.services.render_service import RenderService
from app.services.scene_service import SceneService

TEST_RESOLUTION = 16
TEST_VIEWS = 4


@pytest.fixture
def scene_config():
    """
    Configuración de escena pequeña: 4 cámaras a 16x16 px, fondo negro.
    """
    return SceneConfig(
        object=ObjectSettings(id="cube-00", label=0, mesh_path="mesh.obj", texture_path="texture.png"),
        rig=RigSettings(n_views=TEST_VIEWS, distance=2.0, resolution=(TEST_RESOLUTION, TEST_RESOLUTION)),
        background=BLACK,
    )


@pytest.fixture
def small_scene():
    """
    Cubo con textura de tablero 16x16 en la rejilla de 8 bits.
    """
    pattern = TexturePattern(kind="checker", count=4, size=16, colors=((0.2, 0.3, 0.4), (0.8, 0.7, 0.6)))
    mesh, texture = MeshService.generate_primitive("cube", 1, pattern)
    return SceneObject(object_id="cube-00", label=0, mesh=mesh, texture=texture)


@pytest.fixture
def small_rig(scene_config):
    return SceneService.build_view_rig(scene_config)


@pytest.fixture
def small_fragments(small_scene, small_rig):
    return RenderService.rasterize_rig(small_scene, small_rig)


@pytest.fixture
def compact_classifier():
    """
    Clasificador compacto de 3 clases para imágenes de 16 px (sin entrenar).
    """
    spec = ClassifierSpec.preset("compact", 3, TEST_RESOLUTION)
    return ClassifierService.init_model(spec, seed=0, classifier_id="clf-test")


@pytest.fixture
def degenerate_target():
    """
    Ajustes del renderizador objetivo que lo reducen al sustituto.
    """
    return TargetSettings(spec_strength=0.0, gamma=False)
