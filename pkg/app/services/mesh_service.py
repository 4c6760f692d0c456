"""
Mesh Service

Parsing, validation, normal computation and procedural generation of triangle
meshes with UV parameterizations. All operations are pure functions over
immutable inputs.
"""

import io
import math
from typing import List, Optional, TextIO, Tuple, Union

import numpy as np

from app.exceptions import (
    IndexOutOfRange,
    InvalidMesh,
    IsolatedVertex,
    MalformedLine,
    MissingUV,
    UnsupportedKind,
)
from app.models.models import Mesh, Texture
from app.models.schemas import MeshViolation, PrimitiveKind, TexturePattern
from app.services.texture_service import TextureService
from app.utils.files import atomic_write_text
from app.utils.logging_config import get_logger

logger = get_logger("mesh_service")

NORMAL_TOLERANCE = 1e-5
MIN_FACE_AREA = 1e-12


class MeshService:
    """
    Service for mesh input/output and generation.

    This class provides the OBJ-subset reader and writer, the invariant checker,
    smooth normal computation and the procedural primitive corpus.
    """

    @staticmethod
    def parse_obj(text: Union[str, TextIO]) -> Mesh:
        """
        Parse the OBJ subset (v, vt, vn, f with 1-based indices, # comments).

        Polygons are fan-triangulated. When any face lacks normal indices, smooth
        vertex normals are computed for the whole mesh.

        Args:
            text: OBJ text or a character stream

        Returns:
            Mesh: The parsed mesh, satisfying every Mesh invariant

        Raises:
            MalformedLine: On any unsupported directive or unparsable value
            IndexOutOfRange: When a face references a missing element
            MissingUV: When a face corner has no UV index
            InvalidMesh: When the parsed data breaks a mesh invariant
        """
        if not isinstance(text, str):
            text = text.read()

        vertices: List[Tuple[float, float, float]] = []
        uvs: List[Tuple[float, float]] = []
        normals: List[Tuple[float, float, float]] = []
        # (line number, [(v, vt, vn|None), ...])
        polygons: List[Tuple[int, List[Tuple[int, int, Optional[int]]]]] = []

        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            directive, args = tokens[0], tokens[1:]

            if directive == "v":
                vertices.append(MeshService._parse_floats(args, 3, line_number, raw))
            elif directive == "vt":
                uvs.append(MeshService._parse_floats(args, 2, line_number, raw))
            elif directive == "vn":
                normal = np.array(MeshService._parse_floats(args, 3, line_number, raw))
                length = float(np.linalg.norm(normal))
                if length == 0.0:
                    raise MalformedLine(line_number, raw, "zero-length normal")
                normals.append(tuple(normal / length))
            elif directive == "f":
                if len(args) < 3:
                    raise MalformedLine(line_number, raw, "face needs at least 3 vertices")
                corners = [MeshService._parse_corner(token, line_number, raw) for token in args]
                polygons.append((line_number, corners))
            else:
                raise MalformedLine(line_number, raw)

        counts = {"vertex": len(vertices), "uv": len(uvs), "normal": len(normals)}
        for line_number, corners in polygons:
            for v, t, n in corners:
                for element, index in (("vertex", v), ("uv", t), ("normal", n)):
                    if index is not None and not 0 <= index < counts[element]:
                        raise IndexOutOfRange(
                            f"Line {line_number}: {element} index {index + 1} out of range "
                            f"(have {counts[element]})",
                            line_number=line_number,
                            element=element,
                            index=index + 1,
                        )

        face_v, face_t, face_n = [], [], []
        has_normals = all(n is not None for _, corners in polygons for _, _, n in corners)
        for _, corners in polygons:
            # Triangulación en abanico: (0, i, i+1)
            for i in range(1, len(corners) - 1):
                tri = (corners[0], corners[i], corners[i + 1])
                face_v.append([c[0] for c in tri])
                face_t.append([c[1] for c in tri])
                face_n.append([c[2] if has_normals else c[0] for c in tri])

        mesh = Mesh(
            vertices=np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
            uvs=np.asarray(uvs, dtype=np.float64).reshape(-1, 2),
            normals=np.asarray(normals, dtype=np.float64).reshape(-1, 3),
            face_vertices=np.asarray(face_v, dtype=np.int64).reshape(-1, 3),
            face_uvs=np.asarray(face_t, dtype=np.int64).reshape(-1, 3),
            face_normals=np.asarray(face_n, dtype=np.int64).reshape(-1, 3),
        )
        if not has_normals:
            logger.debug("OBJ without complete normals, computing smooth vertex normals")
            mesh = MeshService.compute_vertex_normals(mesh)

        violations = MeshService.validate_mesh(mesh)
        if violations:
            raise InvalidMesh(
                f"Mesh breaks {len(violations)} invariant(s), first: "
                f"{violations[0].invariant} at {violations[0].element} {violations[0].index}",
                violations=[v.model_dump() for v in violations[:10]],
            )
        logger.debug(f"Parsed OBJ: {len(vertices)} vertices, {mesh.n_faces} triangles")
        return mesh

    @staticmethod
    def _parse_floats(args: List[str], count: int, line_number: int, raw: str) -> tuple:
        if len(args) != count:
            raise MalformedLine(line_number, raw, f"expected {count} values")
        try:
            values = tuple(float(a) for a in args)
        except ValueError:
            raise MalformedLine(line_number, raw, "invalid number")
        if not all(math.isfinite(v) for v in values):
            raise MalformedLine(line_number, raw, "non-finite number")
        return values

    @staticmethod
    def _parse_corner(token: str, line_number: int, raw: str) -> Tuple[int, int, Optional[int]]:
        parts = token.split("/")
        if len(parts) > 3:
            raise MalformedLine(line_number, raw, "bad face corner")
        if len(parts) < 2 or parts[1] == "":
            raise MissingUV(
                f"Line {line_number}: face corner {token!r} has no UV index",
                line_number=line_number,
            )
        try:
            v = int(parts[0]) - 1
            t = int(parts[1]) - 1
            n = int(parts[2]) - 1 if len(parts) == 3 and parts[2] != "" else None
        except ValueError:
            raise MalformedLine(line_number, raw, "invalid index")
        return v, t, n

    @staticmethod
    def serialize_obj(mesh: Mesh) -> str:
        """
        Write a mesh in the OBJ subset, floats with 9 significant digits.

        Args:
            mesh: Mesh to write

        Returns:
            str: OBJ text
        """
        out = io.StringIO()
        for x, y, z in mesh.vertices:
            out.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for u, v in mesh.uvs:
            out.write(f"vt {u:.9g} {v:.9g}\n")
        for x, y, z in mesh.normals:
            out.write(f"vn {x:.9g} {y:.9g} {z:.9g}\n")
        for fv, ft, fn in zip(mesh.face_vertices, mesh.face_uvs, mesh.face_normals):
            corners = " ".join(f"{a + 1}/{b + 1}/{c + 1}" for a, b, c in zip(fv, ft, fn))
            out.write(f"f {corners}\n")
        return out.getvalue()

    @staticmethod
    def load_obj(path: str) -> Mesh:
        with open(path, "r", encoding="utf-8") as handle:
            return MeshService.parse_obj(handle)

    @staticmethod
    def save_obj(mesh: Mesh, path: str, force: bool = False) -> None:
        atomic_write_text(path, MeshService.serialize_obj(mesh), force)
        logger.debug(f"Mesh written to {path}")

    @staticmethod
    def validate_mesh(mesh: Mesh) -> List[MeshViolation]:
        """
        Check every Mesh invariant.

        Args:
            mesh: Mesh to check

        Returns:
            List[MeshViolation]: Empty iff all invariants hold
        """
        violations: List[MeshViolation] = []
        n_v, n_t, n_n = len(mesh.vertices), len(mesh.uvs), len(mesh.normals)

        valid_faces = np.ones(mesh.n_faces, dtype=bool)
        for name, indices, count in (
            ("vertex", mesh.face_vertices, n_v),
            ("uv", mesh.face_uvs, n_t),
            ("normal", mesh.face_normals, n_n),
        ):
            bad = np.any((indices < 0) | (indices >= count), axis=1)
            if name == "vertex":
                valid_faces &= ~bad
            for face in np.flatnonzero(bad):
                violations.append(MeshViolation(
                    invariant="index_range", element="face", index=int(face),
                    detail=f"{name} index outside [0, {count})",
                ))

        bad_uv = np.any((mesh.uvs < 0.0) | (mesh.uvs > 1.0), axis=1)
        for index in np.flatnonzero(bad_uv):
            violations.append(MeshViolation(
                invariant="uv_range", element="uv", index=int(index),
                detail=f"components {mesh.uvs[index].tolist()} outside [0, 1]",
            ))

        lengths = np.linalg.norm(mesh.normals, axis=1)
        for index in np.flatnonzero(np.abs(lengths - 1.0) > NORMAL_TOLERANCE):
            violations.append(MeshViolation(
                invariant="unit_normal", element="normal", index=int(index),
                detail=f"length {lengths[index]:.9g}",
            ))

        if np.any(valid_faces):
            faces = np.flatnonzero(valid_faces)
            areas = mesh.face_areas(faces)
            for face in faces[areas <= MIN_FACE_AREA]:
                violations.append(MeshViolation(
                    invariant="degenerate_face", element="face", index=int(face),
                    detail="area <= 1e-12",
                ))
        return violations

    @staticmethod
    def compute_vertex_normals(mesh: Mesh) -> Mesh:
        """
        Area-weighted smooth vertex normals.

        The unnormalized cross product of each face already has length twice its area.

        Args:
            mesh: Mesh with valid geometry

        Returns:
            Mesh: Copy whose normals are per-vertex and whose faces index them by vertex

        Raises:
            IsolatedVertex: If a vertex belongs to no face
        """
        used = np.zeros(len(mesh.vertices), dtype=bool)
        used[mesh.face_vertices.ravel()] = True
        if not np.all(used):
            isolated = int(np.flatnonzero(~used)[0])
            raise IsolatedVertex(f"Vertex {isolated} belongs to no face", vertex=isolated)

        tri = mesh.vertices[mesh.face_vertices]
        face_cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        accum = np.zeros_like(mesh.vertices)
        for corner in range(3):
            np.add.at(accum, mesh.face_vertices[:, corner], face_cross)
        lengths = np.linalg.norm(accum, axis=1, keepdims=True)
        normals = accum / np.where(lengths > 0, lengths, 1.0)
        return Mesh(
            vertices=mesh.vertices,
            uvs=mesh.uvs,
            normals=normals,
            face_vertices=mesh.face_vertices,
            face_uvs=mesh.face_uvs,
            face_normals=mesh.face_vertices.copy(),
        )

    @staticmethod
    def generate_primitive(
        kind: Union[PrimitiveKind, str],
        resolution: int,
        base_texture: Union[TexturePattern, str],
    ) -> Tuple[Mesh, Texture]:
        """
        Build a watertight primitive with a non-overlapping UV atlas and its texture.

        The cube is always 12 triangles and accepts resolution 1; the curved kinds
        need resolution >= 2.

        Args:
            kind: cube, uv-sphere, torus, cylinder or cone
            resolution: Tessellation level
            base_texture: Pattern spec (``checker-8``) or TexturePattern

        Returns:
            Tuple[Mesh, Texture]: Deterministic mesh and texture

        Raises:
            UnsupportedKind: For unknown kinds
            ValueError: For a resolution below the minimum
        """
        try:
            kind = PrimitiveKind(kind)
        except ValueError:
            raise UnsupportedKind(f"Unsupported primitive kind: {kind}", kind=str(kind))
        minimum = 1 if kind == PrimitiveKind.CUBE else 2
        if resolution < minimum:
            raise ValueError(f"{kind.value} needs resolution >= {minimum}, got {resolution}")
        if isinstance(base_texture, str):
            base_texture = TexturePattern.parse(base_texture)

        builders = {
            PrimitiveKind.CUBE: _build_cube,
            PrimitiveKind.UV_SPHERE: _build_uv_sphere,
            PrimitiveKind.TORUS: _build_torus,
            PrimitiveKind.CYLINDER: _build_cylinder,
            PrimitiveKind.CONE: _build_cone,
        }
        vertices, uvs, face_v, face_t = builders[kind](resolution)
        mesh = MeshService.compute_vertex_normals(Mesh(
            vertices=np.asarray(vertices, dtype=np.float64),
            uvs=np.asarray(uvs, dtype=np.float64),
            normals=np.zeros((0, 3)),
            face_vertices=np.asarray(face_v, dtype=np.int64),
            face_uvs=np.asarray(face_t, dtype=np.int64),
            face_normals=np.asarray(face_v, dtype=np.int64),
        ))
        texture = TextureService.make_pattern(base_texture)
        logger.debug(f"Generated {kind.value} (resolution {resolution}): {mesh.n_faces} triangles")
        return mesh, texture


# Primitive builders: each returns (vertices, uvs, face vertex indices, face uv indices)

CUBE_HALF = 0.5
SPHERE_RADIUS = 0.8
TORUS_MAJOR, TORUS_MINOR = 0.6, 0.25
CYLINDER_RADIUS, CYLINDER_HEIGHT = 0.6, 1.2
CONE_RADIUS, CONE_HEIGHT = 0.7, 1.2


def _build_cube(_resolution: int):
    # Esquina (x, y, z) en {0,1}^3 -> indice 4x + 2y + z
    vertices = [
        ((x - 0.5) * 2 * CUBE_HALF, (y - 0.5) * 2 * CUBE_HALF, (z - 0.5) * 2 * CUBE_HALF)
        for x in (0, 1) for y in (0, 1) for z in (0, 1)
    ]

    def idx(x, y, z):
        return 4 * x + 2 * y + z

    # Quads counter-clockwise seen from outside
    quads = [
        [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)],  # +X
        [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)],  # -X
        [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)],  # +Y
        [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)],  # -Y
        [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],  # +Z
        [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)],  # -Z
    ]
    uvs, face_v, face_t = [], [], []
    pad = 0.02
    for face, quad in enumerate(quads):
        col, row = face % 3, face // 3
        u0, u1 = col / 3 + pad, (col + 1) / 3 - pad
        v0, v1 = row / 2 + pad, (row + 1) / 2 - pad
        base = len(uvs)
        uvs.extend([(u0, v0), (u1, v0), (u1, v1), (u0, v1)])
        a, b, c, d = (idx(*corner) for corner in quad)
        # Diagonal through the even-parity corners keeps corner normals symmetric
        if sum(quad[0]) % 2 == 0:
            face_v += [[a, b, c], [a, c, d]]
            face_t += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
        else:
            face_v += [[a, b, d], [b, c, d]]
            face_t += [[base, base + 1, base + 3], [base + 1, base + 2, base + 3]]
    return vertices, uvs, face_v, face_t


def _build_uv_sphere(n: int):
    vertices, uvs, face_v, face_t = [], [], [], []
    for k in range(n):
        lat = math.radians(-90.0 + 180.0 * (k + 0.5) / n)
        for j in range(n):
            lon = 2.0 * math.pi * j / n
            vertices.append((
                SPHERE_RADIUS * math.cos(lat) * math.sin(lon),
                SPHERE_RADIUS * math.sin(lat),
                SPHERE_RADIUS * math.cos(lat) * math.cos(lon),
            ))
    south, north = len(vertices), len(vertices) + 1
    vertices += [(0.0, -SPHERE_RADIUS, 0.0), (0.0, SPHERE_RADIUS, 0.0)]

    for k in range(n):
        for j in range(n + 1):
            uvs.append((j / n, (k + 0.5) / n))
    south_uv, north_uv = len(uvs), len(uvs) + n
    uvs += [((j + 0.5) / n, 0.0) for j in range(n)]
    uvs += [((j + 0.5) / n, 1.0) for j in range(n)]

    def vid(k, j):
        return k * n + (j % n)

    def tid(k, j):
        return k * (n + 1) + j

    for k in range(n - 1):
        for j in range(n):
            face_v += [[vid(k, j), vid(k, j + 1), vid(k + 1, j + 1)],
                       [vid(k, j), vid(k + 1, j + 1), vid(k + 1, j)]]
            face_t += [[tid(k, j), tid(k, j + 1), tid(k + 1, j + 1)],
                       [tid(k, j), tid(k + 1, j + 1), tid(k + 1, j)]]
    for j in range(n):
        face_v.append([south, vid(0, j + 1), vid(0, j)])
        face_t.append([south_uv + j, tid(0, j + 1), tid(0, j)])
        face_v.append([vid(n - 1, j), vid(n - 1, j + 1), north])
        face_t.append([tid(n - 1, j), tid(n - 1, j + 1), north_uv + j])
    return vertices, uvs, face_v, face_t


def _build_torus(n: int):
    vertices, uvs, face_v, face_t = [], [], [], []
    for i in range(n):
        theta = 2.0 * math.pi * i / n
        for j in range(n):
            phi = 2.0 * math.pi * j / n
            ring = TORUS_MAJOR + TORUS_MINOR * math.cos(phi)
            vertices.append((ring * math.sin(theta), TORUS_MINOR * math.sin(phi), ring * math.cos(theta)))
    for i in range(n + 1):
        for j in range(n + 1):
            uvs.append((i / n, j / n))

    def vid(i, j):
        return (i % n) * n + (j % n)

    def tid(i, j):
        return i * (n + 1) + j

    for i in range(n):
        for j in range(n):
            face_v += [[vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)],
                       [vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]]
            face_t += [[tid(i, j), tid(i + 1, j), tid(i + 1, j + 1)],
                       [tid(i, j), tid(i + 1, j + 1), tid(i, j + 1)]]
    return vertices, uvs, face_v, face_t


def _disk_uv(center_u: float, center_v: float, radius: float, angle: float):
    return (center_u + radius * math.sin(angle), center_v + radius * math.cos(angle))


def _build_cylinder(n: int):
    half = CYLINDER_HEIGHT / 2
    vertices, uvs, face_v, face_t = [], [], [], []
    angles = [2.0 * math.pi * j / n for j in range(n)]
    for y in (-half, half):
        for a in angles:
            vertices.append((CYLINDER_RADIUS * math.sin(a), y, CYLINDER_RADIUS * math.cos(a)))
    bottom_c, top_c = len(vertices), len(vertices) + 1
    vertices += [(0.0, -half, 0.0), (0.0, half, 0.0)]

    # Lateral en la mitad superior del atlas, tapas como discos en la inferior
    for v in (0.52, 0.98):
        for j in range(n + 1):
            uvs.append((j / n, v))
    bottom_ring = len(uvs)
    uvs += [_disk_uv(0.25, 0.25, 0.22, a) for a in angles]
    top_ring = len(uvs)
    uvs += [_disk_uv(0.75, 0.25, 0.22, a) for a in angles]
    bottom_uv_c, top_uv_c = len(uvs), len(uvs) + 1
    uvs += [(0.25, 0.25), (0.75, 0.25)]

    for j in range(n):
        jn = (j + 1) % n
        b0, b1, t0, t1 = j, jn, n + j, n + jn
        face_v += [[b0, b1, t1], [b0, t1, t0]]
        face_t += [[j, j + 1, n + 1 + j + 1], [j, n + 1 + j + 1, n + 1 + j]]
        face_v.append([top_c, t0, t1])
        face_t.append([top_uv_c, top_ring + j, top_ring + jn])
        face_v.append([bottom_c, b1, b0])
        face_t.append([bottom_uv_c, bottom_ring + jn, bottom_ring + j])
    return vertices, uvs, face_v, face_t


def _build_cone(n: int):
    half = CONE_HEIGHT / 2
    vertices, uvs, face_v, face_t = [], [], [], []
    angles = [2.0 * math.pi * j / n for j in range(n)]
    for a in angles:
        vertices.append((CONE_RADIUS * math.sin(a), -half, CONE_RADIUS * math.cos(a)))
    apex, base_c = n, n + 1
    vertices += [(0.0, half, 0.0), (0.0, -half, 0.0)]

    for j in range(n + 1):
        uvs.append((j / n, 0.52))
    apex_uv = len(uvs)
    uvs += [((j + 0.5) / n, 0.98) for j in range(n)]
    base_ring = len(uvs)
    uvs += [_disk_uv(0.5, 0.25, 0.22, a) for a in angles]
    base_uv_c = len(uvs)
    uvs.append((0.5, 0.25))

    for j in range(n):
        jn = (j + 1) % n
        face_v.append([j, jn, apex])
        face_t.append([j, j + 1, apex_uv + j])
        face_v.append([base_c, jn, j])
        face_t.append([base_uv_c, base_ring + jn, base_ring + j])
    return vertices, uvs, face_v, face_t
