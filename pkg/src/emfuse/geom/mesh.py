"""Triangle meshes and point-to-surface distance queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

FEATURE_FACE = 0
FEATURE_EDGE = 1
FEATURE_VERTEX = 2

_FEATURE_NAMES = {FEATURE_FACE: "face", FEATURE_EDGE: "edge", FEATURE_VERTEX: "vertex"}
_BARY_ZERO_TOL = 1e-9


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) meters
    faces: np.ndarray  # (F, 3) vertex indices
    normals: np.ndarray | None = field(default=None)  # optional per-vertex

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    def validate(self, min_area: float = 1e-12) -> None:
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= self.vertex_count):
            raise ValueError("face indices out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertices")
        if self.face_count:
            areas = 0.5 * np.linalg.norm(self.face_normals_raw(), axis=1)
            if np.any(areas <= min_area):
                raise ValueError(f"degenerate faces (area <= {min_area})")

    def face_corners(self) -> np.ndarray:
        """(F, 3, 3) corner positions."""
        return self.vertices[self.faces]

    def face_normals_raw(self) -> np.ndarray:
        """Unnormalized face normals (cross products; length = 2 * area)."""
        c = self.face_corners()
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals."""
        fn = self.face_normals_raw()
        n = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(n, self.faces[:, k], fn)
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        lens[lens < 1e-300] = 1.0
        return n / lens

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals_raw(), axis=1)

    def is_watertight(self) -> bool:
        """Every undirected edge used by exactly two faces, once per direction."""
        if self.face_count == 0:
            return False
        edges = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        directed = {}
        for u, v in edges:
            key = (int(u), int(v))
            directed[key] = directed.get(key, 0) + 1
        for (u, v), cnt in directed.items():
            if cnt != 1 or directed.get((v, u), 0) != 1:
                return False
        return True


def classify_feature(bary: np.ndarray, tol: float = _BARY_ZERO_TOL) -> int:
    """Feature type from barycentric coords of the closest point."""
    zeros = int(np.sum(np.asarray(bary) <= tol))
    if zeros == 0:
        return FEATURE_FACE
    if zeros == 1:
        return FEATURE_EDGE
    return FEATURE_VERTEX


def feature_name(code: int) -> str:
    return _FEATURE_NAMES[code]


def closest_points_on_mesh(points: np.ndarray, mesh: TriangleMesh):
    """Batch closest-surface-point query.

    Returns (dist_sq (N,), closest (N, 3), face_idx (N,), bary (N, 3)).
    """
    if mesh.face_count == 0:
        raise ValueError("empty mesh")
    return kernels.closest_point_triangles(points, mesh.face_corners())


def point_to_mesh_sq_distance(p: np.ndarray, mesh: TriangleMesh):
    """Squared distance from p to the mesh surface plus the closest feature.

    Returns (dist_sq, (feature_code, face_index)); feature_code is one of
    FEATURE_FACE / FEATURE_EDGE / FEATURE_VERTEX.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite query point")
    d2, _, fidx, bary = closest_points_on_mesh(p.reshape(1, 3), mesh)
    return float(d2[0]), (classify_feature(bary[0]), int(fidx[0]))
