"""Rotation algebra, rigid transforms, robust penalties, mesh distances."""

from .alignment import procrustes_align
from .kernels import BACKEND as KERNEL_BACKEND
from .mesh import (
    FEATURE_EDGE,
    FEATURE_FACE,
    FEATURE_VERTEX,
    TriangleMesh,
    closest_points_on_mesh,
    feature_name,
    point_to_mesh_sq_distance,
)
from .robust import geman_mcclure, geman_mcclure_grad, robustifier, robustifier_grad
from .rotations import (
    axis_angle_to_matrix,
    axis_angle_to_quat,
    geodesic_angle,
    is_rotation,
    matrix_to_axis_angle,
    matrix_to_quat,
    project_to_rotation,
    quat_to_axis_angle,
    quat_to_matrix,
    quaternion_sign_continuity,
    random_rotation,
    rotation_angle,
    rotation_derivatives,
    skew,
)
from .transforms import RigidTransform, SimilarityTransform, apply_offset, invert_offset

__all__ = [
    "FEATURE_EDGE",
    "FEATURE_FACE",
    "FEATURE_VERTEX",
    "KERNEL_BACKEND",
    "RigidTransform",
    "SimilarityTransform",
    "TriangleMesh",
    "apply_offset",
    "axis_angle_to_matrix",
    "axis_angle_to_quat",
    "closest_points_on_mesh",
    "feature_name",
    "geman_mcclure",
    "geman_mcclure_grad",
    "geodesic_angle",
    "invert_offset",
    "is_rotation",
    "matrix_to_axis_angle",
    "matrix_to_quat",
    "point_to_mesh_sq_distance",
    "procrustes_align",
    "project_to_rotation",
    "quat_to_axis_angle",
    "quat_to_matrix",
    "quaternion_sign_continuity",
    "random_rotation",
    "robustifier",
    "robustifier_grad",
    "rotation_angle",
    "rotation_derivatives",
    "skew",
]
