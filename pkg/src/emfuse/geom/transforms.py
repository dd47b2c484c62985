"""Rigid and similarity transforms plus the fixed-offset composition rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rotations import is_rotation


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """rotation (3,3) and translation (3,), applied as R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(x) = self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def is_valid(self, tol: float = 1e-9) -> bool:
        return is_rotation(self.rotation, tol) and np.all(np.isfinite(self.translation))


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """scale * R x + t with scale > 0."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.scale * (points @ self.rotation.T) + self.translation


def apply_offset(q: np.ndarray, U: np.ndarray, t_o: np.ndarray, R_o: np.ndarray):
    """Apply a constant rigid offset (t_o, R_o) to a pose (q, U).

    Returns (U R_o t_o + q, U R_o): the offset rotation composes on the
    right and the offset translation is expressed in the rotated frame.
    """
    q = np.asarray(q, dtype=float)
    U_dot = np.asarray(U, dtype=float) @ np.asarray(R_o, dtype=float)
    return U_dot @ np.asarray(t_o, dtype=float) + q, U_dot


def invert_offset(t_o: np.ndarray, R_o: np.ndarray):
    """Offset (t', R') such that applying (t_o, R_o) then (t', R') is identity."""
    R_o = np.asarray(R_o, dtype=float)
    return -R_o @ np.asarray(t_o, dtype=float), R_o.T
