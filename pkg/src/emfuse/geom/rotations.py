"""Rotation algebra on plain (3, 3) numpy arrays.

Rotations are stored as orthonormal matrices everywhere; axis-angle
vectors (radians) appear only at optimization-parameter boundaries and
quaternions only for trajectory filtering. Quaternions use (w, x, y, z)
ordering.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12
# Below this angle the Rodrigues terms are evaluated by Taylor expansion.
_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == np.cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_to_matrix(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula; v is axis * angle in radians."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    K = skew(v)
    if theta < _SMALL_ANGLE:
        # second-order Taylor keeps the result orthonormal to ~1e-16
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def matrix_to_axis_angle(R: np.ndarray) -> np.ndarray:
    """Inverse Rodrigues with a deterministic tie-break at theta == pi.

    Near pi the axis sign is extracted from R + I and fixed so that the
    first nonzero axis component is non-negative.
    """
    R = np.asarray(R, dtype=float)
    trace = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(trace)
    if theta < _SMALL_ANGLE:
        # for small angles the skew part is ~v itself
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    if np.pi - theta > 1e-6:
        axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        axis /= 2.0 * np.sin(theta)
        return axis * theta
    # theta near pi: R + I = 2 axis axis^T (plus O(pi - theta) terms)
    M = 0.5 * (R + np.eye(3))
    axis = np.sqrt(np.maximum(np.diag(M), 0.0))
    # off-diagonals fix relative signs; anchor on the largest component
    k = int(np.argmax(axis))
    for i in range(3):
        if i != k and M[k, i] < 0.0:
            axis[i] = -axis[i]
    axis /= max(np.linalg.norm(axis), _EPS)
    for a in axis:
        if abs(a) > 1e-9:
            if a < 0.0:
                axis = -axis
            break
    return axis * theta


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def axis_angle_to_quat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    if theta < _SMALL_ANGLE:
        q = np.concatenate([[1.0], 0.5 * v])
        return q / np.linalg.norm(q)
    axis = v / theta
    return np.concatenate([[np.cos(0.5 * theta)], np.sin(0.5 * theta) * axis])


def quat_to_axis_angle(q: np.ndarray) -> np.ndarray:
    return matrix_to_axis_angle(quat_to_matrix(q))


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a single rotation, radians in [0, pi]."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)))


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Angle of Ra^T Rb, radians."""
    return rotation_angle(np.asarray(Ra).T @ np.asarray(Rb))


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R)
    if R.shape != (3, 3):
        return False
    return (
        np.allclose(R @ R.T, np.eye(3), atol=tol)
        and abs(np.linalg.det(R) - 1.0) < tol
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (via quaternion on S^3)."""
    q = rng.standard_normal(4)
    return quat_to_matrix(q / np.linalg.norm(q))


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (special orthogonal polar factor)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.linalg.det(U @ Vt)
    return U @ D @ Vt


def rotation_derivatives(v: np.ndarray) -> np.ndarray:
    """d R(v) / d v_i for axis-angle v, stacked as (3, 3, 3).

    Uses the closed form of Gallego & Yezzi; at v == 0 the derivative is
    the generator skew(e_i).
    """
    v = np.asarray(v, dtype=float)
    theta2 = float(v @ v)
    if theta2 < _SMALL_ANGLE**2:
        return np.stack([skew(e) for e in np.eye(3)])
    R = axis_angle_to_matrix(v)
    ImR = np.eye(3) - R
    out = np.empty((3, 3, 3))
    for i in range(3):
        w = v[i] * v + np.cross(v, ImR[:, i])
        out[i] = (skew(w) / theta2) @ R
    return out


def cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product without numpy's small-array overhead."""
    out = np.empty(np.broadcast(a, b).shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def skew_rows(v: np.ndarray) -> np.ndarray:
    """(N, 3) -> (N, 3, 3) stack of cross-product matrices."""
    v = np.asarray(v, dtype=float)
    N = v.shape[0]
    out = np.zeros((N, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def axis_angle_to_matrix_batch(v: np.ndarray) -> np.ndarray:
    """(N, 3) axis-angle vectors -> (N, 3, 3) rotations, vectorized."""
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    theta2 = np.einsum("nk,nk->n", v, v)
    theta = np.sqrt(theta2)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(theta) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(theta)) / np.maximum(safe * safe, 1e-300))
    K = skew_rows(v)
    KK = K @ K
    return np.eye(3)[None] + a[:, None, None] * K + b[:, None, None] * KK


def rotation_derivatives_batch(v: np.ndarray) -> np.ndarray:
    """(N, 3) axis-angle -> (N, 3, 3, 3): d R / d v_i per vector, vectorized."""
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    N = v.shape[0]
    theta2 = np.einsum("nk,nk->n", v, v)
    R = axis_angle_to_matrix_batch(v)
    ImR = np.eye(3)[None] - R
    out = np.empty((N, 3, 3, 3))
    small = theta2 < _SMALL_ANGLE**2
    inv = 1.0 / np.where(small, 1.0, theta2)
    for i in range(3):
        w = v[:, i : i + 1] * v + cross_rows(v, ImR[:, :, i])
        out[:, i] = (skew_rows(w) * inv[:, None, None]) @ R
    if np.any(small):
        gen = np.stack([skew(e) for e in np.eye(3)])
        out[small] = gen[None]
    return out


def quaternion_sign_continuity(quats) -> np.ndarray:
    """Flip quaternion signs so consecutive elements have dot >= 0.

    The represented rotations are unchanged; the first element keeps its
    sign. Accepts and returns an (N, 4) array (empty input passes through).
    """
    qs = np.asarray(quats, dtype=float)
    if qs.size == 0:
        return qs.reshape(0, 4)
    norms = np.linalg.norm(qs, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-6):
        raise ValueError("quaternions must be unit-norm within 1e-6")
    out = qs.copy()
    for i in range(1, len(out)):
        if out[i] @ out[i - 1] < 0.0:
            out[i] = -out[i]
    return out
