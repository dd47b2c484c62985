"""Parametric articulated skinned body: kinematics, skinning, sensors.

The body follows the usual skinned-template construction: shape
blendshapes deform a template mesh, a kinematic tree of axis-angle joint
rotations is composed into global transforms, and linear blend skinning
poses the vertices. Virtual sensors are rigid offsets from anchor frames
built out of mesh vertices and normals.

Gradient propagation is implemented in reverse mode: energy terms
accumulate gradients with respect to posed vertices (or anchor poses),
which are then pulled back through skinning and the kinematic chain to
the pose vector [theta_r, theta_b, t].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .geom.mesh import TriangleMesh
from .geom.rotations import (
    axis_angle_to_matrix,
    axis_angle_to_matrix_batch,
    cross_rows,
    is_rotation,
    rotation_derivatives_batch,
)


class DegenerateAnchorError(ValueError):
    """Anchor frame construction failed (edge parallel to normal)."""


@dataclass(eq=False)
class BodyModel:
    parents: np.ndarray  # (J,) int; parents[0] == -1
    template_vertices: np.ndarray  # (V, 3) meters
    faces: np.ndarray  # (F, 3)
    skinning_weights: np.ndarray  # (V, J) row-stochastic, <= 4 nonzeros/row
    shape_dirs: np.ndarray  # (V, 3, B) meters per unit beta
    joint_regressor: np.ndarray  # (J, V) row-stochastic
    keypoint_regressor: np.ndarray  # (K, V)
    joint_limits: np.ndarray  # (J-1, 3, 2) radians, lo <= 0 <= hi

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.template_vertices = np.asarray(self.template_vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.skinning_weights = np.asarray(self.skinning_weights, dtype=float)
        self.shape_dirs = np.asarray(self.shape_dirs, dtype=float)
        self.joint_regressor = np.asarray(self.joint_regressor, dtype=float)
        self.keypoint_regressor = np.asarray(self.keypoint_regressor, dtype=float)
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)

    @property
    def joint_count(self) -> int:
        return self.parents.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def shape_count(self) -> int:
        return self.shape_dirs.shape[2]

    @property
    def keypoint_count(self) -> int:
        return self.keypoint_regressor.shape[0]

    def validate(self) -> None:
        J, V = self.joint_count, self.vertex_count
        if self.parents[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        if not np.all(self.parents[1:] < np.arange(1, J)):
            raise ValueError("parents must form a tree in topological order")
        if self.skinning_weights.shape != (V, J):
            raise ValueError("skinning_weights shape mismatch")
        row_sums = self.skinning_weights.sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-6):
            raise ValueError("skinning rows must sum to 1")
        if np.max(np.count_nonzero(self.skinning_weights, axis=1)) > 4:
            raise ValueError("skinning rows must have <= 4 nonzeros")
        if not np.allclose(self.joint_regressor.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("joint regressor rows must sum to 1")
        if self.joint_limits.shape != (J - 1, 3, 2):
            raise ValueError("joint_limits shape mismatch")
        lo, hi = self.joint_limits[..., 0], self.joint_limits[..., 1]
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("joint limits must bracket zero")
        TriangleMesh(self.template_vertices, self.faces).validate()

    def shaped_template(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        return self.template_vertices + self.shape_dirs @ beta

    def rest_joints(self, beta: np.ndarray) -> np.ndarray:
        return self.joint_regressor @ self.shaped_template(beta)


@dataclass(eq=False)
class PoseParams:
    theta_r: np.ndarray  # (3,) axis-angle
    theta_b: np.ndarray  # (3*(J-1),) axis-angle per non-root joint
    t: np.ndarray  # (3,) meters
    beta: np.ndarray  # (B,) shape, fixed during pose optimization

    def __post_init__(self):
        self.theta_r = np.asarray(self.theta_r, dtype=float).reshape(3)
        self.theta_b = np.asarray(self.theta_b, dtype=float).ravel()
        self.t = np.asarray(self.t, dtype=float).reshape(3)
        self.beta = np.asarray(self.beta, dtype=float).ravel()

    @classmethod
    def zero(cls, model: BodyModel, beta=None) -> "PoseParams":
        B = model.shape_count
        return cls(
            np.zeros(3),
            np.zeros(3 * (model.joint_count - 1)),
            np.zeros(3),
            np.zeros(B) if beta is None else np.asarray(beta, dtype=float),
        )

    def as_vector(self) -> np.ndarray:
        """Flat optimization vector [theta_r, theta_b, t]; beta excluded."""
        return np.concatenate([self.theta_r, self.theta_b, self.t])

    def with_vector(self, x: np.ndarray) -> "PoseParams":
        x = np.asarray(x, dtype=float)
        nb = self.theta_b.size
        return PoseParams(x[:3], x[3 : 3 + nb], x[3 + nb : 6 + nb], self.beta)

    def copy(self) -> "PoseParams":
        return PoseParams(self.theta_r.copy(), self.theta_b.copy(), self.t.copy(), self.beta.copy())


@dataclass(eq=False)
class SensorAnchor:
    sensor_id: str
    anchor_vertex: int
    frame_vertex: int
    offset_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))  # Q
    offset_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # v

    def __post_init__(self):
        self.offset_rotation = np.asarray(self.offset_rotation, dtype=float)
        self.offset_translation = np.asarray(self.offset_translation, dtype=float).reshape(3)
        if self.anchor_vertex == self.frame_vertex:
            raise ValueError("anchor and frame vertex must differ")
        if not is_rotation(self.offset_rotation, tol=1e-6):
            raise ValueError("offset rotation must be orthonormal")

    def with_offsets(self, v: np.ndarray, Q: np.ndarray) -> "SensorAnchor":
        return replace(self, offset_translation=np.asarray(v, float), offset_rotation=np.asarray(Q, float))


# ---------------------------------------------------------------------------
# forward kinematics and skinning


class PoseCache:
    """Per-pose FK products shared between energy values and gradients."""

    def __init__(self, model: BodyModel, pose: PoseParams):
        J = model.joint_count
        if pose.theta_b.size != 3 * (J - 1):
            raise ValueError(
                f"theta_b has {pose.theta_b.size} entries, expected {3 * (J - 1)}"
            )
        if pose.beta.size != model.shape_count:
            raise ValueError("beta dimension mismatch")
        self.model = model
        self.pose = pose
        self.v_shaped = model.shaped_template(pose.beta)
        self.j_rest = model.joint_regressor @ self.v_shaped

        self._theta_all = np.concatenate([pose.theta_r, pose.theta_b]).reshape(J, 3)
        self.R_local = axis_angle_to_matrix_batch(self._theta_all)
        self._rot_derivs = None

        self.R_glob = np.empty((J, 3, 3))
        self.p_glob = np.empty((J, 3))
        self.R_glob[0] = self.R_local[0]
        self.p_glob[0] = self.j_rest[0] + pose.t
        parents = model.parents
        for j in range(1, J):
            p = parents[j]
            self.R_glob[j] = self.R_glob[p] @ self.R_local[j]
            self.p_glob[j] = self.p_glob[p] + self.R_glob[p] @ (self.j_rest[j] - self.j_rest[p])

        # skinning transforms: v = sum_j w_j (A_j v_hat + b_j)
        self.A = self.R_glob
        self.b = self.p_glob - np.einsum("jab,jb->ja", self.R_glob, self.j_rest)
        self._verts = None

    def vertices(self, indices=None) -> np.ndarray:
        if indices is None:
            if self._verts is None:
                self._verts = self._skin(slice(None))
            return self._verts
        return self._skin(indices)

    def scatter_vertices(self, indices) -> np.ndarray:
        """Dense (V, 3) buffer with only the requested rows skinned.

        Rows outside indices are uninitialized; callers must touch only
        the requested vertices (fast path for sparse consumers).
        """
        buf = np.empty_like(self.v_shaped)
        buf[indices] = self._skin(indices)
        return buf

    def _skin(self, idx) -> np.ndarray:
        W = self.model.skinning_weights[idx]
        vh = self.v_shaped[idx]
        AB = np.concatenate([self.A.reshape(-1, 9), self.b], axis=1)  # (J, 12)
        M = (W @ AB)  # (n, 12): per-vertex blended transform
        R = M[:, :9].reshape(-1, 3, 3)
        return np.einsum("vab,vb->va", R, vh) + M[:, 9:]

    def rot_derivs(self) -> np.ndarray:
        """(J, 3, 3, 3) per-joint axis-angle derivatives, cached."""
        if self._rot_derivs is None:
            self._rot_derivs = rotation_derivatives_batch(self._theta_all)
        return self._rot_derivs

    def mesh(self) -> TriangleMesh:
        return TriangleMesh(self.vertices().copy(), self.model.faces)

    # -- reverse mode ------------------------------------------------------

    def vertex_grads_to_adjoints(self, indices, g: np.ndarray):
        """Turn dE/dverts into per-joint adjoints (dE/dA, dE/db)."""
        W = self.model.skinning_weights[indices]
        vh = self.v_shaped[indices]
        g = np.asarray(g, dtype=float).reshape(-1, 3)
        outer = g[:, :, None] * vh[:, None, :]  # (n, 3, 3)
        dA = (W.T @ outer.reshape(-1, 9)).reshape(-1, 3, 3)
        db = W.T @ g
        return dA, db

    def backprop_pose(self, dA: np.ndarray, db: np.ndarray) -> np.ndarray:
        """Pull (dE/dA, dE/db) adjoints back to the 75-vector gradient."""
        model, pose = self.model, self.pose
        J = model.joint_count
        parents = model.parents
        Psi_R = dA - np.einsum("ja,jb->jab", db, self.j_rest)
        Psi_t = db.copy()

        dR_local = np.empty((J, 3, 3))
        for j in range(J - 1, 0, -1):
            p = parents[j]
            d_j = self.j_rest[j] - self.j_rest[p]
            dR_local[j] = self.R_glob[p].T @ Psi_R[j]
            Psi_R[p] += Psi_R[j] @ self.R_local[j].T + np.outer(Psi_t[j], d_j)
            Psi_t[p] += Psi_t[j]
        dR_local[0] = Psi_R[0]

        grad = np.empty(6 + pose.theta_b.size)
        grad[: 3 + pose.theta_b.size] = np.einsum("jkab,jab->jk", self.rot_derivs(), dR_local).ravel()
        grad[-3:] = Psi_t[0]
        return grad

    def backprop_vertices(self, indices, g: np.ndarray) -> np.ndarray:
        dA, db = self.vertex_grads_to_adjoints(indices, g)
        return self.backprop_pose(dA, db)

    def backprop_shape(self, indices, g: np.ndarray) -> np.ndarray:
        """dE/dbeta from vertex gradients (rotations fixed, template moves)."""
        model = self.model
        W = model.skinning_weights[indices]
        S = model.shape_dirs[indices]  # (n, 3, B)
        g = np.asarray(g, dtype=float).reshape(-1, 3)
        # direct template term: sum_i g_i^T (sum_j w_ij A_j) S_i
        r = np.einsum("nj,jab,na->nb", W, self.A, g)
        dbeta = np.einsum("nb,nbB->B", r, S)
        # rest-joint term through b_j = G_t_j - A_j j_j
        m = W.T @ g  # (J, 3)
        B = model.shape_count
        parents = model.parents
        Jb = np.einsum("jv,vbB->jbB", model.joint_regressor, model.shape_dirs)  # (J,3,B)
        dGt = np.empty((model.joint_count, 3, B))
        dGt[0] = Jb[0]
        for j in range(1, model.joint_count):
            p = parents[j]
            dGt[j] = dGt[p] + np.einsum("ab,bB->aB", self.R_glob[p], Jb[j] - Jb[p])
        dbj = dGt - np.einsum("jab,jbB->jaB", self.A, Jb)
        dbeta += np.einsum("ja,jaB->B", m, dbj)
        return dbeta


def forward_kinematics(model: BodyModel, pose: PoseParams):
    """Global joint positions (J, 3) and rotations (J, 3, 3)."""
    cache = PoseCache(model, pose)
    return cache.p_glob.copy(), cache.R_glob.copy()


def skin_mesh(model: BodyModel, pose: PoseParams) -> TriangleMesh:
    """Pose the shaped template with linear blend skinning."""
    return PoseCache(model, pose).mesh()


def regress_keypoints(model: BodyModel, mesh) -> np.ndarray:
    """Linear keypoint regression from mesh vertices, (K, 3)."""
    verts = mesh.vertices if isinstance(mesh, TriangleMesh) else np.asarray(mesh)
    if verts.shape[0] != model.vertex_count:
        raise ValueError("vertex count does not match the regressor")
    return model.keypoint_regressor @ verts


def joint_limit_penalty(model: BodyModel, pose: PoseParams) -> float:
    """Quadratic penalty outside per-axis joint limits; zero inside."""
    tb = pose.theta_b.reshape(-1, 3)
    lo = model.joint_limits[..., 0]
    hi = model.joint_limits[..., 1]
    over = np.maximum(0.0, tb - hi)
    under = np.maximum(0.0, lo - tb)
    return float(np.sum(over**2) + np.sum(under**2))


def joint_limit_penalty_grad(model: BodyModel, pose: PoseParams) -> np.ndarray:
    """Gradient of joint_limit_penalty over the flat pose vector."""
    tb = pose.theta_b.reshape(-1, 3)
    lo = model.joint_limits[..., 0]
    hi = model.joint_limits[..., 1]
    g_tb = 2.0 * np.maximum(0.0, tb - hi) - 2.0 * np.maximum(0.0, lo - tb)
    grad = np.zeros(6 + pose.theta_b.size)
    grad[3 : 3 + pose.theta_b.size] = g_tb.ravel()
    return grad


# ---------------------------------------------------------------------------
# virtual sensors

_DEGENERATE_TOL = 1e-8


def _cross3(a, b):
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


class AnchorGeometry:
    """One-ring topology of an anchor, precomputed for repeated queries."""

    def __init__(self, faces: np.ndarray, anchor: SensorAnchor):
        faces = np.asarray(faces)
        mask = np.any(faces == anchor.anchor_vertex, axis=1)
        self.ring_faces = faces[mask]
        if self.ring_faces.shape[0] == 0:
            raise DegenerateAnchorError(
                f"anchor vertex {anchor.anchor_vertex} has no incident faces"
            )
        self.anchor = anchor
        self.needed_vertices = np.unique(
            np.concatenate([self.ring_faces.ravel(), [anchor.frame_vertex]])
        )

    def frame(self, vertices: np.ndarray):
        """Anchor position and orientation from posed vertex positions."""
        a = self.anchor
        p = vertices[a.anchor_vertex]
        corners = vertices[self.ring_faces]
        n = cross_rows(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]).sum(axis=0)
        n_norm = np.linalg.norm(n)
        if n_norm < 1e-14:
            raise DegenerateAnchorError("zero vertex normal at anchor")
        n_hat = n / n_norm
        e = vertices[a.frame_vertex] - p
        x = e - (e @ n_hat) * n_hat
        x_norm = np.linalg.norm(x)
        if x_norm < _DEGENERATE_TOL * max(np.linalg.norm(e), 1e-300):
            raise DegenerateAnchorError("frame edge parallel to anchor normal")
        x_hat = x / x_norm
        y_hat = _cross3(n_hat, x_hat)
        R_tilde = np.column_stack([x_hat, y_hat, n_hat])
        return p, R_tilde

    def sensor_pose(self, vertices: np.ndarray):
        """Virtual sensor pose: anchor frame composed with the offsets."""
        p, R_tilde = self.frame(vertices)
        a = self.anchor
        return p + R_tilde @ a.offset_translation, R_tilde @ a.offset_rotation

    def backprop_into(self, vertices: np.ndarray, dE_dp: np.ndarray, dE_dR: np.ndarray,
                      out: np.ndarray) -> None:
        """Accumulate dE/dvertices for this sensor pose into a (V, 3) buffer.

        dE_dp / dE_dR are adjoints of the virtual sensor pose (p_v, R_v).
        """
        a = self.anchor
        p = vertices[a.anchor_vertex]
        corners = vertices[self.ring_faces]
        u = corners[:, 1] - corners[:, 0]
        w = corners[:, 2] - corners[:, 0]
        n = cross_rows(u, w).sum(axis=0)
        n_norm = np.linalg.norm(n)
        n_hat = n / n_norm
        e = vertices[a.frame_vertex] - p
        x = e - (e @ n_hat) * n_hat
        x_norm = np.linalg.norm(x)
        x_hat = x / x_norm

        # through the offsets
        g_R = dE_dR @ a.offset_rotation.T + dE_dp[:, None] * a.offset_translation[None, :]

        gx, gy, gz = g_R[:, 0], g_R[:, 1], g_R[:, 2]
        g_xhat = gx - _cross3(n_hat, gy)
        g_nhat = gz + _cross3(x_hat, gy)

        g_x = (g_xhat - x_hat * (x_hat @ g_xhat)) / x_norm
        g_e = g_x - n_hat * (n_hat @ g_x)
        g_nhat = g_nhat - (n_hat @ g_x) * e - (e @ n_hat) * g_x
        g_n = (g_nhat - n_hat * (n_hat @ g_nhat)) / n_norm

        out[a.frame_vertex] += g_e
        out[a.anchor_vertex] += dE_dp - g_e
        g_u = cross_rows(w, g_n[None, :])
        g_w = -cross_rows(u, g_n[None, :])
        np.add.at(out, self.ring_faces[:, 1], g_u)
        np.add.at(out, self.ring_faces[:, 2], g_w)
        np.add.at(out, self.ring_faces[:, 0], -g_u - g_w)

    def backprop(self, vertices: np.ndarray, dE_dp: np.ndarray, dE_dR: np.ndarray):
        """As backprop_into, returning (vertex_ids, grads (n, 3))."""
        buf = np.zeros((vertices.shape[0], 3))
        self.backprop_into(vertices, dE_dp, dE_dR, buf)
        ids = self.needed_vertices
        return ids, buf[ids]


def virtual_sensor(mesh: TriangleMesh, anchor: SensorAnchor):
    """World pose (p_v, R_v) of the sensor predicted from the mesh."""
    geo = AnchorGeometry(mesh.faces, anchor)
    return geo.sensor_pose(mesh.vertices)


class BatchedAnchors:
    """All sensor anchors evaluated together with stacked array ops.

    Anchors may have different one-ring sizes; ring faces are stored
    concatenated with segment boundaries for reduceat-style sums.
    """

    def __init__(self, faces: np.ndarray, anchors):
        self.geos = [AnchorGeometry(faces, a) for a in anchors]
        self.count = len(anchors)
        self.ring_faces = np.concatenate([g.ring_faces for g in self.geos])
        sizes = [g.ring_faces.shape[0] for g in self.geos]
        self.seg_starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.anchor_ids = np.array([g.anchor.anchor_vertex for g in self.geos])
        self.frame_ids = np.array([g.anchor.frame_vertex for g in self.geos])
        self.Q = np.stack([g.anchor.offset_rotation for g in self.geos])
        self.v = np.stack([g.anchor.offset_translation for g in self.geos])
        self.needed_vertices = np.unique(
            np.concatenate([self.ring_faces.ravel(), self.frame_ids])
        )

    def _frames(self, vertices: np.ndarray):
        corners = vertices[self.ring_faces]
        u = corners[:, 1] - corners[:, 0]
        w = corners[:, 2] - corners[:, 0]
        fn = cross_rows(u, w)
        n = np.add.reduceat(fn, self.seg_starts, axis=0)  # (S, 3)
        n_norm = np.linalg.norm(n, axis=1)
        if np.any(n_norm < 1e-14):
            raise DegenerateAnchorError("zero vertex normal at an anchor")
        n_hat = n / n_norm[:, None]
        p = vertices[self.anchor_ids]
        e = vertices[self.frame_ids] - p
        x = e - np.einsum("sk,sk->s", e, n_hat)[:, None] * n_hat
        x_norm = np.linalg.norm(x, axis=1)
        if np.any(x_norm < _DEGENERATE_TOL * np.maximum(np.linalg.norm(e, axis=1), 1e-300)):
            raise DegenerateAnchorError("frame edge parallel to anchor normal")
        x_hat = x / x_norm[:, None]
        y_hat = cross_rows(n_hat, x_hat)
        R_tilde = np.stack([x_hat, y_hat, n_hat], axis=2)  # columns
        return p, R_tilde, (u, w, n_hat, n_norm, e, x_hat, x_norm)

    def sensor_poses(self, vertices: np.ndarray):
        """(S, 3) positions and (S, 3, 3) orientations of all sensors."""
        p, R_tilde, _ = self._frames(vertices)
        pv = p + np.einsum("sab,sb->sa", R_tilde, self.v)
        Rv = R_tilde @ self.Q
        return pv, Rv

    def backprop_into(self, vertices: np.ndarray, dE_dp: np.ndarray, dE_dR: np.ndarray,
                      out: np.ndarray) -> None:
        """Accumulate dE/dvertices for all sensor poses into a (V, 3) buffer."""
        _, _, (u, w, n_hat, n_norm, e, x_hat, x_norm) = self._frames(vertices)
        g_R = dE_dR @ np.transpose(self.Q, (0, 2, 1)) + dE_dp[:, :, None] * self.v[:, None, :]
        gx, gy, gz = g_R[:, :, 0], g_R[:, :, 1], g_R[:, :, 2]
        g_xhat = gx - cross_rows(n_hat, gy)
        g_nhat = gz + cross_rows(x_hat, gy)
        g_x = (g_xhat - x_hat * np.einsum("sk,sk->s", x_hat, g_xhat)[:, None]) / x_norm[:, None]
        g_e = g_x - n_hat * np.einsum("sk,sk->s", n_hat, g_x)[:, None]
        g_nhat = (
            g_nhat
            - np.einsum("sk,sk->s", n_hat, g_x)[:, None] * e
            - np.einsum("sk,sk->s", e, n_hat)[:, None] * g_x
        )
        g_n = (g_nhat - n_hat * np.einsum("sk,sk->s", n_hat, g_nhat)[:, None]) / n_norm[:, None]

        np.add.at(out, self.frame_ids, g_e)
        np.add.at(out, self.anchor_ids, dE_dp - g_e)
        # expand per-anchor normal adjoints to their ring faces
        reps = np.diff(np.concatenate([self.seg_starts, [self.ring_faces.shape[0]]]))
        g_n_faces = np.repeat(g_n, reps, axis=0)
        g_u = cross_rows(w, g_n_faces)
        g_w = -cross_rows(u, g_n_faces)
        np.add.at(out, self.ring_faces[:, 1], g_u)
        np.add.at(out, self.ring_faces[:, 2], g_w)
        np.add.at(out, self.ring_faces[:, 0], -g_u - g_w)


# ---------------------------------------------------------------------------
# asset serialization


def _dense_to_triplets(M: np.ndarray):
    rows, cols = np.nonzero(M)
    return [[int(r), int(c), float(M[r, c])] for r, c in zip(rows, cols)]


def _triplets_to_dense(triplets, shape):
    M = np.zeros(shape)
    for r, c, v in triplets:
        M[int(r), int(c)] = v
    return M


def save_body_model(model: BodyModel, path) -> None:
    doc = {
        "parents": model.parents.tolist(),
        "template_vertices": model.template_vertices.tolist(),
        "faces": model.faces.tolist(),
        "skinning_weights": _dense_to_triplets(model.skinning_weights),
        "shape_dirs": model.shape_dirs.tolist(),
        "joint_regressor": _dense_to_triplets(model.joint_regressor),
        "keypoint_regressor": _dense_to_triplets(model.keypoint_regressor),
        "joint_limits": model.joint_limits.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_body_model(path) -> BodyModel:
    with open(path) as fh:
        doc = json.load(fh)
    parents = np.asarray(doc["parents"], dtype=np.int64)
    template = np.asarray(doc["template_vertices"], dtype=float)
    J, V = parents.shape[0], template.shape[0]
    kp_trip = doc["keypoint_regressor"]
    n_kp = max(int(t[0]) for t in kp_trip) + 1
    model = BodyModel(
        parents=parents,
        template_vertices=template,
        faces=np.asarray(doc["faces"], dtype=np.int64),
        skinning_weights=_triplets_to_dense(doc["skinning_weights"], (V, J)),
        shape_dirs=np.asarray(doc["shape_dirs"], dtype=float),
        joint_regressor=_triplets_to_dense(doc["joint_regressor"], (J, V)),
        keypoint_regressor=_triplets_to_dense(kp_trip, (n_kp, V)),
        joint_limits=np.asarray(doc["joint_limits"], dtype=float),
    )
    model.validate()
    return model
