"""Multi-view registration: keypoint triangulation and body-to-scan fitting.

Produces reference poses and shape by fitting the body model to dense
surface scans plus triangulated 3D keypoints, with a spine prior from a
tracked back tag and joint-limit regularization. Fitting runs two Adam
passes per frame: all parameters first, then pose only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import BodyModel, PoseCache, PoseParams, joint_limit_penalty, joint_limit_penalty_grad
from .geom import kernels
from .geom.mesh import TriangleMesh, closest_points_on_mesh
from .geom.robust import robustifier, robustifier_grad
from .optim import AdamConfig, Objective, adam_minimize
from .synth import Camera


@dataclass(eq=False)
class MultiViewObservation:
    """One frame of multi-view data: cameras, 2D keypoints, scan, back tag."""

    cameras: list[Camera]
    keypoints: np.ndarray  # (n_views, 25, 2) pixels
    confidences: np.ndarray  # (n_views, 25)
    scan: TriangleMesh | None = None
    back_tag: tuple[np.ndarray, np.ndarray] | None = None  # (q, U)

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=float)
        self.confidences = np.asarray(self.confidences, dtype=float)


@dataclass
class RegistrationConfig:
    scan_sample_count: int = 50_000
    outside_weight_multiplier: float = 5.0
    joint_weights: np.ndarray | None = None  # (25,), defaults to 1 with 0.5 on face/feet
    lambda_j: float = 1.0
    lambda_s: float = 1.0
    lambda_spine: float = 0.1
    lambda_reg: float = 1e-3
    robust_alpha: float = 1.0
    robust_scale: float = 0.05  # meters
    spine_vertex_ids: np.ndarray | None = None
    confidence_tau: float = 0.5
    two_pass: bool = True
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(learning_rate=0.01, iterations=150))
    seed: int = 0

    def weights(self) -> np.ndarray:
        if self.joint_weights is not None:
            return np.asarray(self.joint_weights, dtype=float)
        w = np.ones(25)
        w[[0, 15, 16, 17, 18]] = 0.5  # face
        w[[19, 20, 21, 22, 23, 24]] = 0.5  # feet
        return w


# ---------------------------------------------------------------------------
# triangulation


def triangulate_keypoints(obs: MultiViewObservation, tau: float = 0.5):
    """OLS triangulation of each keypoint from its confident views.

    Returns (points (25, 3), residual_px (25,), valid (25,)). Keypoints
    seen in fewer than two views, or with degenerate geometry, are marked
    invalid (NaN position).
    """
    n_views, n_kp = obs.keypoints.shape[:2]
    points = np.full((n_kp, 3), np.nan)
    residuals = np.full(n_kp, np.nan)
    valid = np.zeros(n_kp, dtype=bool)
    P = []
    for cam in obs.cameras:
        E = np.hstack([cam.extrinsics.rotation, cam.extrinsics.translation[:, None]])
        P.append(cam.K @ E)

    for k in range(n_kp):
        rows, rhs, used = [], [], []
        for v in range(n_views):
            if obs.confidences[v, k] < tau or not np.all(np.isfinite(obs.keypoints[v, k])):
                continue
            u, w = obs.keypoints[v, k]
            rows.append(u * P[v][2, :3] - P[v][0, :3])
            rhs.append(P[v][0, 3] - u * P[v][2, 3])
            rows.append(w * P[v][2, :3] - P[v][1, :3])
            rhs.append(P[v][1, 3] - w * P[v][2, 3])
            used.append(v)
        if len(used) < 2:
            continue
        A = np.stack(rows)
        b = np.asarray(rhs)
        sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
        if rank < 3 or sv[-1] < 1e-8 * sv[0]:
            continue  # degenerate geometry (e.g. collinear centers through the point)
        points[k] = sol
        errs = []
        for v in used:
            px, z = obs.cameras[v].project(sol)
            if z[0] > 0:
                errs.append(np.sum((px[0] - obs.keypoints[v, k]) ** 2))
        residuals[k] = np.sqrt(np.mean(errs)) if errs else np.nan
        valid[k] = True
    return points, residuals, valid


# ---------------------------------------------------------------------------
# inside / outside classification

_PARITY_DIRECTIONS = np.array(
    [
        [0.57735027, 0.57735027, 0.57735027],
        [-0.28867513, 0.80178373, -0.53452248],
        [0.80178373, -0.26726124, 0.53452248],
        [-0.53452248, -0.80178373, 0.26726124],
        [0.96362411, 0.14824986, 0.22237479],
        [0.10482848, -0.31448545, 0.94345634],
        [-0.72760688, 0.48507125, -0.48507125],
        [0.32929278, 0.93968147, -0.09313795],
    ]
)


def inside_mesh(points: np.ndarray, mesh: TriangleMesh, check_watertight: bool = True) -> np.ndarray:
    """Ray-parity inside test for a batch of points against a closed mesh.

    Rays near triangle edges are retried along different directions.
    """
    if check_watertight and not mesh.is_watertight():
        raise ValueError("inside test requires a watertight mesh")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    tris = mesh.face_corners()
    inside = np.zeros(pts.shape[0], dtype=bool)
    pending = np.arange(pts.shape[0])
    for d in _PARITY_DIRECTIONS:
        counts, reliable = kernels.ray_parity(pts[pending], d, tris)
        inside[pending[reliable]] = counts[reliable] % 2 == 1
        pending = pending[~reliable]
        if pending.size == 0:
            break
    if pending.size:
        counts, _ = kernels.ray_parity(pts[pending], _PARITY_DIRECTIONS[0], tris)
        inside[pending] = counts % 2 == 1
    return inside


def inside_mesh_test(p: np.ndarray, mesh: TriangleMesh) -> bool:
    """True iff the single point lies inside the watertight mesh."""
    return bool(inside_mesh(np.asarray(p, dtype=float).reshape(1, 3), mesh)[0])


# ---------------------------------------------------------------------------
# OBJ subset


def load_obj(path) -> TriangleMesh:
    """Minimal ASCII OBJ reader: v and f lines only, 1-based indices."""
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                if len(idx) != 3:
                    raise ValueError("only triangle faces are supported")
                faces.append(idx)
    return TriangleMesh(np.asarray(verts, dtype=float), np.asarray(faces, dtype=np.int64))


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# scan fitting


def _sample_scan(scan: TriangleMesh, n: int, rng) -> np.ndarray:
    areas = scan.face_areas()
    probs = areas / areas.sum()
    fidx = rng.choice(scan.face_count, size=n, p=probs)
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    c = scan.vertices[scan.faces[fidx]]
    return c[:, 0] * (1 - u - v)[:, None] + c[:, 1] * u[:, None] + c[:, 2] * v[:, None]


class _ScanFitEnergy:
    """Shared state for one frame's registration energies."""

    def __init__(self, model, obs: MultiViewObservation, cfg: RegistrationConfig,
                 kp3d, kp_valid, unlock_shape: bool):
        self.model = model
        self.cfg = cfg
        self.kp3d = kp3d
        self.kp_valid = kp_valid
        self.unlock_shape = unlock_shape
        rng = np.random.default_rng(cfg.seed)
        if obs.scan is not None:
            self.scan_samples = _sample_scan(obs.scan, cfg.scan_sample_count, rng)
            self.scan_mesh = obs.scan
        else:
            self.scan_samples = None
            self.scan_mesh = None
        self.back_tag = obs.back_tag
        self.w_j = cfg.weights()

    def split(self, x):
        if self.unlock_shape:
            return x[: -self.model.shape_count], x[-self.model.shape_count :]
        return x, None

    def value_and_grad(self, x, pose_proto: PoseParams):
        cfg = self.cfg
        vec, beta = self.split(x)
        pose = pose_proto.with_vector(vec)
        if beta is not None:
            pose = PoseParams(pose.theta_r, pose.theta_b, pose.t, beta)
        cache = PoseCache(self.model, pose)
        verts = cache.vertices()
        V = verts.shape[0]
        dE_dverts = np.zeros((V, 3))
        val = 0.0

        if self.kp3d is not None and np.any(self.kp_valid):
            kp_hat = self.model.keypoint_regressor @ verts
            diff = kp_hat - np.where(self.kp_valid[:, None], self.kp3d, kp_hat)
            w = self.w_j * self.kp_valid
            n_kp = self.kp3d.shape[0]
            val += cfg.lambda_j / n_kp * float(np.sum(w[:, None] * diff**2))
            g_kp = (2.0 * cfg.lambda_j / n_kp) * w[:, None] * diff
            dE_dverts += self.model.keypoint_regressor.T @ g_kp

        # bidirectional robustified closest-point surface term; outside scan
        # points get up-weighted so the fit settles inside the (clothed) scan
        if self.scan_samples is not None:
            mesh = TriangleMesh(verts, self.model.faces)
            inside = inside_mesh(self.scan_samples, mesh, check_watertight=False)
            w_scan = np.where(inside, 1.0, cfg.outside_weight_multiplier)
            n_s = self.scan_samples.shape[0]

            d2_sv, closest_sv, fidx_sv, bary_sv = closest_points_on_mesh(self.scan_samples, mesh)
            r_sv = np.sqrt(d2_sv)
            val += cfg.lambda_s / n_s * float(np.sum(w_scan * robustifier(r_sv, cfg.robust_alpha, cfg.robust_scale)))
            with np.errstate(invalid="ignore"):
                coef = np.where(r_sv > 1e-12,
                                w_scan * robustifier_grad(r_sv, cfg.robust_alpha, cfg.robust_scale) / r_sv,
                                0.0)
            g_c = (cfg.lambda_s / n_s) * coef[:, None] * (closest_sv - self.scan_samples)
            hit_faces = self.model.faces[fidx_sv]
            for k in range(3):
                np.add.at(dE_dverts, hit_faces[:, k], bary_sv[:, k, None] * g_c)

            d2_vs, closest_vs, _, _ = closest_points_on_mesh(verts, self.scan_mesh)
            r_vs = np.sqrt(d2_vs)
            val += cfg.lambda_s / V * float(np.sum(robustifier(r_vs, cfg.robust_alpha, cfg.robust_scale)))
            with np.errstate(invalid="ignore"):
                coef2 = np.where(r_vs > 1e-12,
                                 robustifier_grad(r_vs, cfg.robust_alpha, cfg.robust_scale) / r_vs,
                                 0.0)
            dE_dverts += (cfg.lambda_s / V) * coef2[:, None] * (verts - closest_vs)

        # spine prior: hand-picked lower-back vertices stay near the tag
        if self.back_tag is not None and cfg.spine_vertex_ids is not None:
            ids = np.asarray(cfg.spine_vertex_ids, dtype=int)
            diff = verts[ids] - self.back_tag[0]
            val += cfg.lambda_spine * float(np.sum(diff**2))
            np.add.at(dE_dverts, ids, 2.0 * cfg.lambda_spine * diff)

        val += cfg.lambda_reg * joint_limit_penalty(self.model, pose)
        if not np.isfinite(val):
            raise FloatingPointError("non-finite registration cost")

        grad_pose = cache.backprop_vertices(np.arange(V), dE_dverts)
        grad_pose += cfg.lambda_reg * joint_limit_penalty_grad(self.model, pose)
        if beta is not None:
            grad_beta = cache.backprop_shape(np.arange(V), dE_dverts)
            return val, np.concatenate([grad_pose, grad_beta])
        return val, grad_pose


class _Memo:
    """One-slot value+gradient cache keyed on the parameter bytes."""

    def __init__(self, fn):
        self.fn = fn
        self.key = None
        self.out = None

    def __call__(self, x):
        key = x.tobytes()
        if key != self.key:
            self.key = key
            self.out = self.fn(x)
        return self.out


def fit_body_to_scan(model: BodyModel, obs: MultiViewObservation, init: PoseParams,
                     cfg: RegistrationConfig = None, unlock_shape: bool = False) -> PoseParams:
    """Two-pass robust registration of the body to one frame's scan.

    Pass 1 optimizes root, pose, and translation (plus shape when
    unlock_shape); pass 2 refines the rotations only. Warm-start init
    should come from the previous frame of the sequence.
    """
    cfg = cfg or RegistrationConfig()
    if obs.cameras:
        kp3d, _, kp_valid = triangulate_keypoints(obs, cfg.confidence_tau)
    else:
        kp3d, kp_valid = None, None
    energy = _ScanFitEnergy(model, obs, cfg, kp3d, kp_valid, unlock_shape)

    pose = init.copy()
    x0 = pose.as_vector()
    if unlock_shape:
        x0 = np.concatenate([x0, pose.beta])

    memo = _Memo(lambda x: energy.value_and_grad(x, pose))
    obj = Objective(lambda x: memo(x)[0], lambda x: memo(x)[1])
    x1, _, _ = adam_minimize(obj, x0, cfg.adam)

    vec, beta = energy.split(x1)
    result = pose.with_vector(vec)
    if beta is not None:
        result = PoseParams(result.theta_r, result.theta_b, result.t, beta)

    if cfg.two_pass:
        # pass 2: rotations only; translation (and shape) frozen
        energy.unlock_shape = False
        frozen = result
        n_rot = 3 + frozen.theta_b.size

        def expand(xr):
            full = frozen.as_vector().copy()
            full[:n_rot] = xr
            return full

        memo2 = _Memo(lambda xr: _trim(energy.value_and_grad(expand(xr), frozen), n_rot))
        obj2 = Objective(lambda x: memo2(x)[0], lambda x: memo2(x)[1])
        x2, _, _ = adam_minimize(obj2, frozen.as_vector()[:n_rot], cfg.adam)
        result = frozen.with_vector(expand(x2))
    return result


def _trim(value_grad, n):
    v, g = value_grad
    return v, g[:n]


def solve_shape(model: BodyModel, a_pose_obs: MultiViewObservation, init: PoseParams,
                cfg: RegistrationConfig = None) -> np.ndarray:
    """Shape from a minimally clothed A-pose frame; pose discarded."""
    cfg = cfg or RegistrationConfig()
    fitted = fit_body_to_scan(model, a_pose_obs, init, cfg, unlock_shape=True)
    return fitted.beta
