"""Synthetic capture generation: ground-truth motion plus noisy streams.

Noise conventions: 3D position sigmas are the expected RMS of the error
norm (per-axis std = sigma / sqrt(3)); rotation sigmas are the RMS
perturbation angle in degrees applied about a uniformly random axis;
keypoint pixel sigma is a per-axis std. With an all-zero NoiseSpec every
stream reproduces its ground-truth value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .body import BodyModel, AnchorGeometry, PoseCache, PoseParams, SensorAnchor, regress_keypoints
from .geom.transforms import RigidTransform, apply_offset
from .geom.rotations import axis_angle_to_matrix


@dataclass
class NoiseSpec:
    em_pos_sigma: float = 0.01  # meters
    em_rot_sigma: float = 2.5  # degrees
    kp_pixel_sigma: float = 2.0  # pixels, per axis
    kp_dropout_prob: float = 0.0
    kp_outlier_prob: float = 0.0
    depth_sigma: float = 0.01  # meters, along the viewing ray
    camera_pos_sigma: float = 0.018  # meters
    camera_rot_sigma: float = 0.4  # degrees
    tag_pos_sigma: float = 0.001  # meters
    tag_rot_sigma: float = 0.1  # degrees
    time_offset: float = 0.0  # frames, fractional

    def __post_init__(self):
        for name in ("em_pos_sigma", "em_rot_sigma", "kp_pixel_sigma", "depth_sigma",
                     "camera_pos_sigma", "camera_rot_sigma", "tag_pos_sigma", "tag_rot_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("kp_dropout_prob", "kp_outlier_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(eq=False)
class Camera:
    K: np.ndarray  # (3, 3) intrinsics, pixels
    extrinsics: RigidTransform  # world -> camera
    resolution: tuple[int, int] = (1920, 1440)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if abs(self.K[1, 0]) > 1e-12 or abs(self.K[2, 0]) > 1e-12 or abs(self.K[2, 1]) > 1e-12:
            raise ValueError("K must be upper triangular")

    def project(self, points: np.ndarray):
        """Perspective projection; returns (pixels (N, 2), depth (N,))."""
        pc = self.extrinsics.apply(np.atleast_2d(points))
        h = pc @ self.K.T
        z = h[:, 2]
        px = np.full((pc.shape[0], 2), np.nan)
        ok = z > 1e-9
        px[ok] = h[ok, :2] / z[ok, None]
        return px, z


def default_intrinsics() -> np.ndarray:
    return np.array([[1400.0, 0.0, 960.0], [0.0, 1400.0, 720.0], [0.0, 0.0, 1.0]])


@dataclass(eq=False)
class CaptureFrame:
    timestamp: float
    camera: Camera
    keypoints: np.ndarray  # (25, 2) pixels; NaN when missing
    confidences: np.ndarray  # (25,)
    pointcloud: np.ndarray  # (N, 3) world meters
    human_crop_idx: np.ndarray  # indices into pointcloud

    @property
    def human_points(self) -> np.ndarray:
        return self.pointcloud[self.human_crop_idx]


@dataclass(eq=False)
class SensorFrameSet:
    sensor_ids: list[str]
    positions: np.ndarray  # (T, S, 3) EM-local meters
    rotations: np.ndarray  # (T, S, 3, 3) EM-local

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def sensor_count(self) -> int:
        return self.positions.shape[1]


def _pos_noise(rng, sigma, shape):
    return rng.standard_normal(shape) * (sigma / np.sqrt(3.0))


def _rot_noise(rng, sigma_deg):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.standard_normal() * np.deg2rad(sigma_deg)
    return axis_angle_to_matrix(axis * angle)


# ---------------------------------------------------------------------------
# motion

MOTION_STYLES = ("walk_circle", "range_of_motion", "loop_closure")

_JOINT_COUNT = 24


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def generate_motion(model: BodyModel, duration: float, fps: int, style: str,
                    seed: int = 0, beta=None) -> list[PoseParams]:
    """Smooth ground-truth pose sequence; starts in a T-pose facing +z.

    loop_closure walks a whole number of circles so the last frame's
    translation returns to the first within floating-point error.
    """
    if duration <= 0 or fps <= 0:
        raise ValueError("duration and fps must be positive")
    if style not in MOTION_STYLES:
        raise ValueError(f"unknown motion style {style!r}")
    rng = np.random.default_rng(seed)
    T = int(round(duration * fps))
    tt = np.arange(T) / fps
    env = _smoothstep(tt / 1.0)  # ramp oscillations in over the first second

    J = model.joint_count
    theta_b = np.zeros((T, (J - 1) * 3))
    root_pos = np.zeros((T, 3))
    yaw = np.zeros(T)
    base_height = 0.95

    def osc(amp, freq, phase=0.0):
        return amp * np.sin(2.0 * np.pi * freq * tt + phase) * env

    def set_axis(joint, axis, values):
        theta_b[:, (joint - 1) * 3 + axis] = values

    if style in ("walk_circle", "loop_closure"):
        radius = 1.0
        speed = 1.0  # m/s along the circle
        if style == "loop_closure":
            n_turns = max(1, int(round(speed * (T - 1) / fps / (2.0 * np.pi * radius))))
            phi = 2.0 * np.pi * n_turns * np.arange(T) / (T - 1)
        else:
            phi = speed / radius * tt
        # bounce phase locked to the circle so loop_closure returns exactly
        bounce = 0.015 * np.sin(8.0 * phi) * env
        root_pos = np.stack(
            [radius * (1.0 - np.cos(phi)), base_height + bounce, radius * np.sin(phi)],
            axis=1,
        )
        yaw = phi
        f_step = 0.8
        swing = osc(0.4, f_step)
        set_axis(1, 0, swing)
        set_axis(2, 0, -swing)
        knee = 0.3 * (1.0 - np.cos(2.0 * np.pi * f_step * tt + np.pi / 3)) * 0.5 * env
        set_axis(4, 0, knee)
        set_axis(5, 0, 0.3 * (1.0 - np.cos(2.0 * np.pi * f_step * tt + np.pi + np.pi / 3)) * 0.5 * env)
        set_axis(16, 0, -0.8 * swing)
        set_axis(17, 0, 0.8 * swing)
        set_axis(18, 1, -0.15 * (1.0 - np.cos(2.0 * np.pi * f_step * tt)) * 0.5 * env)
        set_axis(19, 1, 0.15 * (1.0 - np.cos(2.0 * np.pi * f_step * tt)) * 0.5 * env)
        set_axis(3, 1, osc(0.05, f_step / 2))
        set_axis(15, 1, osc(0.08, 0.3))
    else:  # range_of_motion
        root_pos = np.stack(
            [osc(0.03, 0.2), base_height + osc(0.02, 0.35), osc(0.03, 0.25, 1.0)], axis=1
        )
        for joint in range(1, J):
            for axis in range(3):
                lo, hi = model.joint_limits[joint - 1, axis]
                freq = rng.uniform(0.15, 0.55)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                if lo >= -1e-9:  # one-sided positive
                    amp = rng.uniform(0.1, min(0.6, hi * 0.5))
                    vals = amp * (1.0 - np.cos(2.0 * np.pi * freq * tt + phase)) * 0.5 * env
                elif hi <= 1e-9:  # one-sided negative
                    amp = rng.uniform(0.1, min(0.6, -lo * 0.5))
                    vals = -amp * (1.0 - np.cos(2.0 * np.pi * freq * tt + phase)) * 0.5 * env
                else:
                    amp = rng.uniform(0.05, 0.45)
                    vals = amp * np.sin(2.0 * np.pi * freq * tt + phase) * env
                set_axis(joint, axis, vals)

    if beta is None:
        beta = np.zeros(model.shape_count)
    beta = np.asarray(beta, dtype=float)
    j0 = model.rest_joints(beta)[0]

    poses = []
    for i in range(T):
        theta_r = np.array([0.0, yaw[i], 0.0])
        # root joint sits at rest offset j0 plus t; solve t for the target position
        t = root_pos[i] - j0
        poses.append(PoseParams(theta_r, theta_b[i], t, beta.copy()))
    return poses


def interpolate_poses(poses: list[PoseParams], shift: float) -> list[PoseParams]:
    """Resample a pose sequence at frame index i + shift (linear, clamped)."""
    if shift == 0.0:
        return [p.copy() for p in poses]
    T = len(poses)
    out = []
    for i in range(T):
        s = min(max(i + shift, 0.0), T - 1.0)
        lo = int(np.floor(s))
        hi = min(lo + 1, T - 1)
        a = s - lo
        p0, p1 = poses[lo], poses[hi]
        out.append(
            PoseParams(
                (1 - a) * p0.theta_r + a * p1.theta_r,
                (1 - a) * p0.theta_b + a * p1.theta_b,
                (1 - a) * p0.t + a * p1.t,
                p0.beta,
            )
        )
    return out


# ---------------------------------------------------------------------------
# sensor streams


def virtual_sensor_world_poses(model: BodyModel, poses, anchors, source_anchor):
    """World-frame virtual poses per frame for the anchors and the source.

    Returns (p (T, S, 3), R (T, S, 3, 3), p0 (T, 3), R0 (T, 3, 3)).
    """
    geos = [AnchorGeometry(model.faces, a) for a in anchors]
    src_geo = AnchorGeometry(model.faces, source_anchor)
    T, S = len(poses), len(anchors)
    p = np.empty((T, S, 3))
    R = np.empty((T, S, 3, 3))
    p0 = np.empty((T, 3))
    R0 = np.empty((T, 3, 3))
    for i, pose in enumerate(poses):
        verts = PoseCache(model, pose).vertices()
        for s, geo in enumerate(geos):
            p[i, s], R[i, s] = geo.sensor_pose(verts)
        p0[i], R0[i] = src_geo.sensor_pose(verts)
    return p, R, p0, R0


def simulate_em(model: BodyModel, poses, anchors, source_anchor: SensorAnchor,
                noise: NoiseSpec, seed: int = 0) -> SensorFrameSet:
    """EM-local measurements: virtual poses expressed relative to the source."""
    rng = np.random.default_rng(seed)
    if noise.time_offset != 0.0:
        poses = interpolate_poses(poses, noise.time_offset)
    p, R, p0, R0 = virtual_sensor_world_poses(model, poses, anchors, source_anchor)
    T, S = p.shape[:2]
    p_local = np.einsum("tba,tsb->tsa", R0, p - p0[:, None, :])
    R_local = np.einsum("tba,tsbc->tsac", R0, R)
    for i in range(T):
        for s in range(S):
            p_local[i, s] += _pos_noise(rng, noise.em_pos_sigma, 3)
            R_local[i, s] = R_local[i, s] @ _rot_noise(rng, noise.em_rot_sigma)
    return SensorFrameSet([a.sensor_id for a in anchors], p_local, R_local)


# ---------------------------------------------------------------------------
# camera streams


def orbit_camera_trajectory(root_positions: np.ndarray, fps: int, radius: float = 2.5,
                            height: float = 1.4, angular_speed: float = 0.15,
                            start_dir=(0.0, 0.0, 1.0)) -> list[RigidTransform]:
    """Hand-held-style orbit: camera circles the subject, always looking at it.

    Returns camera-to-world poses (z forward, y down image convention).
    The first camera sits along start_dir from the subject, so a body
    facing +z starts facing the camera.
    """
    root_positions = np.asarray(root_positions, dtype=float)
    T = root_positions.shape[0]
    start = np.asarray(start_dir, dtype=float)
    start = start / np.linalg.norm(start)
    phi0 = np.arctan2(start[0], start[2])
    out = []
    up = np.array([0.0, 1.0, 0.0])
    for i in range(T):
        phi = phi0 + angular_speed * i / fps
        target = root_positions[i]
        eye = target + np.array([radius * np.sin(phi), 0.0, radius * np.cos(phi)])
        eye[1] = height
        f = target - eye
        f = f / np.linalg.norm(f)
        x = np.cross(f, up)
        x /= np.linalg.norm(x)
        y = np.cross(f, x)
        R_c2w = np.column_stack([x, y, f])
        out.append(RigidTransform(R_c2w, eye))
    return out


def sample_mesh_surface(mesh, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted surface samples; returns (points (n,3), face normals (n,3))."""
    areas = mesh.face_areas()
    probs = areas / areas.sum()
    fidx = rng.choice(mesh.face_count, size=n, p=probs)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    corners = mesh.vertices[mesh.faces[fidx]]
    pts = (
        corners[:, 0] * (1 - u - v)[:, None]
        + corners[:, 1] * u[:, None]
        + corners[:, 2] * v[:, None]
    )
    nrm = mesh.face_normals_raw()[fidx]
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    return pts, nrm


def perturb_rigid(T: RigidTransform, rng, pos_sigma: float, rot_sigma_deg: float) -> RigidTransform:
    return RigidTransform(
        T.rotation @ _rot_noise(rng, rot_sigma_deg),
        T.translation + _pos_noise(rng, pos_sigma, 3),
    )


def simulate_camera(model: BodyModel, poses, trajectory, K, noise: NoiseSpec,
                    seed: int = 0, fps: int = 30, n_surface: int = 300,
                    n_background: int = 80) -> list[CaptureFrame]:
    """Keypoints, depth point clouds, and measured camera poses per frame.

    Keypoints are projections through the true camera plus pixel noise,
    dropout (confidence forced below tau) and outlier substitution; the
    reported camera pose carries its own noise, and depth points are
    back-projected through that noisy pose, as a self-localizing device
    would.
    """
    if len(trajectory) != len(poses):
        raise ValueError("trajectory length must match pose count")
    rng = np.random.default_rng(seed)
    K = np.asarray(K, dtype=float)
    frames = []
    for i, pose in enumerate(poses):
        cache = PoseCache(model, pose)
        mesh = cache.mesh()
        cam_true = Camera(K, trajectory[i].inverse())
        kp3d = regress_keypoints(model, mesh)
        px, depth = cam_true.project(kp3d)

        if noise.kp_dropout_prob > 0.0:
            conf = np.where(rng.random(25) < noise.kp_dropout_prob,
                            rng.uniform(0.0, 0.45, 25), rng.uniform(0.6, 1.0, 25))
        else:
            conf = np.ones(25)
        behind = depth <= 1e-9
        conf[behind] = 0.0
        px[behind] = np.nan
        px = px + rng.standard_normal((25, 2)) * noise.kp_pixel_sigma
        outliers = rng.random(25) < noise.kp_outlier_prob
        if np.any(outliers):
            w, h = 1920, 1440
            px[outliers] = rng.uniform([0, 0], [w, h], size=(int(outliers.sum()), 2))

        pts, normals = sample_mesh_surface(mesh, n_surface, rng)
        cam_center = trajectory[i].translation
        view = pts - cam_center
        visible = np.einsum("nk,nk->n", normals, view) < 0.0
        pts = pts[visible]

        bg = np.zeros((n_background, 3))
        if n_background:
            ang = rng.uniform(0, 2 * np.pi, n_background)
            rad = np.sqrt(rng.random(n_background)) * 2.0
            center = cache.p_glob[0]
            bg = np.stack(
                [center[0] + rad * np.cos(ang), np.zeros(n_background), center[2] + rad * np.sin(ang)],
                axis=1,
            )

        world_pts = np.concatenate([pts, bg], axis=0)
        pc_cam = cam_true.extrinsics.apply(world_pts)
        if noise.depth_sigma > 0:
            rays = pc_cam / np.linalg.norm(pc_cam, axis=1, keepdims=True)
            pc_cam = pc_cam + rays * rng.standard_normal((pc_cam.shape[0], 1)) * noise.depth_sigma
        cam_meas_pose = perturb_rigid(trajectory[i], rng, noise.camera_pos_sigma, noise.camera_rot_sigma)
        pc_world = cam_meas_pose.apply(pc_cam)

        frames.append(
            CaptureFrame(
                timestamp=i / fps,
                camera=Camera(K, cam_meas_pose.inverse()),
                keypoints=px,
                confidences=conf,
                pointcloud=pc_world,
                human_crop_idx=np.arange(pts.shape[0]),
            )
        )
    return frames


def simulate_tag_track(carrier_poses, tag_offset, noise: NoiseSpec | None = None, seed: int = 0):
    """Optically tracked fiducial rigidly attached to each carrier pose.

    Returns (q (T, 3), U (T, 3, 3)) world-frame tag measurements.
    """
    noise = noise or NoiseSpec.zero()
    rng = np.random.default_rng(seed)
    t_o, R_o = tag_offset
    T = len(carrier_poses)
    q = np.empty((T, 3))
    U = np.empty((T, 3, 3))
    for i, pose in enumerate(carrier_poses):
        qi, Ui = apply_offset(pose.translation, pose.rotation, t_o, R_o)
        q[i] = qi + _pos_noise(rng, noise.tag_pos_sigma, 3)
        U[i] = Ui @ _rot_noise(rng, noise.tag_rot_sigma)
    return q, U


def random_wiggle_track(T: int, fps: int, seed: int = 0, pos_scale: float = 0.5,
                        rot_scale: float = 1.2, center=(0.0, 1.0, 0.0)) -> list[RigidTransform]:
    """Smooth random SE(3) trajectory for calibration wiggle sequences."""
    rng = np.random.default_rng(seed)
    tt = np.arange(T) / fps
    center = np.asarray(center, dtype=float)

    def smooth_signal(scale):
        out = np.zeros((T, 3))
        for _ in range(3):
            amp = rng.uniform(0.3, 1.0, 3) * scale
            freq = rng.uniform(0.1, 0.7, 3)
            phase = rng.uniform(0, 2 * np.pi, 3)
            out += amp * np.sin(2 * np.pi * freq * tt[:, None] + phase)
        return out

    pos = center + smooth_signal(pos_scale)
    aa = smooth_signal(rot_scale)
    return [RigidTransform(axis_angle_to_matrix(aa[i]), pos[i]) for i in range(T)]
