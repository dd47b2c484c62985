"""Three-stage pose solver: EM-local fit, world alignment, smoothing.

Stage 1 fits the body to the raw EM measurements with batched L-BFGS,
treating the source frame as the world (two passes: root-only, then all
parameters). Stage 2 lifts the fit into world coordinates frame by frame
with Adam, fusing keypoint reprojection, source-relative EM residuals,
a body-pose prior from stage 1, and depth point clouds. Stage 3 smooths
translations and per-joint quaternions with a Savitzky-Golay filter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .body import AnchorGeometry, BodyModel, PoseCache, PoseParams, joint_limit_penalty, joint_limit_penalty_grad
from .geom.mesh import TriangleMesh, closest_points_on_mesh
from .geom.robust import geman_mcclure, geman_mcclure_grad
from .geom.rotations import (
    axis_angle_to_matrix,
    axis_angle_to_quat,
    matrix_to_axis_angle,
    quat_to_axis_angle,
    quaternion_sign_continuity,
)
from .optim import AdamConfig, LbfgsConfig, Objective, adam_minimize, lbfgs_minimize
from .synth import CaptureFrame, SensorFrameSet


@dataclass
class Stage1Config:
    lambda_p: float = 1.0
    lambda_r: float = 1.0
    lambda_rec: float = 1.0
    lambda_bp: float = 1e-5
    lbfgs: LbfgsConfig = field(default_factory=lambda: LbfgsConfig(steps=80))
    two_pass: bool = True


@dataclass
class Stage2Config:
    lambda_2d: float = 0.01
    lambda_rec: float = 1.0
    lambda_prior: float = 1.0
    lambda_pcl: float = 10.0
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(learning_rate=0.01, iterations=100))
    tau: float = 0.5
    sigma_gm: float = 100.0
    use_rec: bool = True  # ablation switch for the EM term
    use_prior: bool = True  # ablation switch for the stage-1 pose prior


@dataclass
class Stage3Config:
    window: int = 7
    polyorder: int = 2
    lambda_reg: float = 10.0  # used by the optional dense-refinement hook

    def __post_init__(self):
        if self.window % 2 == 0 or self.window <= self.polyorder:
            raise ValueError("window must be odd and larger than the polynomial order")


@dataclass
class SequenceSolution:
    stage1: list[PoseParams]
    stage2: list[PoseParams]
    stage3: list[PoseParams]
    traces: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# energy terms; each returns (value, grad over [theta_r, theta_b, t], info)


class SensorRig:
    """Precomputed anchor geometry for the sensor set plus the source.

    All anchors (sensors first, source last) are evaluated as one batch.
    """

    def __init__(self, model: BodyModel, anchors, source_anchor):
        self.model = model
        self.batched = BatchedAnchors(model.faces, list(anchors) + [source_anchor])
        self.n_sensors = len(anchors)
        self.needed = self.batched.needed_vertices


def e_rec(cache: PoseCache, rig: SensorRig, meas_p, meas_R, lam_p: float, lam_r: float,
          source_relative: bool = True, verts: np.ndarray | None = None, need_grad: bool = True):
    """EM reconstruction cost against the frame's measurements.

    With source_relative the virtual sensors are expressed in the virtual
    source frame (matching EM-local measurements, invariant to global
    motion); otherwise they are compared in world coordinates directly
    (stage 1, where the source frame is the world). Sensors with
    non-finite measurements are skipped and counted in the info dict.
    """
    if verts is None:
        verts = cache.scatter_vertices(rig.needed)
    S = rig.n_sensors
    pv_all, Rv_all = rig.batched.sensor_poses(verts)
    pv, Rv = pv_all[:S], Rv_all[:S]
    valid = np.all(np.isfinite(meas_p), axis=1) & np.all(np.isfinite(meas_R), axis=(1, 2))
    skipped = int(S - valid.sum())
    vm = valid[:, None]
    vmm = valid[:, None, None]

    if source_relative:
        p0, R0 = pv_all[S], Rv_all[S]
        rel = pv - p0
        q = rel @ R0  # rows R0^T (pv - p0)
        Sm = np.einsum("ba,sbc->sac", R0, Rv)
        rp = np.where(vm, q - np.where(vm, meas_p, 0.0), 0.0)
        rR = np.where(vmm, Sm - np.where(vmm, meas_R, 0.0), 0.0)
    else:
        rp = np.where(vm, pv - np.where(vm, meas_p, 0.0), 0.0)
        rR = np.where(vmm, Rv - np.where(vmm, meas_R, 0.0), 0.0)
    val = lam_p * float(np.sum(rp * rp)) + lam_r * float(np.sum(rR * rR))

    grad = None
    if need_grad:
        gq = 2.0 * lam_p * rp
        gS = 2.0 * lam_r * rR
        dps = np.zeros((S + 1, 3))
        dRs = np.zeros((S + 1, 3, 3))
        if source_relative:
            dps[:S] = gq @ R0.T
            dRs[:S] = np.einsum("ab,sbc->sac", R0, gS)
            dps[S] = -dps[:S].sum(axis=0)
            dRs[S] = np.einsum("sa,sb->ab", rel, gq) + np.einsum("sab,scb->ac", Rv, gS)
        else:
            dps[:S] = gq
            dRs[:S] = gS
        buf = np.zeros((verts.shape[0], 3))
        rig.batched.backprop_into(verts, dps, dRs, buf)
        grad = cache.backprop_vertices(rig.needed, buf[rig.needed])
    return val, grad, {"skipped": skipped}


def e_2d(cache: PoseCache, frame: CaptureFrame, tau: float, sigma_gm: float,
         verts: np.ndarray | None = None, need_grad: bool = True,
         dE_dverts_out: np.ndarray | None = None, weight: float = 1.0):
    """Robustified keypoint reprojection cost over confident keypoints.

    When dE_dverts_out is given, weight * dE/dvertices is accumulated
    there and the returned gradient is None (caller backpropagates once
    for all terms sharing the buffer).
    """
    model = cache.model
    if verts is None:
        verts = cache.vertices()
    X = model.keypoint_regressor @ verts
    extr = frame.camera.extrinsics
    K = frame.camera.K
    pc = extr.apply(X)
    h = pc @ K.T
    grad = None
    conf_ok = (frame.confidences >= tau) & np.all(np.isfinite(frame.keypoints), axis=1)
    front = h[:, 2] > 1e-9
    behind = int(np.sum(conf_ok & ~front))
    sel = conf_ok & front
    if not np.any(sel):
        if need_grad and dE_dverts_out is None:
            grad = np.zeros(6 + cache.pose.theta_b.size)
        return 0.0, grad, {"behind_camera": behind}
    z = h[sel, 2]
    px = h[sel, :2] / z[:, None]
    r = px - frame.keypoints[sel]
    s2 = sigma_gm * sigma_gm
    n2 = np.einsum("nk,nk->n", r, r)
    val = float(np.sum(s2 * n2 / (s2 + n2)))
    if need_grad:
        dE_dverts = dE_dverts_out if dE_dverts_out is not None else np.zeros_like(verts)
        gr = weight * 2.0 * s2 * s2 / (s2 + n2)[:, None] ** 2 * r  # (n, 2)
        dE_dh = np.stack(
            [gr[:, 0] / z, gr[:, 1] / z, -(h[sel, 0] * gr[:, 0] + h[sel, 1] * gr[:, 1]) / (z * z)],
            axis=1,
        )
        dE_dX = dE_dh @ K @ extr.rotation  # rows: R^T K^T dE_dh
        dE_dverts += model.keypoint_regressor[sel].T @ dE_dX
        if dE_dverts_out is None:
            grad = cache.backprop_vertices(np.arange(verts.shape[0]), dE_dverts)
    return val, grad, {"behind_camera": behind}


def e_prior(pose: PoseParams, pose_s1: PoseParams, need_grad: bool = True):
    """Squared distance of the body pose to the stage-1 body pose."""
    if pose.theta_b.size != pose_s1.theta_b.size:
        raise ValueError("body pose dimensions differ")
    d = pose.theta_b - pose_s1.theta_b
    val = float(d @ d)
    grad = None
    if need_grad:
        grad = np.zeros(6 + pose.theta_b.size)
        grad[3 : 3 + pose.theta_b.size] = 2.0 * d
    return val, grad


def e_pcl(cache: PoseCache, points_h: np.ndarray, verts: np.ndarray | None = None,
          need_grad: bool = True, dE_dverts_out: np.ndarray | None = None,
          weight: float = 1.0):
    """Mean squared point-to-surface distance of the human depth crop.

    Closest features are held fixed within one evaluation; gradients flow
    through the barycentric combination of the hit face's vertices. See
    e_2d for the shared-buffer convention.
    """
    points_h = np.asarray(points_h, dtype=float).reshape(-1, 3)
    n = points_h.shape[0]
    if n == 0:
        z = None
        if need_grad and dE_dverts_out is None:
            z = np.zeros(6 + cache.pose.theta_b.size)
        return 0.0, z, {"points": 0}
    model = cache.model
    if verts is None:
        verts = cache.vertices()
    mesh = TriangleMesh(verts, model.faces)
    d2, closest, fidx, bary = closest_points_on_mesh(points_h, mesh)
    val = float(d2.mean())
    grad = None
    if need_grad:
        dE_dverts = dE_dverts_out if dE_dverts_out is not None else np.zeros_like(verts)
        g_c = (2.0 * weight / n) * (closest - points_h)
        hit = model.faces[fidx]
        for k in range(3):
            np.add.at(dE_dverts, hit[:, k], bary[:, k, None] * g_c)
        if dE_dverts_out is None:
            grad = cache.backprop_vertices(np.arange(verts.shape[0]), dE_dverts)
    return val, grad, {"points": n}


# ---------------------------------------------------------------------------
# stage 1


def _rigid_sensor_fit(pv0, Rv0, j0, meas_p, meas_R, lam_p, lam_r, x0, cfg: LbfgsConfig):
    """Root-only fit: virtual sensors move rigidly with (theta_r, t).

    pv0/Rv0 are virtual poses at zero root; the body pivots about the
    rest root joint j0.
    """
    valid = np.all(np.isfinite(meas_p), axis=1) & np.all(np.isfinite(meas_R), axis=(1, 2))

    def value_grad(x):
        from .geom.rotations import rotation_derivatives

        R = axis_angle_to_matrix(x[:3])
        t = x[3:]
        val = 0.0
        gt = np.zeros(3)
        MR = np.zeros((3, 3))
        for s in np.nonzero(valid)[0]:
            pv = R @ (pv0[s] - j0) + j0 + t
            Rv = R @ Rv0[s]
            rp = 2.0 * lam_p * (pv - meas_p[s])
            rR = 2.0 * lam_r * (Rv - meas_R[s])
            val += 0.5 * float(rp @ (pv - meas_p[s])) + 0.5 * float(np.sum(rR * (Rv - meas_R[s])))
            gt += rp
            MR += np.outer(rp, pv0[s] - j0) + rR @ Rv0[s].T
        dR = rotation_derivatives(x[:3])
        g = np.zeros(6)
        g[3:] = gt
        for k in range(3):
            g[k] = np.sum(MR * dR[k])
        return val, g

    obj = Objective(lambda x: value_grad(x)[0], lambda x: value_grad(x)[1])
    x, f, _ = lbfgs_minimize(obj, x0, cfg)
    return x, f


def stage1(model: BodyModel, measurements: SensorFrameSet, anchors, source_anchor,
           beta, cfg: Stage1Config = None):
    """Batched EM-local fit; returns (poses, trace).

    The source frame acts as the world: virtual sensors in body
    coordinates are matched directly against the EM-local measurements.
    Pass 1 aligns the root rigidly per frame; pass 2 refines all
    parameters jointly over the whole batch with L-BFGS.
    """
    cfg = cfg or Stage1Config()
    rig = SensorRig(model, anchors, source_anchor)
    T = measurements.frame_count
    beta = np.asarray(beta, dtype=float)
    base = PoseParams.zero(model, beta)
    n_frame = 6 + base.theta_b.size
    trace = {"warnings": [], "pass1": [], "pass2": None, "flagged_frames": []}

    poses = [base.copy() for _ in range(T)]
    if measurements.sensor_count == 0:
        trace["warnings"].append("no sensors: returning initialization")
        return poses, trace

    if cfg.two_pass:
        zero_cache = PoseCache(model, base)
        verts0 = zero_cache.vertices()
        pv0 = np.stack([g.sensor_pose(verts0)[0] for g in rig.geos])
        Rv0 = np.stack([g.sensor_pose(verts0)[1] for g in rig.geos])
        j0 = model.rest_joints(beta)[0]
        x = np.zeros(6)
        for i in range(T):
            x, f = _rigid_sensor_fit(pv0, Rv0, j0, measurements.positions[i],
                                     measurements.rotations[i], cfg.lambda_p, cfg.lambda_r,
                                     x.copy(), cfg.lbfgs)
            poses[i].theta_r = x[:3].copy()
            poses[i].t = x[3:].copy()
            trace["pass1"].append(f)

    # pass 2: all parameters, one batched problem
    def batch_value_grad(xb):
        xb = xb.reshape(T, n_frame)
        total = 0.0
        grads = np.zeros_like(xb)
        for i in range(T):
            pose = base.with_vector(xb[i])
            cache = PoseCache(model, pose)
            v, g, _ = e_rec(cache, rig, measurements.positions[i], measurements.rotations[i],
                            cfg.lambda_p, cfg.lambda_r, source_relative=False)
            vb = joint_limit_penalty(model, pose)
            gb = joint_limit_penalty_grad(model, pose)
            total += cfg.lambda_rec * v + cfg.lambda_bp * vb
            grads[i] = cfg.lambda_rec * g + cfg.lambda_bp * gb
        return total, grads.ravel()

    memo = {}

    def cached(xb):
        key = xb.tobytes()
        if key not in memo:
            memo.clear()
            memo[key] = batch_value_grad(xb)
        return memo[key]

    obj = Objective(lambda x: cached(x)[0], lambda x: cached(x)[1])
    x0 = np.concatenate([p.as_vector() for p in poses])
    xb, f, tr = lbfgs_minimize(obj, x0, cfg.lbfgs)
    trace["pass2"] = {"final": f, "values": tr["values"], "warnings": tr["warnings"]}

    xb = xb.reshape(T, n_frame)
    bad = [i for i in range(T) if not np.all(np.isfinite(xb[i]))]
    if bad:
        trace["flagged_frames"] = bad
        good = [i for i in range(T) if i not in bad]
        for i in bad:  # neighbor interpolation fallback
            lo = max([g for g in good if g < i], default=None)
            hi = min([g for g in good if g > i], default=None)
            src = lo if hi is None else hi if lo is None else (lo if i - lo <= hi - i else hi)
            xb[i] = xb[src]
    out = [base.with_vector(xb[i]) for i in range(T)]
    return out, trace


# ---------------------------------------------------------------------------
# stage 2


def facing_camera_root(frame: CaptureFrame, t_init: np.ndarray) -> np.ndarray:
    """Yaw that turns the body's forward axis toward the camera."""
    cam_pos = frame.camera.extrinsics.inverse().translation
    d = cam_pos - t_init
    yaw = float(np.arctan2(d[0], d[2]))
    return np.array([0.0, yaw, 0.0])


def stage2(model: BodyModel, s1_poses, frames, measurements: SensorFrameSet,
           anchors, source_anchor, cfg: Stage2Config = None):
    """Sequential world alignment; returns (poses, trace).

    Each frame minimizes the weighted sum of keypoint reprojection,
    source-relative EM reconstruction (gradient restricted to the body
    pose), the stage-1 pose prior, and the point-cloud term, warm-started
    from the previous frame.
    """
    cfg = cfg or Stage2Config()
    rig = SensorRig(model, anchors, source_anchor)
    T = len(frames)
    if len(s1_poses) != T or measurements.frame_count != T:
        raise ValueError("stage-1 poses, frames, and measurements must align")
    trace = {"frames": [], "warnings": []}
    out: list[PoseParams] = []
    nb = s1_poses[0].theta_b.size

    for i in range(T):
        frame = frames[i]
        has_kp = np.any((frame.confidences >= cfg.tau) & np.isfinite(frame.keypoints[:, 0]))
        has_pcl = frame.human_crop_idx.size > 0
        if not has_kp and not has_pcl and i > 0:
            out.append(out[-1].copy())
            trace["warnings"].append(f"frame {i}: no keypoints or depth, propagated previous pose")
            trace["frames"].append(None)
            continue

        j0 = model.rest_joints(s1_poses[i].beta)[0]
        if i == 0:
            t0 = frame.human_points.mean(axis=0) if has_pcl else np.zeros(3)
            init = PoseParams(facing_camera_root(frame, t0), s1_poses[0].theta_b.copy(),
                              t0 - j0, s1_poses[0].beta)
        else:
            # warm start: previous frame's world-from-EM gauge applied to the
            # current stage-1 pose; the gauge drifts slowly even in fast motion
            prev_w = out[-1]
            prev_s1 = s1_poses[i - 1]
            G_R = axis_angle_to_matrix(prev_w.theta_r) @ axis_angle_to_matrix(prev_s1.theta_r).T
            r_prev_s1 = j0 + prev_s1.t
            r_prev_w = j0 + prev_w.t
            r_init = G_R @ (j0 + s1_poses[i].t - r_prev_s1) + r_prev_w
            theta_r_init = matrix_to_axis_angle(G_R @ axis_angle_to_matrix(s1_poses[i].theta_r))
            init = PoseParams(theta_r_init, s1_poses[i].theta_b.copy(), r_init - j0,
                              s1_poses[i].beta)

        s1_pose = s1_poses[i]
        points_h = frame.human_points

        def value_grad(x, _init=init, _s1=s1_pose, _frame=frame, _points=points_h, _i=i):
            pose = _init.with_vector(x)
            cache = PoseCache(model, pose)
            verts = cache.vertices()
            buf = np.zeros_like(verts)
            v2d, _, _ = e_2d(cache, _frame, cfg.tau, cfg.sigma_gm, verts=verts,
                             dE_dverts_out=buf, weight=cfg.lambda_2d)
            vp, _, _ = e_pcl(cache, _points, verts=verts,
                             dE_dverts_out=buf, weight=cfg.lambda_pcl)
            val = cfg.lambda_2d * v2d + cfg.lambda_pcl * vp
            grad = cache.backprop_vertices(np.arange(verts.shape[0]), buf)
            if cfg.use_rec:
                vrec, grec, _ = e_rec(cache, rig, measurements.positions[_i],
                                      measurements.rotations[_i], 1.0, 1.0,
                                      source_relative=True, verts=verts)
                grec[:3] = 0.0  # E*_rec: only the body pose feels the EM term
                grec[3 + nb :] = 0.0
                val += cfg.lambda_rec * vrec
                grad += cfg.lambda_rec * grec
            if cfg.use_prior:
                vpr, gpr = e_prior(pose, _s1)
                val += cfg.lambda_prior * vpr
                grad += cfg.lambda_prior * gpr
            return val, grad

        memo = {}

        def cached(x, _vg=value_grad, _memo=memo):
            key = x.tobytes()
            if key not in _memo:
                _memo.clear()
                _memo[key] = _vg(x)
            return _memo[key]

        obj = Objective(lambda x, _c=cached: _c(x)[0], lambda x, _c=cached: _c(x)[1])
        x, f, tr = adam_minimize(obj, init.as_vector(), cfg.adam)
        if tr["values"][-1] > tr["values"][0] and f > tr["values"][0]:
            trace["warnings"].append(f"frame {i}: objective increased, keeping warm start")
            x = init.as_vector()
            f = tr["values"][0]
        out.append(init.with_vector(x))
        trace["frames"].append({"initial": tr["values"][0], "final": f})
    return out, trace


# ---------------------------------------------------------------------------
# stage 3


def _filter_rotation_track(aa_track: np.ndarray, window: int, polyorder: int) -> np.ndarray:
    quats = np.stack([axis_angle_to_quat(v) for v in aa_track])
    quats = quaternion_sign_continuity(quats)
    smoothed = savgol_filter(quats, window, polyorder, axis=0, mode="interp")
    smoothed /= np.linalg.norm(smoothed, axis=1, keepdims=True)
    return np.stack([quat_to_axis_angle(q) for q in smoothed])


def stage3(s2_poses, cfg: Stage3Config = None):
    """Savitzky-Golay smoothing of translations and joint rotations.

    Rotations are filtered per quaternion coordinate after sign
    continuity and renormalized; sequences shorter than the window are
    returned unfiltered with a warning.
    """
    cfg = cfg or Stage3Config()
    T = len(s2_poses)
    trace = {"warnings": []}
    if T < cfg.window:
        trace["warnings"].append(f"sequence of {T} frames shorter than window {cfg.window}; unfiltered")
        return [p.copy() for p in s2_poses], trace

    t_track = np.stack([p.t for p in s2_poses])
    t_smooth = savgol_filter(t_track, cfg.window, cfg.polyorder, axis=0, mode="interp")

    root_smooth = _filter_rotation_track(np.stack([p.theta_r for p in s2_poses]),
                                         cfg.window, cfg.polyorder)
    nb = s2_poses[0].theta_b.size // 3
    body = np.stack([p.theta_b.reshape(nb, 3) for p in s2_poses])  # (T, J-1, 3)
    body_smooth = np.empty_like(body)
    for j in range(nb):
        body_smooth[:, j] = _filter_rotation_track(body[:, j], cfg.window, cfg.polyorder)

    out = []
    for i, p in enumerate(s2_poses):
        out.append(PoseParams(root_smooth[i], body_smooth[i].ravel(), t_smooth[i], p.beta))
    return out, trace


# ---------------------------------------------------------------------------


def run_emp(model: BodyModel, measurements: SensorFrameSet, frames, anchors,
            source_anchor, beta, s1_cfg: Stage1Config = None, s2_cfg: Stage2Config = None,
            s3_cfg: Stage3Config = None) -> SequenceSolution:
    """Full multi-stage solve; stage outputs and traces are all retained."""
    timings = {}
    t0 = time.perf_counter()
    s1, tr1 = stage1(model, measurements, anchors, source_anchor, beta, s1_cfg)
    timings["stage1_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    s2, tr2 = stage2(model, s1, frames, measurements, anchors, source_anchor, s2_cfg)
    timings["stage2_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    s3, tr3 = stage3(s2, s3_cfg)
    timings["stage3_s"] = time.perf_counter() - t0

    return SequenceSolution(s1, s2, s3, {"stage1": tr1, "stage2": tr2, "stage3": tr3}, timings)


def dense_refinement_hook(poses, refine_fn, lambda_reg: float = 10.0):
    """Per-frame refinement respecting a stay-close pose regularizer.

    refine_fn(pose, regularizer) -> PoseParams may implement an external
    dense refinement; the provided regularizer callable scores candidate
    poses by lambda_reg * ||theta - theta_init||^2. The default pipeline
    does not refine; this hook exists for dense photometric extensions.
    """
    out = []
    for p in poses:
        ref = p.copy()

        def regularizer(candidate, _p=p):
            d = np.concatenate([candidate.theta_r - _p.theta_r, candidate.theta_b - _p.theta_b])
            return lambda_reg * float(d @ d)

        out.append(refine_fn(ref, regularizer))
    return out
