"""Rigid-offset and trajectory-alignment solvers.

All solvers minimize sums of squared position errors plus squared
Frobenius rotation-matrix differences. Rotation offsets are initialized
in closed form (relative-rotation conjugation solved by axis alignment,
then chordal means and a linear solve for translations) and polished
with L-BFGS using analytic gradients; random-rotation restarts cover
cases where the algebraic initialization is unreliable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom.rotations import (
    axis_angle_to_matrix,
    matrix_to_axis_angle,
    project_to_rotation,
    random_rotation,
    rotation_angle,
    rotation_derivatives,
)
from .geom.transforms import RigidTransform
from .optim import LbfgsConfig, Objective, lbfgs_minimize


class CalibrationError(ValueError):
    """Input cannot constrain the requested calibration."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SourceCalibration:
    """Offsets (t, R) indexed 0..S; index 0 is the source-tag offset."""

    offsets: list[tuple[np.ndarray, np.ndarray]]
    residual: float


@dataclass(eq=False)
class TrajectoryAlignment:
    world_transform: RigidTransform
    tag_offset: tuple[np.ndarray, np.ndarray]
    pos_residuals: np.ndarray  # (T,) meters
    ang_residuals_deg: np.ndarray  # (T,) degrees

    @property
    def pos_stats(self):
        """(mean, std, rms) of the per-frame position residual in meters."""
        r = self.pos_residuals
        return float(r.mean()), float(r.std()), float(np.sqrt(np.mean(r**2)))

    @property
    def ang_stats(self):
        r = self.ang_residuals_deg
        return float(r.mean()), float(r.std()), float(np.sqrt(np.mean(r**2)))


_POLISH = LbfgsConfig(steps=80, line_search_max_iters=20)


def _relative_rotation_axes(rotations: np.ndarray, rng, n_pairs: int):
    """Axis-angle vectors of rotations between random frame pairs."""
    T = rotations.shape[0]
    i = rng.integers(0, T, n_pairs)
    j = rng.integers(0, T, n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    rel = np.einsum("tab,tcb->tac", rotations[i], rotations[j])
    return i, j, rel


def _conjugation_rotation(A_list, B_list, weights):
    """Solve X from A_k = X B_k X^T by aligning rotation axes."""
    H = np.zeros((3, 3))
    span = np.zeros((3, 3))
    for A, B, w in zip(A_list, B_list, weights):
        va = matrix_to_axis_angle(A)
        vb = matrix_to_axis_angle(B)
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na < 1e-6 or nb < 1e-6:
            continue
        aa, bb = va / na, vb / nb
        H += w * np.outer(aa, bb)
        span += w * np.outer(bb, bb)
    eig = np.linalg.eigvalsh(span)
    if eig[1] < 1e-8 * max(eig[2], 1e-30):
        raise CalibrationError(
            "rotation content is rank-deficient; motion does not constrain the offset rotation"
        )
    return project_to_rotation(H)


# ---------------------------------------------------------------------------
# source / tag offsets (EM to world alignment)


def _source_objective(em_p, em_R, tag_q, tag_U):
    """Value and gradient of the source-offset objective over flat params.

    Params: [t_0, r_0, t_1, r_1, ..., t_S, r_S], rotations as axis-angle.
    """
    T, S = em_p.shape[:2]
    U0, q0 = tag_U[:, 0], tag_q[:, 0]

    def unpack(x):
        ts = x.reshape(S + 1, 6)[:, :3]
        rs = x.reshape(S + 1, 6)[:, 3:]
        Rs = np.stack([axis_angle_to_matrix(r) for r in rs])
        return ts, rs, Rs

    def value_grad(x, need_grad=True):
        ts, rs, Rs = unpack(x)
        R0, t0 = Rs[0], ts[0]
        A = np.einsum("tab,bc->tac", U0, R0)  # U_0t R_0, (T,3,3)
        val = 0.0
        grad = np.zeros_like(x)
        dR = [rotation_derivatives(r) for r in rs]
        M0 = np.zeros((3, 3))
        for s in range(S):
            E = em_R[:, s]
            B = np.einsum("tab,tbc->tac", A, E)
            C = np.einsum("tab,bc->tac", B, Rs[s + 1])
            w = np.einsum("tab,b->ta", np.einsum("tab,bc->tac", E, Rs[s + 1]), ts[s + 1]) \
                + em_p[:, s] + t0
            p_hat = np.einsum("tab,tb->ta", A, w) + q0
            R_hat = C
            rp = p_hat - tag_q[:, s + 1]
            GR = R_hat - tag_U[:, s + 1]
            val += float(np.sum(rp * rp)) + float(np.sum(GR * GR))
            if not need_grad:
                continue
            rp2 = 2.0 * rp
            GR2 = 2.0 * GR
            grad[6 * (s + 1) : 6 * (s + 1) + 3] += np.einsum("tba,tb->a", C, rp2)
            grad[0:3] += np.einsum("tba,tb->a", A, rp2)
            Ms = np.einsum("tba,tb,c->ac", B, rp2, ts[s + 1]) + np.einsum("tba,tbc->ac", B, GR2)
            for k in range(3):
                grad[6 * (s + 1) + 3 + k] += np.sum(Ms * dR[s + 1][k])
            M0 += np.einsum("tba,tb,tc->ac", U0, rp2, w)
            X = np.einsum("tba,tbc->tac", U0, GR2)  # U_0^T GR
            Y = np.einsum("tab,cb->tac", X, Rs[s + 1])  # ... R_s^T
            M0 += np.einsum("tab,tcb->ac", Y, E)  # ... E^T, summed over frames
        if need_grad:
            for k in range(3):
                grad[3 + k] += np.sum(M0 * dR[0][k])
        return val, grad

    return value_grad


def _closed_form_source(em_p, em_R, tag_q, tag_U, rng, R0=None):
    """Algebraic initialization: R_0 by conjugation, rest by means/LSQ."""
    T, S = em_p.shape[:2]
    U0, q0 = tag_U[:, 0], tag_q[:, 0]
    if R0 is None:
        A_list, B_list, weights = [], [], []
        for s in range(S):
            M = np.einsum("tba,tbc->tac", U0, tag_U[:, s + 1])  # U_0t^T U_st
            i, j, relM = _relative_rotation_axes(M, rng, min(4 * T, 400))
            relE = np.einsum("tab,tcb->tac", em_R[i, s], em_R[j, s])
            for k in range(relM.shape[0]):
                ang = rotation_angle(relE[k])
                A_list.append(relM[k])
                B_list.append(relE[k])
                weights.append(np.sin(min(ang, np.pi / 2)))
        R0 = _conjugation_rotation(A_list, B_list, weights)

    # R_s = (U_0t R_0 E_st)^T U_st, chordal-averaged over frames
    Rs = [R0]
    W = np.einsum("tab,bc->tac", U0, R0)
    for s in range(S):
        M = np.einsum("tba,tbc->tac", np.einsum("tab,tbc->tac", W, em_R[:, s]), tag_U[:, s + 1])
        Rs.append(project_to_rotation(M.sum(axis=0)))

    # translations: linear least squares in (t_0, t_1..t_S)
    n_unk = 3 * (S + 1)
    rows = []
    rhs = []
    for s in range(S):
        C = np.einsum("tab,tbc,cd->tad", W, em_R[:, s], Rs[s + 1])
        b = tag_q[:, s + 1] - q0 - np.einsum("tab,tb->ta", W, em_p[:, s])
        for t in range(T):
            row = np.zeros((3, n_unk))
            row[:, 0:3] = W[t]
            row[:, 3 * (s + 1) : 3 * (s + 2)] = C[t]
            rows.append(row)
            rhs.append(b[t])
    A = np.concatenate(rows)
    y = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    ts = sol.reshape(S + 1, 3)

    x0 = np.zeros(6 * (S + 1))
    for s in range(S + 1):
        x0[6 * s : 6 * s + 3] = ts[s]
        x0[6 * s + 3 : 6 * s + 6] = matrix_to_axis_angle(Rs[s])
    return x0


def solve_source_offsets(em_positions, em_rotations, tag_positions, tag_rotations,
                         n_starts: int = 8, seed: int = 0,
                         residual_tol: float | None = None) -> SourceCalibration:
    """Joint source-tag and per-sensor tag offsets from wiggle tracks.

    em_positions/em_rotations: (T, S, ...) EM-local sensor measurements;
    tag_positions/tag_rotations: (T, S+1, ...) world tag tracks, index 0
    being the tag on the source. Offsets minimize the summed position and
    rotation-matrix discrepancies between offset-corrected sensor poses
    and their tags.
    """
    em_p = np.asarray(em_positions, dtype=float)
    em_R = np.asarray(em_rotations, dtype=float)
    tag_q = np.asarray(tag_positions, dtype=float)
    tag_U = np.asarray(tag_rotations, dtype=float)
    T, S = em_p.shape[:2]
    if S < 2:
        raise CalibrationError(f"need at least 2 sensors, got {S}")
    if T < 30:
        raise CalibrationError(f"need at least 30 frames, got {T}")
    if tag_q.shape[1] != S + 1:
        raise CalibrationError("tag tracks must cover the source plus every sensor")

    rng = np.random.default_rng(seed)
    value_grad = _source_objective(em_p, em_R, tag_q, tag_U)
    obj = Objective(lambda x: value_grad(x, False)[0], lambda x: value_grad(x)[1])

    scale = float(np.sum(tag_q[:, 1:] ** 2)) + 9.0 * T * S
    best = None
    for start in range(max(1, n_starts)):
        try:
            x0 = _closed_form_source(em_p, em_R, tag_q, tag_U, rng,
                                     R0=None if start == 0 else random_rotation(rng))
        except CalibrationError:
            if start == 0:
                raise
            continue
        x, f, _ = lbfgs_minimize(obj, x0, _POLISH)
        if best is None or f < best[1]:
            best = (x, f)
        if best[1] < 1e-16 * scale:
            break
    x, f = best

    offsets = []
    for s in range(S + 1):
        offsets.append((x[6 * s : 6 * s + 3].copy(), axis_angle_to_matrix(x[6 * s + 3 : 6 * s + 6])))
    if residual_tol is not None and f > residual_tol:
        raise ConvergenceError("source offset optimization did not converge", f)
    return SourceCalibration(offsets, float(f))


# ---------------------------------------------------------------------------
# skin-to-sensor offsets


def solve_skin_offsets(anchor_frames, world_positions, world_rotations):
    """Per-sensor skin offsets (v_s, Q_s) from anchor frames and measurements.

    anchor_frames: per sensor, a (T, 3) array of anchor positions and a
    (T, 3, 3) array of anchor orientations, passed as a list of tuples.
    world_positions/world_rotations: (T, S, ...) sensor measurements in
    the same (world) frame. Closed form: the orientation offset is the
    orthogonal-Procrustes mean of frame-relative rotations and the
    translation offset the mean frame-relative displacement.
    """
    world_p = np.asarray(world_positions, dtype=float)
    world_R = np.asarray(world_rotations, dtype=float)
    S = world_p.shape[1]
    if len(anchor_frames) != S:
        raise ValueError("anchor frame count must match sensor count")
    out = []
    for s in range(S):
        p_tilde, R_tilde = anchor_frames[s]
        p_tilde = np.asarray(p_tilde, dtype=float)
        R_tilde = np.asarray(R_tilde, dtype=float)
        M = np.einsum("tba,tbc->ac", R_tilde, world_R[:, s])
        Q = project_to_rotation(M)
        v = np.einsum("tba,tb->a", R_tilde, world_p[:, s] - p_tilde) / p_tilde.shape[0]
        out.append((v, Q))
    return out


# ---------------------------------------------------------------------------
# trajectory alignment


def _trajectory_objective(dev_p, dev_R, tag_q, tag_U, dev_root=None, world_root=None):
    """Params: [t_T, r_T, t_o, r_o]."""

    def value_grad(x, need_grad=True):
        tT, rT, to, ro = x[0:3], x[3:6], x[6:9], x[9:12]
        RT = axis_angle_to_matrix(rT)
        Ro = axis_angle_to_matrix(ro)
        W = np.einsum("ab,tbc,cd->tad", RT, dev_R, Ro)  # R_T R^i R_o
        v = np.einsum("tab,b->ta", np.einsum("tab,bc->tac", dev_R, Ro), to) + dev_p
        p_hat = np.einsum("ab,tb->ta", RT, v) + tT
        rp = p_hat - tag_q
        GR = W - tag_U
        val = float(np.sum(rp * rp)) + float(np.sum(GR * GR))
        if dev_root is not None:
            rr = np.einsum("ab,tb->ta", RT, dev_root) + tT - world_root
            val += float(np.sum(rr * rr))
        if not need_grad:
            return val, None
        dRT = rotation_derivatives(rT)
        dRo = rotation_derivatives(ro)
        rp2, GR2 = 2.0 * rp, 2.0 * GR
        grad = np.zeros(12)
        grad[0:3] = rp2.sum(axis=0)
        grad[6:9] = np.einsum("tba,tb->a", W, rp2)
        Mo = np.einsum("ab,tbc->tac", RT, dev_R)
        Mo = np.einsum("tba,tb,c->ac", Mo, rp2, to) + np.einsum("tba,tbc->ac", Mo, GR2)
        MT = np.einsum("ta,tb->ab", rp2, v) + np.einsum("tac,tbc->ab", GR2, np.einsum("tab,bc->tac", dev_R, Ro))
        if dev_root is not None:
            rr2 = 2.0 * (np.einsum("ab,tb->ta", RT, dev_root) + tT - world_root)
            grad[0:3] += rr2.sum(axis=0)
            MT += np.einsum("ta,tb->ab", rr2, dev_root)
        for k in range(3):
            grad[3 + k] = np.sum(MT * dRT[k])
            grad[9 + k] = np.sum(Mo * dRo[k])
        return val, grad

    return value_grad


def _closed_form_trajectory(dev_p, dev_R, tag_q, tag_U, rng, RT=None,
                            dev_root=None, world_root=None):
    T = dev_p.shape[0]
    if RT is None:
        i, j, relU = _relative_rotation_axes(tag_U, rng, min(6 * T, 600))
        relR = np.einsum("tab,tcb->tac", dev_R[i], dev_R[j])
        weights = [np.sin(min(rotation_angle(r), np.pi / 2)) for r in relR]
        RT = _conjugation_rotation(list(relU), list(relR), weights)
    M = np.einsum("tba,tbc->tac", np.einsum("ab,tbc->tac", RT, dev_R), tag_U)
    Ro = project_to_rotation(M.sum(axis=0))
    # translations: p_hat = (R_T R^i R_o) t_o + R_T p^i + t_T = q
    C = np.einsum("ab,tbc,cd->tad", RT, dev_R, Ro)
    rows = np.zeros((T, 3, 6))
    rows[:, :, 0:3] = np.eye(3)
    rows[:, :, 3:6] = C
    rhs = tag_q - np.einsum("ab,tb->ta", RT, dev_p)
    if dev_root is not None:
        extra = np.zeros((dev_root.shape[0], 3, 6))
        extra[:, :, 0:3] = np.eye(3)
        rows = np.concatenate([rows, extra])
        rhs = np.concatenate([rhs, world_root - np.einsum("ab,tb->ta", RT, dev_root)])
    sol, *_ = np.linalg.lstsq(rows.reshape(-1, 6), rhs.reshape(-1), rcond=None)
    x0 = np.zeros(12)
    x0[0:3] = sol[0:3]
    x0[3:6] = matrix_to_axis_angle(RT)
    x0[6:9] = sol[3:6]
    return x0


def _solve_trajectory(dev_p, dev_R, tag_q, tag_U, dev_root, world_root,
                      n_starts: int, seed: int) -> TrajectoryAlignment:
    rng = np.random.default_rng(seed)
    value_grad = _trajectory_objective(dev_p, dev_R, tag_q, tag_U, dev_root, world_root)
    obj = Objective(lambda x: value_grad(x, False)[0], lambda x: value_grad(x)[1])
    scale = float(np.sum(tag_q**2)) + 9.0 * dev_p.shape[0]
    best = None
    for start in range(max(1, n_starts)):
        try:
            x0 = _closed_form_trajectory(dev_p, dev_R, tag_q, tag_U, rng,
                                         RT=None if start == 0 else random_rotation(rng),
                                         dev_root=dev_root, world_root=world_root)
        except CalibrationError:
            if start == 0:
                raise
            continue
        x, f, _ = lbfgs_minimize(obj, x0, _POLISH)
        if best is None or f < best[1]:
            best = (x, f)
        if best[1] < 1e-16 * scale:
            break
    x, _ = best

    tT, rT, to, ro = x[0:3], x[3:6], x[6:9], x[9:12]
    RT, Ro = axis_angle_to_matrix(rT), axis_angle_to_matrix(ro)
    W = np.einsum("ab,tbc,cd->tad", RT, dev_R, Ro)
    p_hat = np.einsum("ab,tb->ta", RT, np.einsum("tab,b->ta", np.einsum("tab,bc->tac", dev_R, Ro), to) + dev_p) + tT
    pos_res = np.linalg.norm(p_hat - tag_q, axis=1)
    ang_res = np.array([np.rad2deg(rotation_angle(W[t].T @ tag_U[t])) for t in range(dev_p.shape[0])])
    return TrajectoryAlignment(RigidTransform(RT, tT), (to.copy(), Ro), pos_res, ang_res)


def align_camera_trajectory(device_positions, device_rotations, tag_positions,
                            tag_rotations, n_starts: int = 8, seed: int = 0) -> TrajectoryAlignment:
    """Align a self-localized device track to a world tag track.

    Estimates the device-to-world transform and the constant device-to-tag
    offset; residual statistics summarize the remaining per-frame errors.
    """
    dev_p = np.asarray(device_positions, dtype=float)
    dev_R = np.asarray(device_rotations, dtype=float)
    tag_q = np.asarray(tag_positions, dtype=float)
    tag_U = np.asarray(tag_rotations, dtype=float)
    if dev_p.shape[0] != tag_q.shape[0]:
        raise ValueError("tracks must have equal length")
    if dev_p.shape[0] < 10:
        raise CalibrationError("need at least 10 frames")
    return _solve_trajectory(dev_p, dev_R, tag_q, tag_U, None, None, n_starts, seed)


def align_root_trajectory(device_root, world_root, device_positions, device_rotations,
                          tag_positions, tag_rotations, n_starts: int = 8, seed: int = 0):
    """Camera alignment augmented with a body-root correspondence term.

    Returns (TrajectoryAlignment, per-frame root distances in meters after
    the rigid alignment).
    """
    dev_root = np.asarray(device_root, dtype=float)
    w_root = np.asarray(world_root, dtype=float)
    dev_p = np.asarray(device_positions, dtype=float)
    dev_R = np.asarray(device_rotations, dtype=float)
    tag_q = np.asarray(tag_positions, dtype=float)
    tag_U = np.asarray(tag_rotations, dtype=float)
    if not (dev_root.shape[0] == w_root.shape[0] == dev_p.shape[0] == tag_q.shape[0]):
        raise ValueError("all tracks must have equal length")
    align = _solve_trajectory(dev_p, dev_R, tag_q, tag_U, dev_root, w_root, n_starts, seed)
    mapped = align.world_transform.apply(dev_root)
    distances = np.linalg.norm(mapped - w_root, axis=1)
    return align, distances


def loop_closure_drift(root_track):
    """(drift_m, path_length_m, drift_fraction) of a closed-course track."""
    track = np.asarray(root_track, dtype=float)
    if track.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    drift = float(np.linalg.norm(track[-1] - track[0]))
    length = float(np.sum(np.linalg.norm(np.diff(track, axis=0), axis=1)))
    fraction = drift / length if length > 0 else 0.0
    return drift, length, fraction


def sync_by_clap(em_accel, audio_energy) -> int:
    """Integer offset k such that em_accel[i] aligns with audio_energy[i+k]."""
    a = np.asarray(em_accel, dtype=float)
    b = np.asarray(audio_energy, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    corr = np.correlate(b, a, mode="full")
    return int(np.argmax(corr)) - (a.size - 1)
