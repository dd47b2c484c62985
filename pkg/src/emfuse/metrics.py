"""Evaluation metrics: positional, vertex, angular, jitter, trajectory.

Positional metrics are reported in millimeters as (mean, std) over
frames, angular metrics in degrees, jitter in units of 10 m/s^3 and
windowed global errors in millimeters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .geom.alignment import procrustes_align
from .geom.rotations import rotation_angle

ALIGN_MODES = ("raw", "hip_aligned", "procrustes")


@dataclass
class MetricReport:
    mpjpe: tuple[float, float] | None = None  # mm
    mpjpe_pa: tuple[float, float] | None = None
    mve: tuple[float, float] | None = None
    mve_pa: tuple[float, float] | None = None
    mpjae: tuple[float, float] | None = None  # degrees
    mpjae_pa: tuple[float, float] | None = None
    jitter: tuple[float, float] | None = None  # 10 m/s^3
    g_mpjpe: float | None = None  # mm
    g_mve: float | None = None
    acceleration: float | None = None  # mm/s^2
    drift_m: float | None = None
    drift_fraction: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        doc = json.loads(text)
        kwargs = {}
        for k, v in doc.items():
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kwargs)


def _check_shapes(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def _aligned_errors(pred, gt, mode: str, root_index: int = 0) -> np.ndarray:
    """Per-frame mean point error (meters) after the chosen alignment."""
    if mode not in ALIGN_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    T = pred.shape[0]
    errs = np.empty(T)
    for t in range(T):
        p, g = pred[t], gt[t]
        if mode == "hip_aligned":
            p = p - p[root_index] + g[root_index]
        elif mode == "procrustes":
            p = procrustes_align(p, g, with_scale=True).apply(p)
        errs[t] = np.linalg.norm(p - g, axis=1).mean()
    return errs


def mpjpe(pred, gt, mode: str = "raw", root_index: int = 0):
    """Mean per-joint position error, (mean, std) in mm over frames.

    pred/gt: (T, J, 3) meters. hip_aligned subtracts the root joint per
    frame; procrustes applies per-frame similarity alignment.
    """
    pred, gt = _check_shapes(pred, gt)
    errs = _aligned_errors(pred, gt, mode, root_index) * 1000.0
    return float(errs.mean()), float(errs.std())


def mve(pred_verts, gt_verts, mode: str = "raw"):
    """Mean vertex error, (mean, std) in mm; same alignments as mpjpe."""
    pred, gt = _check_shapes(pred_verts, gt_verts)
    errs = _aligned_errors(pred, gt, mode) * 1000.0
    return float(errs.mean()), float(errs.std())


def mpjae(pred_rots, gt_rots, mode: str = "raw", pred_joints=None, gt_joints=None):
    """Mean per-joint geodesic angular error, (mean, std) in degrees.

    pred_rots/gt_rots: (T, J, 3, 3) global joint rotations. In procrustes
    mode every predicted rotation is pre-rotated by the rotation found by
    joint-position Procrustes (pred_joints/gt_joints required).
    """
    pred, gt = _check_shapes(pred_rots, gt_rots)
    if mode not in ("raw", "procrustes"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "procrustes" and (pred_joints is None or gt_joints is None):
        raise ValueError("procrustes mode needs joint positions")
    T, J = pred.shape[:2]
    for t in range(T):
        for j in range(J):
            for R in (pred[t, j], gt[t, j]):
                if abs(np.linalg.det(R) - 1.0) > 1e-6:
                    raise ValueError("non-orthonormal rotation input")
    frame_means = np.empty(T)
    for t in range(T):
        if mode == "procrustes":
            R_align = procrustes_align(pred_joints[t], gt_joints[t], with_scale=True).rotation
        else:
            R_align = np.eye(3)
        angles = [rotation_angle((R_align @ pred[t, j]).T @ gt[t, j]) for j in range(J)]
        frame_means[t] = np.rad2deg(np.mean(angles))
    return float(frame_means.mean()), float(frame_means.std())


def jitter(joints, fps: float):
    """Third-difference jitter, (mean, std) in 10 m/s^3.

    joints: (T, J, 3) meters; needs at least 4 frames.
    """
    x = np.asarray(joints, dtype=float)
    if x.shape[0] < 4:
        raise ValueError("jitter needs at least 4 frames")
    d3 = x[3:] - 3.0 * x[2:-1] + 3.0 * x[1:-2] - x[:-3]  # (T-3, J, 3)
    mag = np.linalg.norm(d3, axis=2) * fps**3 / 10.0
    per_frame = mag.mean(axis=1)
    return float(per_frame.mean()), float(per_frame.std())


def acceleration_error(joints, fps: float) -> float:
    """Mean second-difference magnitude in mm/s^2."""
    x = np.asarray(joints, dtype=float)
    if x.shape[0] < 3:
        raise ValueError("acceleration needs at least 3 frames")
    d2 = x[2:] - 2.0 * x[1:-1] + x[:-2]
    return float(np.linalg.norm(d2, axis=2).mean() * fps**2 * 1000.0)


@dataclass
class GlobalWindowResult:
    g_mpjpe: float  # mm
    g_mve: float | None  # mm, when vertices were provided
    acceleration: float  # mm/s^2
    truncated: bool  # sequence shorter than one full window


def g_mpjpe(pred, gt, fps: float, window_s: float = 10.0,
            pred_verts=None, gt_verts=None, root_index: int = 0) -> GlobalWindowResult:
    """Global error over consecutive windows, start-aligned to the truth.

    Each window's prediction is rigidly translated so its first-frame
    root matches the ground truth, then errors accumulate unaligned
    within the window. Acceleration is the mean second-difference
    magnitude of the raw prediction.
    """
    pred, gt = _check_shapes(pred, gt)
    T = pred.shape[0]
    W = int(round(fps * window_s))
    truncated = T < W
    errs = []
    verr = []
    for lo in range(0, T, W):
        hi = min(lo + W, T)
        offset = gt[lo, root_index] - pred[lo, root_index]
        win_err = np.linalg.norm(pred[lo:hi] + offset - gt[lo:hi], axis=2).mean(axis=1)
        errs.append(win_err)
        if pred_verts is not None and gt_verts is not None:
            verr.append(np.linalg.norm(pred_verts[lo:hi] + offset - gt_verts[lo:hi], axis=2).mean(axis=1))
    g_j = float(np.concatenate(errs).mean() * 1000.0)
    g_v = float(np.concatenate(verr).mean() * 1000.0) if verr else None
    return GlobalWindowResult(g_j, g_v, acceleration_error(pred, fps), truncated)


def write_csv(path, per_frame: dict[str, np.ndarray]) -> None:
    """Per-frame error table for external plotting."""
    keys = list(per_frame)
    n = len(per_frame[keys[0]])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + keys)
        for i in range(n):
            writer.writerow([i] + [f"{per_frame[k][i]:.9g}" for k in keys])
