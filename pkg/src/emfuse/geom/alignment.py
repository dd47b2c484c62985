"""Least-squares similarity alignment of point sets (Umeyama/Kabsch)."""

from __future__ import annotations

import numpy as np

from .transforms import SimilarityTransform


def procrustes_align(source: np.ndarray, target: np.ndarray, with_scale: bool = True) -> SimilarityTransform:
    """Transform minimizing sum ||s R x_i + t - y_i||^2 over the point pairs.

    with_scale=False constrains s = 1 (rigid alignment). Requires N >= 3
    non-degenerate correspondences (rank >= 2 after centering).
    """
    X = np.asarray(source, dtype=float).reshape(-1, 3)
    Y = np.asarray(target, dtype=float).reshape(-1, 3)
    if X.shape != Y.shape:
        raise ValueError("source and target must have matching shapes")
    n = X.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")

    mx = X.mean(axis=0)
    my = Y.mean(axis=0)
    Xc = X - mx
    Yc = Y - my

    cov = Yc.T @ Xc / n
    U, S, Vt = np.linalg.svd(cov)
    sx = float(np.sum(Xc * Xc)) / n
    if np.linalg.matrix_rank(Xc, tol=1e-12 * max(1.0, np.abs(Xc).max())) < 2 or sx < 1e-24:
        raise ValueError("degenerate source configuration (rank < 2 after centering)")

    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt

    if with_scale:
        scale = float(np.trace(np.diag(S) @ D)) / sx
        if scale <= 0:
            raise ValueError("degenerate configuration produced non-positive scale")
    else:
        scale = 1.0
    t = my - scale * R @ mx
    return SimilarityTransform(scale, R, t)
