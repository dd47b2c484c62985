"""Pure-numpy kernels: closest point on triangles and ray-parity counts.

Vectorized over (query, face) pairs with chunking; semantics identical to
the compiled extension in _closest_cy. Region classification follows the
standard closest-point-on-triangle case analysis (vertex / edge / face),
expressed through barycentric coordinates so gradients can be chained
through the returned combination weights.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 256


def _closest_chunk(p, a, ab, ac, b_off, c_off):
    """Barycentric coords of closest points for one query chunk.

    p: (n, 3); a/ab/ac: (F, 3). Returns bary (n, F, 3).
    """
    ap = p[:, None, :] - a[None, :, :]
    d1 = np.einsum("fk,nfk->nf", ab, ap)
    d2 = np.einsum("fk,nfk->nf", ac, ap)
    bp = ap - ab[None, :, :]
    d3 = np.einsum("fk,nfk->nf", ab, bp)
    d4 = np.einsum("fk,nfk->nf", ac, bp)
    cp = ap - ac[None, :, :]
    d5 = np.einsum("fk,nfk->nf", ab, cp)
    d6 = np.einsum("fk,nfk->nf", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    n, F = d1.shape
    bary = np.zeros((n, F, 3))
    done = np.zeros((n, F), dtype=bool)

    def assign(mask, u, v, w):
        m = mask & ~done
        bary[m, 0] = u[m] if isinstance(u, np.ndarray) else u
        bary[m, 1] = v[m] if isinstance(v, np.ndarray) else v
        bary[m, 2] = w[m] if isinstance(w, np.ndarray) else w
        done[m] = True

    one = np.ones_like(d1)
    assign((d1 <= 0) & (d2 <= 0), one, 0.0 * one, 0.0 * one)
    assign((d3 >= 0) & (d4 <= d3), 0.0 * one, one, 0.0 * one)
    assign((d6 >= 0) & (d5 <= d6), 0.0 * one, 0.0 * one, one)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1.0 - v_ab, v_ab, 0.0 * one)
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1.0 - w_ac, 0.0 * one, w_ac)
        den_bc = (d4 - d3) + (d5 - d6)
        w_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 0.0 * one, 1.0 - w_bc, w_bc)
        s = va + vb + vc
        s = np.where(np.abs(s) < 1e-300, 1.0, s)
        v_f = vb / s
        w_f = vc / s
        assign(np.ones_like(done), 1.0 - v_f - w_f, v_f, w_f)
    return bary


def closest_point_triangles(queries: np.ndarray, triangles: np.ndarray):
    """Closest point on any of the given triangles for each query point.

    queries: (N, 3); triangles: (F, 3, 3) corner positions.
    Returns (dist_sq (N,), closest (N, 3), face_idx (N,), bary (N, 3)).
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    triangles = np.ascontiguousarray(triangles, dtype=np.float64)
    N = queries.shape[0]
    a = triangles[:, 0]
    ab = triangles[:, 1] - a
    ac = triangles[:, 2] - a

    dist_sq = np.empty(N)
    closest = np.empty((N, 3))
    face_idx = np.empty(N, dtype=np.int64)
    bary_out = np.empty((N, 3))

    for lo in range(0, N, _CHUNK):
        hi = min(lo + _CHUNK, N)
        p = queries[lo:hi]
        bary = _closest_chunk(p, a, ab, ac, None, None)
        pts = np.einsum("nfj,fjk->nfk", bary, triangles)
        diff = p[:, None, :] - pts
        d2 = np.einsum("nfk,nfk->nf", diff, diff)
        best = np.argmin(d2, axis=1)
        rows = np.arange(hi - lo)
        dist_sq[lo:hi] = d2[rows, best]
        closest[lo:hi] = pts[rows, best]
        face_idx[lo:hi] = best
        bary_out[lo:hi] = bary[rows, best]
    return dist_sq, closest, face_idx, bary_out


def ray_parity(origins: np.ndarray, direction: np.ndarray, triangles: np.ndarray):
    """Count ray-triangle crossings per origin along one shared direction.

    Returns (counts (N,), reliable (N,) bool). A count is unreliable if any
    hit was too close to a triangle edge or to the origin for the parity to
    be trusted; callers should retry those with a different direction.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    h = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("fk,fk->f", e1, h)
    eps = 1e-12
    N = origins.shape[0]
    counts = np.zeros(N, dtype=np.int64)
    reliable = np.ones(N, dtype=bool)
    ok_det = np.abs(det) > eps
    inv = np.where(ok_det, 1.0 / np.where(ok_det, det, 1.0), 0.0)
    margin = 1e-9
    for lo in range(0, N, _CHUNK):
        hi = min(lo + _CHUNK, N)
        s = origins[lo:hi, None, :] - v0[None, :, :]
        u = np.einsum("nfk,fk->nf", s, h) * inv[None, :]
        q = np.cross(s, e1[None, :, :])
        v = np.einsum("nfk,k->nf", q, d) * inv[None, :]
        t = np.einsum("nfk,fk->nf", q, e2) * inv[None, :]
        hit = ok_det[None, :] & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        counts[lo:hi] = hit.sum(axis=1)
        near_edge = (
            (np.abs(u) < margin)
            | (np.abs(v) < margin)
            | (np.abs(1.0 - u - v) < margin)
            | (np.abs(t) < margin)
        )
        inside_band = (u > -margin) & (v > -margin) & (u + v < 1 + margin)
        reliable[lo:hi] = ~np.any((near_edge & inside_band & ok_det[None, :]), axis=1)
    return counts, reliable
