# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: closest point on triangles and ray-parity counts.

Scalar-loop twins of _closest_np with identical semantics; selected at
import time by emfuse.geom.kernels when the extension is available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


cdef inline double _dot3(double ax, double ay, double az,
                         double bx, double by, double bz) nogil:
    return ax * bx + ay * by + az * bz


def closest_point_triangles(queries, triangles):
    """Same contract as emfuse.geom._closest_np.closest_point_triangles."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] P = np.ascontiguousarray(
        queries, dtype=np.float64).reshape(-1, 3)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] T = np.ascontiguousarray(
        triangles, dtype=np.float64)
    cdef Py_ssize_t N = P.shape[0]
    cdef Py_ssize_t F = T.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist_sq = np.empty(N)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] closest = np.empty((N, 3))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] face_idx = np.empty(N, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bary = np.empty((N, 3))

    # bounding spheres for cheap face culling
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cen = np.mean(triangles, axis=1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rad = np.sqrt(
        np.max(np.sum((triangles - cen[:, None, :]) ** 2, axis=2), axis=1))

    cdef Py_ssize_t i, f, best_f
    cdef double px, py, pz
    cdef double ax, ay, az, abx, aby, abz, acx, acy, acz
    cdef double apx, apy, apz, bpx, bpy, bpz, cpx, cpy, cpz
    cdef double d1, d2, d3, d4, d5, d6, va, vb, vc, s, v, w
    cdef double u0, u1, u2, cx, cy, cz, dx, dy, dz, d2v, lb
    cdef double best_d, best_u0, best_u1, best_u2, best_cx, best_cy, best_cz

    with nogil:
        for i in range(N):
            px = P[i, 0]; py = P[i, 1]; pz = P[i, 2]
            best_d = 1e300
            best_f = 0
            best_u0 = 1.0; best_u1 = 0.0; best_u2 = 0.0
            best_cx = 0.0; best_cy = 0.0; best_cz = 0.0
            for f in range(F):
                dx = px - cen[f, 0]; dy = py - cen[f, 1]; dz = pz - cen[f, 2]
                lb = sqrt(dx * dx + dy * dy + dz * dz) - rad[f]
                if lb > 0.0 and lb * lb >= best_d:
                    continue
                ax = T[f, 0, 0]; ay = T[f, 0, 1]; az = T[f, 0, 2]
                abx = T[f, 1, 0] - ax; aby = T[f, 1, 1] - ay; abz = T[f, 1, 2] - az
                acx = T[f, 2, 0] - ax; acy = T[f, 2, 1] - ay; acz = T[f, 2, 2] - az
                apx = px - ax; apy = py - ay; apz = pz - az
                d1 = _dot3(abx, aby, abz, apx, apy, apz)
                d2 = _dot3(acx, acy, acz, apx, apy, apz)
                if d1 <= 0.0 and d2 <= 0.0:
                    u0 = 1.0; u1 = 0.0; u2 = 0.0
                else:
                    bpx = apx - abx; bpy = apy - aby; bpz = apz - abz
                    d3 = _dot3(abx, aby, abz, bpx, bpy, bpz)
                    d4 = _dot3(acx, acy, acz, bpx, bpy, bpz)
                    if d3 >= 0.0 and d4 <= d3:
                        u0 = 0.0; u1 = 1.0; u2 = 0.0
                    else:
                        cpx = apx - acx; cpy = apy - acy; cpz = apz - acz
                        d5 = _dot3(abx, aby, abz, cpx, cpy, cpz)
                        d6 = _dot3(acx, acy, acz, cpx, cpy, cpz)
                        if d6 >= 0.0 and d5 <= d6:
                            u0 = 0.0; u1 = 0.0; u2 = 1.0
                        else:
                            vc = d1 * d4 - d3 * d2
                            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                                v = d1 / (d1 - d3) if d1 != d3 else 0.0
                                u0 = 1.0 - v; u1 = v; u2 = 0.0
                            else:
                                vb = d5 * d2 - d1 * d6
                                if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                                    w = d2 / (d2 - d6) if d2 != d6 else 0.0
                                    u0 = 1.0 - w; u1 = 0.0; u2 = w
                                else:
                                    va = d3 * d6 - d5 * d4
                                    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                                        s = (d4 - d3) + (d5 - d6)
                                        w = (d4 - d3) / s if s != 0.0 else 0.0
                                        u0 = 0.0; u1 = 1.0 - w; u2 = w
                                    else:
                                        s = va + vb + vc
                                        if fabs(s) < 1e-300:
                                            s = 1.0
                                        v = vb / s; w = vc / s
                                        u0 = 1.0 - v - w; u1 = v; u2 = w
                cx = u0 * T[f, 0, 0] + u1 * T[f, 1, 0] + u2 * T[f, 2, 0]
                cy = u0 * T[f, 0, 1] + u1 * T[f, 1, 1] + u2 * T[f, 2, 1]
                cz = u0 * T[f, 0, 2] + u1 * T[f, 1, 2] + u2 * T[f, 2, 2]
                dx = px - cx; dy = py - cy; dz = pz - cz
                d2v = dx * dx + dy * dy + dz * dz
                if d2v < best_d:
                    best_d = d2v
                    best_f = f
                    best_u0 = u0; best_u1 = u1; best_u2 = u2
                    best_cx = cx; best_cy = cy; best_cz = cz
            dist_sq[i] = best_d
            face_idx[i] = best_f
            bary[i, 0] = best_u0; bary[i, 1] = best_u1; bary[i, 2] = best_u2
            closest[i, 0] = best_cx; closest[i, 1] = best_cy; closest[i, 2] = best_cz
    return dist_sq, closest, face_idx, bary


def ray_parity(origins, direction, triangles):
    """Same contract as emfuse.geom._closest_np.ray_parity."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] O = np.ascontiguousarray(
        origins, dtype=np.float64).reshape(-1, 3)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] T = np.ascontiguousarray(
        triangles, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] D = np.asarray(direction, dtype=np.float64)
    cdef double dn = sqrt(D[0] * D[0] + D[1] * D[1] + D[2] * D[2])
    cdef double dx = D[0] / dn, dy = D[1] / dn, dz = D[2] / dn

    cdef Py_ssize_t N = O.shape[0]
    cdef Py_ssize_t F = T.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(N, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] reliable = np.ones(N, dtype=np.uint8)

    cdef Py_ssize_t i, f
    cdef double e1x, e1y, e1z, e2x, e2y, e2z, hx, hy, hz, det, inv
    cdef double sx, sy, sz, qx, qy, qz, u, v, t
    cdef double eps = 1e-12, margin = 1e-9
    cdef long c
    cdef bint rel

    with nogil:
        for i in range(N):
            c = 0
            rel = 1
            for f in range(F):
                e1x = T[f, 1, 0] - T[f, 0, 0]; e1y = T[f, 1, 1] - T[f, 0, 1]; e1z = T[f, 1, 2] - T[f, 0, 2]
                e2x = T[f, 2, 0] - T[f, 0, 0]; e2y = T[f, 2, 1] - T[f, 0, 1]; e2z = T[f, 2, 2] - T[f, 0, 2]
                hx = dy * e2z - dz * e2y
                hy = dz * e2x - dx * e2z
                hz = dx * e2y - dy * e2x
                det = e1x * hx + e1y * hy + e1z * hz
                if fabs(det) <= eps:
                    continue
                inv = 1.0 / det
                sx = O[i, 0] - T[f, 0, 0]; sy = O[i, 1] - T[f, 0, 1]; sz = O[i, 2] - T[f, 0, 2]
                u = (sx * hx + sy * hy + sz * hz) * inv
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (qx * dx + qy * dy + qz * dz) * inv
                t = (qx * e2x + qy * e2y + qz * e2z) * inv
                if u >= 0.0 and v >= 0.0 and u + v <= 1.0 and t > 0.0:
                    c += 1
                if u > -margin and v > -margin and u + v < 1.0 + margin:
                    if (fabs(u) < margin or fabs(v) < margin
                            or fabs(1.0 - u - v) < margin or fabs(t) < margin):
                        rel = 0
            counts[i] = c
            reliable[i] = rel
    return counts, reliable.astype(bool)
