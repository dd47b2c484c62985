"""Deterministic low-poly humanoid used as the stand-in body model.

24-joint kinematic tree, capsule limbs (~600 vertices), 10 orthonormal
shape blendshapes, a 25-keypoint regressor, and a default sensor layout
(12 body sensors plus the source on the lower back). Meshes are closed
per capsule, so ray-parity inside tests work away from limb overlaps.

The joint-to-keypoint mapping is a stand-in; rows are centroids of
vertex rings centered exactly on the joints, so regressed joints track
the kinematics without error.
"""

from __future__ import annotations

import numpy as np

from .body import BodyModel, SensorAnchor

# SMPL-style tree: pelvis root, legs, spine, arms, head.
PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
)

# T-pose joint positions (x right->left, y up, z forward), pelvis at origin.
_JOINTS = np.array(
    [
        [0.00, 0.00, 0.00],  # 0 pelvis
        [0.09, -0.06, 0.00],  # 1 l_hip
        [-0.09, -0.06, 0.00],  # 2 r_hip
        [0.00, 0.11, 0.00],  # 3 spine1
        [0.10, -0.48, 0.00],  # 4 l_knee
        [-0.10, -0.48, 0.00],  # 5 r_knee
        [0.00, 0.24, 0.00],  # 6 spine2
        [0.10, -0.88, 0.00],  # 7 l_ankle
        [-0.10, -0.88, 0.00],  # 8 r_ankle
        [0.00, 0.35, 0.00],  # 9 spine3
        [0.11, -0.94, 0.11],  # 10 l_foot
        [-0.11, -0.94, 0.11],  # 11 r_foot
        [0.00, 0.50, 0.00],  # 12 neck
        [0.06, 0.44, 0.00],  # 13 l_collar
        [-0.06, 0.44, 0.00],  # 14 r_collar
        [0.00, 0.63, 0.00],  # 15 head
        [0.17, 0.46, 0.00],  # 16 l_shoulder
        [-0.17, 0.46, 0.00],  # 17 r_shoulder
        [0.43, 0.46, 0.00],  # 18 l_elbow
        [-0.43, 0.46, 0.00],  # 19 r_elbow
        [0.67, 0.46, 0.00],  # 20 l_wrist
        [-0.67, 0.46, 0.00],  # 21 r_wrist
        [0.76, 0.46, 0.00],  # 22 l_hand
        [-0.76, 0.46, 0.00],  # 23 r_hand
    ]
)

_RADII = {
    1: 0.075, 2: 0.075, 3: 0.105,  # hips, lower torso
    4: 0.065, 5: 0.065, 6: 0.115,  # thighs, mid torso
    7: 0.048, 8: 0.048, 9: 0.110,  # shins, upper torso
    10: 0.035, 11: 0.035,  # feet
    12: 0.045, 13: 0.055, 14: 0.055,  # neck, collars
    15: 0.085,  # head
    16: 0.055, 17: 0.055,  # shoulders
    18: 0.042, 19: 0.042,  # upper arms
    20: 0.036, 21: 0.036,  # forearms
    22: 0.030, 23: 0.030,  # hands
}

_SEGMENTS = 6
_STATIONS = 4


def _ring_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0])
    if abs(axis @ ref) > 0.9 * np.linalg.norm(axis):
        ref = np.array([1.0, 0.0, 0.0])
    u = ref - (ref @ axis) * axis
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def _build(seed: int):
    rng = np.random.default_rng(seed)
    J = PARENTS.shape[0]
    verts: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []
    weights: list[dict[int, float]] = []
    ring_ids: dict[tuple[int, int], list[int]] = {}
    pole_ids: dict[tuple[int, str], int] = {}

    def add_vertex(p, w):
        verts.append(np.asarray(p, dtype=float))
        weights.append(w)
        return len(verts) - 1

    for j in range(1, J):
        p = PARENTS[j]
        start, end = _JOINTS[p], _JOINTS[j]
        axis = end - start
        length = np.linalg.norm(axis)
        axis_hat = axis / length
        u, v = _ring_basis(axis_hat)
        r = _RADII[j]
        phase = rng.uniform(0.0, 2.0 * np.pi / _SEGMENTS)

        station_f = np.linspace(0.0, 1.0, _STATIONS)
        rings = []
        for si, f in enumerate(station_f):
            center = start + f * axis
            blend = float(np.clip((f - 0.6) / 0.8, 0.0, 1.0))
            w = {int(p): 1.0 - blend} if blend < 1.0 else {}
            if blend > 0.0:
                w[int(j)] = blend
            ids = []
            for k in range(_SEGMENTS):
                ang = phase + 2.0 * np.pi * k / _SEGMENTS
                pos = center + r * (np.cos(ang) * u + np.sin(ang) * v)
                ids.append(add_vertex(pos, dict(w)))
            rings.append(ids)
            ring_ids[(j, si)] = ids

        cap_lo = add_vertex(start - 0.6 * r * axis_hat, {int(p): 1.0})
        cap_hi = add_vertex(end + 0.6 * r * axis_hat, {int(p): 0.5, int(j): 0.5})
        pole_ids[(j, "lo")] = cap_lo
        pole_ids[(j, "hi")] = cap_hi

        for si in range(_STATIONS - 1):
            a, b = rings[si], rings[si + 1]
            for k in range(_SEGMENTS):
                k2 = (k + 1) % _SEGMENTS
                faces.append((a[k], a[k2], b[k2]))
                faces.append((a[k], b[k2], b[k]))
        for k in range(_SEGMENTS):
            k2 = (k + 1) % _SEGMENTS
            faces.append((rings[0][k2], rings[0][k], cap_lo))
            faces.append((rings[-1][k], rings[-1][k2], cap_hi))

    V = len(verts)
    template = np.stack(verts)
    faces_arr = np.asarray(faces, dtype=np.int64)

    W = np.zeros((V, J))
    for i, w in enumerate(weights):
        for jj, val in w.items():
            W[i, jj] = val

    joint_reg = np.zeros((J, V))
    joint_reg[0, ring_ids[(3, 0)]] = 1.0 / _SEGMENTS
    for j in range(1, J):
        joint_reg[j, ring_ids[(j, _STATIONS - 1)]] = 1.0 / _SEGMENTS

    layout = {"rings": ring_ids, "poles": pole_ids, "template": template}
    return template, faces_arr, W, joint_reg, layout


def _ring_vertex(layout, joint, station, direction):
    """Ring vertex whose radial offset best matches a world direction."""
    ids = layout["rings"][(joint, station)]
    pts = layout["template"][ids]
    center = pts.mean(axis=0)
    d = np.asarray(direction, dtype=float)
    scores = (pts - center) @ d
    return int(ids[int(np.argmax(scores))]), ids


def _keypoint_regressor(layout, V: int) -> np.ndarray:
    front = [0, 0, 1.0]
    back = [0, 0, -1.0]
    up = [0, 1.0, 0]
    left = [1.0, 0, 0]
    right = [-1.0, 0, 0]
    reg = np.zeros((25, V))

    def ring_row(k, joint):
        reg[k, layout["rings"][(joint, _STATIONS - 1)]] = 1.0 / _SEGMENTS

    def vert_row(k, joint, station, direction):
        vid, _ = _ring_vertex(layout, joint, station, direction)
        reg[k, vid] = 1.0

    vert_row(0, 15, _STATIONS - 1, front)  # nose
    ring_row(1, 12)  # neck
    ring_row(2, 17)  # r shoulder
    ring_row(3, 19)  # r elbow
    ring_row(4, 21)  # r wrist
    ring_row(5, 16)  # l shoulder
    ring_row(6, 18)  # l elbow
    ring_row(7, 20)  # l wrist
    reg[8, layout["rings"][(3, 0)]] = 1.0 / _SEGMENTS  # mid hip
    ring_row(9, 2)  # r hip
    ring_row(10, 5)  # r knee
    ring_row(11, 8)  # r ankle
    ring_row(12, 1)  # l hip
    ring_row(13, 4)  # l knee
    ring_row(14, 7)  # l ankle
    vert_row(15, 15, _STATIONS - 1, [-0.4, 0.3, 1.0])  # r eye
    vert_row(16, 15, _STATIONS - 1, [0.4, 0.3, 1.0])  # l eye
    vert_row(17, 15, _STATIONS - 2, right)  # r ear
    vert_row(18, 15, _STATIONS - 2, left)  # l ear
    reg[19, layout["poles"][(10, "hi")]] = 1.0  # l big toe
    vert_row(20, 10, _STATIONS - 1, left)  # l small toe
    vert_row(21, 7, _STATIONS - 1, back)  # l heel
    reg[22, layout["poles"][(11, "hi")]] = 1.0  # r big toe
    vert_row(23, 11, _STATIONS - 1, right)  # r small toe
    vert_row(24, 8, _STATIONS - 1, back)  # r heel
    return reg


def _shape_basis(template: np.ndarray) -> np.ndarray:
    """10 smooth, orthonormalized global deformation modes."""
    x, y, z = template[:, 0], template[:, 1], template[:, 2]
    zero = np.zeros_like(x)
    head_c = np.array([0.0, 0.68, 0.0])
    d_head = np.linalg.norm(template - head_c, axis=1)
    fields = [
        template.copy(),  # global scale
        np.stack([zero, y, zero], axis=1),  # height
        np.stack([x, zero, z], axis=1),  # girth
        np.stack([np.sign(x) * np.maximum(0.0, np.abs(x) - 0.15), zero, zero], axis=1),  # arms
        np.stack([zero, np.minimum(0.0, y + 0.05), zero], axis=1),  # legs
        np.stack([x, zero, z], axis=1) * np.exp(-(((y - 0.22) / 0.25) ** 2))[:, None],  # torso
        (template - head_c) * np.exp(-((d_head / 0.14) ** 2))[:, None],  # head
        np.stack([x, zero, zero], axis=1) * np.exp(-(((y - 0.46) / 0.12) ** 2))[:, None],  # shoulders
        np.stack([x, zero, zero], axis=1) * np.exp(-(((y + 0.06) / 0.12) ** 2))[:, None],  # hips
        np.stack([np.sin(3.0 * y) * x, zero, np.sin(3.0 * y) * z], axis=1) * 0.5,  # waviness
    ]
    G = np.stack([f.ravel() for f in fields], axis=1)
    Q, _ = np.linalg.qr(G)
    V = template.shape[0]
    Q *= 0.02 * np.sqrt(V)  # per-vertex RMS displacement of 2 cm per unit beta
    return Q.reshape(V, 3, 10)


def _joint_limits(J: int) -> np.ndarray:
    limits = np.tile(np.array([-2.5, 2.5]), (J - 1, 3, 1))
    limits[4 - 1, 0] = [0.0, 2.6]  # knees: one-sided flexion about x
    limits[5 - 1, 0] = [0.0, 2.6]
    limits[18 - 1, 1] = [-2.6, 0.0]  # elbows: one-sided about y, mirrored
    limits[19 - 1, 1] = [0.0, 2.6]
    return limits


def build_toy_humanoid(seed: int = 0) -> BodyModel:
    """Deterministic humanoid stand-in; same seed gives identical models."""
    template, faces, W, joint_reg, layout = _build(seed)
    model = BodyModel(
        parents=PARENTS.copy(),
        template_vertices=template,
        faces=faces,
        skinning_weights=W,
        shape_dirs=_shape_basis(template),
        joint_regressor=joint_reg,
        keypoint_regressor=_keypoint_regressor(layout, template.shape[0]),
        joint_limits=_joint_limits(PARENTS.shape[0]),
    )
    model.validate()
    return model


_SENSOR_SITES = [
    ("head", 15, 2, [0, 0, -1.0]),
    ("sternum", 9, 3, [0, 0, 1.0]),
    ("l_upper_arm", 18, 1, [0, 1.0, 0]),
    ("r_upper_arm", 19, 1, [0, 1.0, 0]),
    ("l_forearm", 20, 2, [0, 1.0, 0]),
    ("r_forearm", 21, 2, [0, 1.0, 0]),
    ("l_thigh", 4, 1, [1.0, 0, 0]),
    ("r_thigh", 5, 1, [-1.0, 0, 0]),
    ("l_shin", 7, 2, [0, 0, 1.0]),
    ("r_shin", 8, 2, [0, 0, 1.0]),
    ("l_collar", 16, 2, [0, 0, -1.0]),
    ("r_collar", 17, 2, [0, 0, -1.0]),
]


def default_anchors(seed: int = 0):
    """12 sensor anchors plus the lower-back source anchor (identity offsets)."""
    _, _, _, _, layout = _build(seed)
    anchors = []
    for name, joint, station, direction in _SENSOR_SITES:
        vid, ids = _ring_vertex(layout, joint, station, direction)
        nxt = ids[(ids.index(vid) + 1) % len(ids)]
        anchors.append(SensorAnchor(name, vid, int(nxt)))
    vid, ids = _ring_vertex(layout, 3, 1, [0, 0, -1.0])
    nxt = ids[(ids.index(vid) + 1) % len(ids)]
    source = SensorAnchor("source", vid, int(nxt))
    return anchors, source
