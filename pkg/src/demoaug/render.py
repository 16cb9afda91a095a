"""Minimal deterministic software rasterizer.

Camera-view and light/texture randomization re-render replayed simulator
states through this module, so those augmentations are real perspective
re-projections rather than metadata edits.  The pipeline is: procedural
triangle meshes per shape, a pinhole projection, flat Lambertian shading per
face, and a per-pixel z-buffer with a fixed first-written-wins tie break.
Nothing here ever touches an RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .demos import Observation
from .geometry import Bowl, Box, Cylinder, Particle, Plate, Valve, valve_blade_azimuths
from .se3 import Pose

_NEAR = 0.02
_CYL_SEGMENTS = 10


@dataclass(frozen=True)
class CameraConfig:
    pose: Pose  # camera-to-world; camera looks along +z, image y points down
    vertical_fov: float  # radians
    resolution: tuple[int, int]  # (w, h)

    def __post_init__(self):
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must be in (0, pi)")
        if self.resolution[0] < 8 or self.resolution[1] < 8:
            raise ValueError("resolution must be at least 8x8")


@dataclass(frozen=True)
class LightConfig:
    direction: tuple[float, float, float]  # propagation direction, unit norm
    color: tuple[float, float, float]
    ambient: tuple[float, float, float]

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.direction))
        if abs(n - 1.0) > 1e-9:
            raise ValueError("light direction must be unit length")


@dataclass(frozen=True)
class MaterialConfig:
    albedo: tuple[float, float, float]
    pattern: str = "solid"  # "solid" | "checker"
    checker_scale: float = 0.02

    def __post_init__(self):
        if any(not 0.0 <= c <= 1.0 for c in self.albedo):
            raise ValueError("albedo components must lie in [0, 1]")
        if self.pattern not in ("solid", "checker"):
            raise ValueError(f"unknown pattern {self.pattern!r}")


@dataclass(frozen=True)
class RenderSettings:
    """Everything scene-independent the renderer needs for one view."""

    camera: CameraConfig
    light: LightConfig
    materials: dict = field(default_factory=dict)  # object id -> MaterialConfig
    sky: tuple[float, float, float] = (0.09, 0.10, 0.13)

    def material_for(self, object_id: str) -> MaterialConfig:
        return self.materials.get(object_id, MaterialConfig((0.5, 0.5, 0.5)))


DEFAULT_MATERIALS = {
    "hand": MaterialConfig((0.16, 0.16, 0.18)),
    "table": MaterialConfig((0.55, 0.53, 0.50)),
    "box": MaterialConfig((0.10, 0.12, 0.48)),
    "bottle": MaterialConfig((0.08, 0.32, 0.12)),
    "plate": MaterialConfig((0.72, 0.07, 0.07)),
    "bowl": MaterialConfig((0.58, 0.30, 0.08)),
    "valve": MaterialConfig((0.28, 0.30, 0.34)),
    "particle0": MaterialConfig((0.85, 0.75, 0.20)),
    "particle1": MaterialConfig((0.85, 0.75, 0.20)),
    "particle2": MaterialConfig((0.85, 0.75, 0.20)),
    "particle3": MaterialConfig((0.85, 0.75, 0.20)),
}


def look_at_pose(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose with +z forward and +y down in the image."""
    pos = np.asarray(position, dtype=float)
    fwd = np.asarray(target, dtype=float) - pos
    fwd /= np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=float)
    right = np.cross(fwd, upv)
    n = np.linalg.norm(right)
    if n < 1e-9:  # looking straight along up; pick a stable right axis
        right = np.array([1.0, 0.0, 0.0])
    else:
        right /= n
    down = np.cross(fwd, right)
    r = np.column_stack([right, down, fwd])
    return Pose(_mat_to_quat(r), tuple(pos))


def _mat_to_quat(r: np.ndarray):
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > 0:
        s = 0.5 / math.sqrt(t + 1.0)
        return (0.25 / s, (r[2, 1] - r[1, 2]) * s, (r[0, 2] - r[2, 0]) * s, (r[1, 0] - r[0, 1]) * s)
    i = int(np.argmax(np.diag(r)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = math.sqrt(max(1e-12, r[i, i] - r[j, j] - r[k, k] + 1.0)) * 0.5
    q = [0.0, 0.0, 0.0, 0.0]
    q[1 + i] = s
    q[0] = (r[k, j] - r[j, k]) / (4.0 * s)
    q[1 + j] = (r[j, i] + r[i, j]) / (4.0 * s)
    q[1 + k] = (r[k, i] + r[i, k]) / (4.0 * s)
    return tuple(q)


DEFAULT_LIGHT = LightConfig(
    direction=tuple(np.array([0.3, -0.25, -1.0]) / np.linalg.norm([0.3, -0.25, -1.0])),
    color=(0.9, 0.88, 0.85),
    ambient=(0.32, 0.32, 0.34),
)


def default_camera(image_size: int = 64) -> CameraConfig:
    return CameraConfig(
        pose=look_at_pose((0.0, -0.30, 0.52), (0.0, 0.03, 0.0)),
        vertical_fov=math.radians(58.0),
        resolution=(image_size, image_size),
    )


def default_settings(image_size: int = 64) -> RenderSettings:
    return RenderSettings(camera=default_camera(image_size), light=DEFAULT_LIGHT, materials=dict(DEFAULT_MATERIALS))


# ---------------------------------------------------------------------------
# Procedural meshes (unit-posed; verts in object frame)
# ---------------------------------------------------------------------------

_mesh_cache: dict = {}


def _box_mesh(hx, hy, hz):
    v = np.array(
        [[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
    )
    # outward-wound faces of the unit box
    f = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 7], [4, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 7], [1, 7, 3],  # +z
        ],
        dtype=np.int64,
    )
    return v, f


def _cylinder_mesh(radius, half_length, segments=_CYL_SEGMENTS):
    ang = np.arange(segments) * (2.0 * math.pi / segments)
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bot = np.column_stack([ring, np.full(segments, -half_length)])
    top = np.column_stack([ring, np.full(segments, half_length)])
    verts = np.vstack([bot, top, [[0, 0, -half_length]], [[0, 0, half_length]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]  # wall
        faces += [[cb, j, i], [ct, segments + i, segments + j]]  # caps
    return verts, np.array(faces, dtype=np.int64)


def mesh_for(geom, valve_angle: float = 0.0):
    """Object-frame triangle mesh; valves rotate their blades by valve_angle."""
    if isinstance(geom, Valve):
        hv, hf = _cached(("cyl", geom.hub_radius, 0.01), lambda: _cylinder_mesh(geom.hub_radius, 0.01))
        bv, bf = _cached(("box", geom.blade_length / 2, 0.012, 0.008),
                         lambda: _box_mesh(geom.blade_length / 2, 0.012, 0.008))
        verts = [hv]
        faces = [hf]
        n = hv.shape[0]
        for az in valve_blade_azimuths(geom, 0.0, valve_angle):
            c, s = math.cos(az), math.sin(az)
            r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            shifted = bv + np.array([geom.blade_length / 2, 0.0, 0.0])
            verts.append(shifted @ r.T)
            faces.append(bf + n)
            n += bv.shape[0]
        return np.vstack(verts), np.vstack(faces)
    if isinstance(geom, Box):
        return _cached(("box", *geom.half_extents), lambda: _box_mesh(*geom.half_extents))
    if isinstance(geom, Cylinder):
        return _cached(("cyl", geom.radius, geom.half_length), lambda: _cylinder_mesh(geom.radius, geom.half_length))
    if isinstance(geom, Bowl):
        return _cached(("cyl", geom.radius, geom.height / 2), lambda: _cylinder_mesh(geom.radius, geom.height / 2))
    if isinstance(geom, Plate):
        return _cached(("cyl", geom.radius, geom.height / 2), lambda: _cylinder_mesh(geom.radius, geom.height / 2))
    if isinstance(geom, Particle):
        h = geom.half_size
        return _cached(("box", h, h, h), lambda: _box_mesh(h, h, h))
    raise TypeError(f"no mesh for {geom!r}")


def _cached(key, builder):
    got = _mesh_cache.get(key)
    if got is None:
        got = builder()
        got[0].setflags(write=False)
        got[1].setflags(write=False)
        _mesh_cache[key] = got
    return got


def _pose_matrix(p: Pose) -> np.ndarray:
    w, x, y, z = p.q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render(state, camera: CameraConfig, light: LightConfig, materials: dict | None = None,
           sky: tuple[float, float, float] = (0.09, 0.10, 0.13)) -> np.ndarray:
    """Rasterize a world state to an (h, w, 3) uint8 image.

    Flat shading: pixel = clamp(albedo * (ambient + color * max(0, n.l))),
    with l pointing from the surface toward the light.  Depth resolves by a
    strict z-buffer; the first triangle written wins exact ties, and triangle
    order is fixed by (object order in the state, face order in the mesh).
    """
    materials = materials or {}
    w, h = camera.resolution
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:, :] = sky
    zbuf = np.full((h, w), np.inf)

    cam_r = _pose_matrix(camera.pose)
    cam_t = np.asarray(camera.pose.t)
    focal = (h / 2.0) / math.tan(camera.vertical_fov / 2.0)
    cx, cy = w / 2.0, h / 2.0
    ldir = -np.asarray(light.direction)
    lcol = np.asarray(light.color)
    amb = np.asarray(light.ambient)
    xs = np.arange(w) + 0.5
    ys = (np.arange(h) + 0.5)[:, None]

    # gather every object's triangles into one batch, then shade and
    # rasterize in a single pass
    world_parts, face_parts, albedo_parts, checker_parts = [], [], [], []
    offset = 0
    for oid, geom, pose in _drawables(state):
        verts, faces = mesh_for(geom, state.valve_angle if isinstance(geom, Valve) else 0.0)
        mat = materials.get(oid, MaterialConfig((0.5, 0.5, 0.5)))
        r = _pose_matrix(pose)
        world_parts.append(verts @ r.T + np.asarray(pose.t))
        face_parts.append(faces + offset)
        offset += verts.shape[0]
        m = faces.shape[0]
        albedo_parts.append(np.broadcast_to(np.asarray(mat.albedo), (m, 3)))
        if mat.pattern == "checker":
            # spatial parity plus a face-index term so symmetric triangle
            # pairs on axis-aligned faces still alternate
            cell = max(mat.checker_scale, 1e-6)
            cent = verts[faces].mean(axis=1) / cell
            parity = (
                np.floor(cent[:, 0]) + np.floor(cent[:, 1]) + np.floor(cent[:, 2]) + np.arange(m)
            ) % 2.0
            checker_parts.append(np.where(parity > 0.5, 0.62, 1.0))
        else:
            checker_parts.append(np.ones(m))

    world = np.vstack(world_parts)
    faces = np.vstack(face_parts)
    albedo = np.vstack(albedo_parts)
    checker = np.concatenate(checker_parts)

    tw = world[faces]  # (m, 3, 3) world-space triangles
    n = np.cross(tw[:, 1] - tw[:, 0], tw[:, 2] - tw[:, 0])
    nl = np.sqrt(np.einsum("ij,ij->i", n, n))
    ok = nl > 1e-15
    n[ok] /= nl[ok, None]
    lambert = np.clip(n @ ldir, 0.0, None)
    shade = np.clip(albedo * (amb + lcol * lambert[:, None]), 0.0, 1.0) * checker[:, None]

    cam = (world - cam_t) @ cam_r  # world -> camera (R^T (p - t))
    tri = cam[faces]
    zc = tri[:, :, 2]
    # closed outward-wound meshes let us drop back-facing triangles without
    # changing the image
    facing = np.einsum("ij,ij->i", n, tw[:, 0] - cam_t) < 0.0
    visible = ok & facing & (zc > _NEAR).all(axis=1)
    idx = np.nonzero(visible)[0]
    if idx.size:
        px = tri[idx, :, 0] / zc[idx] * focal + cx
        py = tri[idx, :, 1] / zc[idx] * focal + cy
        invz = 1.0 / zc[idx]
        bx0 = np.maximum(np.floor(px.min(axis=1) - 0.5).astype(np.int64), 0)
        bx1 = np.minimum(np.ceil(px.max(axis=1) - 0.5).astype(np.int64), w - 1)
        by0 = np.maximum(np.floor(py.min(axis=1) - 0.5).astype(np.int64), 0)
        by1 = np.minimum(np.ceil(py.max(axis=1) - 0.5).astype(np.int64), h - 1)
        areas = (px[:, 1] - px[:, 0]) * (py[:, 2] - py[:, 0]) - (py[:, 1] - py[:, 0]) * (px[:, 2] - px[:, 0])
        px_l, py_l, invz_l = px.tolist(), py.tolist(), invz.tolist()
        shades = shade[idx]
        for k in range(idx.size):
            area = areas[k]
            x0, x1, y0, y1 = bx0[k], bx1[k], by0[k], by1[k]
            if x1 < x0 or y1 < y0 or abs(area) < 1e-12:
                continue
            _raster_triangle(img, zbuf, xs, ys, px_l[k], py_l[k], invz_l[k], 1.0 / area, x0, x1, y0, y1, shades[k])

    return np.clip(img * 255.0 + 0.5, 0.0, 255.0).astype(np.uint8)


def _drawables(state):
    """Scene objects plus a two-finger hand marker at the end-effector pose.

    The marker is derived state (pose + aperture), so teleop operators and
    image-based policies can see the hand; it never participates in physics.
    """
    from .se3 import compose as _compose

    for obj in state.objects:
        yield obj.id, obj.geometry, obj.pose
    aperture = state.finger_values[0] if state.finger_values else 1.0
    gap = 0.008 + 0.014 * max(0.0, min(1.0, aperture))
    finger = Box((0.004, 0.01, 0.016))
    for side in (-1.0, 1.0):
        yield "hand", finger, _compose(state.ee_pose, Pose.from_translation(side * gap, 0.0, 0.0))


def _raster_triangle(img, zbuf, xs, ys, pxs, pys, invzs, inv_area, x0, x1, y0, y1, color):
    px0, px1, px2 = pxs
    py0, py1, py2 = pys
    gx = xs[x0 : x1 + 1]
    gy = ys[y0 : y1 + 1]
    w0 = ((px2 - px1) * (gy - py1) - (py2 - py1) * (gx - px1)) * inv_area
    w1 = ((px0 - px2) * (gy - py2) - (py0 - py2) * (gx - px2)) * inv_area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    if not inside.any():
        return
    # screen-linear 1/z interpolation gives perspective-correct depth;
    # invz > 0 always (faces behind the near plane were culled)
    depth = 1.0 / (w0 * invzs[0] + w1 * invzs[1] + w2 * invzs[2])
    sub_z = zbuf[y0 : y1 + 1, x0 : x1 + 1]
    mask = inside & (depth < sub_z)
    if not mask.any():
        return
    sub_z[mask] = depth[mask]
    img[y0 : y1 + 1, x0 : x1 + 1][mask] = color


def observe(state, settings: RenderSettings) -> Observation:
    """Render a state under the given settings and bundle proprioception."""
    img = render(state, settings.camera, settings.light, settings.materials, settings.sky)
    return Observation(img, state.proprio())


def offset_camera(cam: CameraConfig, euler_deg, translation) -> CameraConfig:
    """Perturb a camera in its own frame: intrinsic z-y-x Euler plus shift."""
    if all(a == 0.0 for a in euler_deg) and all(t == 0.0 for t in translation):
        return cam
    ez, ey, ex = (math.radians(a) for a in euler_deg)
    dq = Pose.from_axis_angle((0, 0, 1), ez)
    dq = compose_pose(dq, Pose.from_axis_angle((0, 1, 0), ey))
    dq = compose_pose(dq, Pose.from_axis_angle((1, 0, 0), ex))
    delta = Pose(dq.q, tuple(translation))
    return replace(cam, pose=compose_pose(cam.pose, delta))


def compose_pose(a: Pose, b: Pose) -> Pose:
    from .se3 import compose

    return compose(a, b)
