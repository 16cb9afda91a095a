"""Rigid-body math: SE(3) poses, se(3) twists, exp/log maps, frame conjugation.

Poses carry a unit quaternion (w, x, y, z) and a translation in meters.  All
operations are pure and return new values; quaternions are renormalized after
every constructor and composition so long chains of composes do not drift.
Internals are scalar float arithmetic (no numpy) because the simulator calls
these per step, millions of times per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TOL = 1e-9
NEAR_PI_MARGIN = 1e-6
_SMALL_ANGLE = 1e-3  # below this, series expansions replace sin/cos ratios
# the log-map V^-1 coefficient cancels catastrophically well above the usual
# small-angle cutoff, so it gets its own wider series window
_SMALL_ANGLE_LOG_D = 0.15

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]


class NearPiRotation(ValueError):
    """Raised by log_map for rotation angles within NEAR_PI_MARGIN of pi.

    The logarithm is ill-conditioned there; callers that may encounter such
    deltas split them into smaller pieces before taking the log.
    """


def _normalize_quat(q: Quat) -> Quat:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n < 1e-12:
        raise ValueError("degenerate quaternion")
    return (w / n, x / n, y / n, z / n)


def _qmul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def _qrotate(q: Quat, v: Vec3) -> Vec3:
    # v' = v + 2 w (u x v) + 2 u x (u x v) with u the vector part
    w, ux, uy, uz = q
    vx, vy, vz = v
    cx = uy * vz - uz * vy
    cy = uz * vx - ux * vz
    cz = ux * vy - uy * vx
    dx = uy * cz - uz * cy
    dy = uz * cx - ux * cz
    dz = ux * cy - uy * cx
    return (
        vx + 2.0 * (w * cx + dx),
        vy + 2.0 * (w * cy + dy),
        vz + 2.0 * (w * cz + dz),
    )


def _cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


@dataclass(frozen=True)
class Twist:
    """se(3) coordinates: angular part in radians, linear part in meters."""

    angular: Vec3
    linear: Vec3

    def scaled(self, s: float) -> "Twist":
        ax, ay, az = self.angular
        lx, ly, lz = self.linear
        return Twist((ax * s, ay * s, az * s), (lx * s, ly * s, lz * s))

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return self.angular + self.linear

    @staticmethod
    def zero() -> "Twist":
        return Twist((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    @staticmethod
    def from_sequence(v) -> "Twist":
        a, b, c, d, e, f = (float(x) for x in v)
        return Twist((a, b, c), (d, e, f))

    def is_zero(self) -> bool:
        return self.angular == (0.0, 0.0, 0.0) and self.linear == (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: unit quaternion (w, x, y, z) plus translation (m)."""

    q: Quat
    t: Vec3

    def __post_init__(self):
        object.__setattr__(self, "q", _normalize_quat(self.q))
        object.__setattr__(self, "t", (float(self.t[0]), float(self.t[1]), float(self.t[2])))

    @staticmethod
    def identity() -> "Pose":
        return Pose((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose((1.0, 0.0, 0.0, 0.0), (x, y, z))

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float, t: Vec3 = (0.0, 0.0, 0.0)) -> "Pose":
        ax, ay, az = axis
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n < 1e-12:
            return Pose((1.0, 0.0, 0.0, 0.0), t)
        s = math.sin(0.5 * angle) / n
        return Pose((math.cos(0.5 * angle), ax * s, ay * s, az * s), t)

    @staticmethod
    def planar(x: float, y: float, yaw: float, z: float = 0.0) -> "Pose":
        """Tabletop pose: translation (x, y, z) plus yaw about world z."""
        return Pose((math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)), (x, y, z))

    def apply(self, p: Vec3) -> Vec3:
        """Transform a point from this frame to the parent frame."""
        r = _qrotate(self.q, p)
        return (r[0] + self.t[0], r[1] + self.t[1], r[2] + self.t[2])

    def rotate(self, v: Vec3) -> Vec3:
        """Rotate a direction (no translation)."""
        return _qrotate(self.q, v)

    def yaw(self) -> float:
        w, x, y, z = self.q
        return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))

    def as_list(self) -> list[float]:
        """Serialize as [qw, qx, qy, qz, tx, ty, tz] (demo file layout)."""
        return [*self.q, *self.t]

    @staticmethod
    def from_list(v) -> "Pose":
        vals = [float(x) for x in v]
        if len(vals) != 7:
            raise ValueError("pose list must have 7 entries")
        return Pose((vals[0], vals[1], vals[2], vals[3]), (vals[4], vals[5], vals[6]))


@dataclass(frozen=True)
class PoseDelta:
    """A relative transform; the frame it lives in is stated by the caller."""

    delta: Pose

    @staticmethod
    def identity() -> "PoseDelta":
        return PoseDelta(Pose.identity())


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(_qmul(a.q, b.q), a.apply(b.t))


def inverse(p: Pose) -> Pose:
    w, x, y, z = p.q
    qc = (w, -x, -y, -z)
    r = _qrotate(qc, p.t)
    return Pose(qc, (-r[0], -r[1], -r[2]))


def rotation_angle(p: Pose) -> float:
    """Canonical rotation angle in [0, pi]."""
    w, x, y, z = p.q
    vn = math.sqrt(x * x + y * y + z * z)
    return 2.0 * math.atan2(vn, abs(w))


def exp_map(xi: Twist) -> Pose:
    """se(3) exponential: twist to rigid transform."""
    wx, wy, wz = xi.angular
    th2 = wx * wx + wy * wy + wz * wz
    th = math.sqrt(th2)
    if th < _SMALL_ANGLE:
        th4 = th2 * th2
        s = 0.5 - th2 / 48.0 + th4 / 3840.0
        b = 0.5 - th2 / 24.0 + th4 / 720.0
        c = 1.0 / 6.0 - th2 / 120.0 + th4 / 5040.0
    else:
        s = math.sin(0.5 * th) / th
        b = (1.0 - math.cos(th)) / th2
        c = (th - math.sin(th)) / (th2 * th)
    q = (math.cos(0.5 * th), s * wx, s * wy, s * wz)
    # translation = V v with V = I + b [w]x + c [w]x^2
    v = xi.linear
    w_ = xi.angular
    cv = _cross(w_, v)
    ccv = _cross(w_, cv)
    t = (
        v[0] + b * cv[0] + c * ccv[0],
        v[1] + b * cv[1] + c * ccv[1],
        v[2] + b * cv[2] + c * ccv[2],
    )
    return Pose(q, t)


def log_map(p: Pose) -> Twist:
    """se(3) logarithm; inverse of exp_map for rotation angles below pi.

    Raises NearPiRotation when the rotation angle is within NEAR_PI_MARGIN of
    pi, where the axis is numerically unrecoverable.
    """
    w, x, y, z = p.q
    if w < 0.0:  # canonical sign so the angle lands in [0, pi]
        w, x, y, z = -w, -x, -y, -z
    vn = math.sqrt(x * x + y * y + z * z)
    th = 2.0 * math.atan2(vn, w)
    if th >= math.pi - NEAR_PI_MARGIN:
        raise NearPiRotation(f"rotation angle {th:.9f} too close to pi for log_map")
    if vn < 1e-9:
        omega = (2.0 * x, 2.0 * y, 2.0 * z)
    else:
        k = th / vn
        omega = (k * x, k * y, k * z)
    th2 = th * th
    if th < _SMALL_ANGLE_LOG_D:
        th4 = th2 * th2
        d = 1.0 / 12.0 + th2 / 720.0 + th4 / 30240.0 + th4 * th2 / 1209600.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th2
        d = (1.0 - a / (2.0 * b)) / th2
    # linear = V^-1 t with V^-1 = I - 1/2 [w]x + d [w]x^2
    t = p.t
    ct = _cross(omega, t)
    cct = _cross(omega, ct)
    lin = (
        t[0] - 0.5 * ct[0] + d * cct[0],
        t[1] - 0.5 * ct[1] + d * cct[1],
        t[2] - 0.5 * ct[2] + d * cct[2],
    )
    return Twist(omega, lin)


def similarity_transform(frame: Pose, x: PoseDelta) -> PoseDelta:
    """Conjugate a relative transform into the given frame: frame * x * frame^-1.

    Used to express a motion recorded in one frame (e.g. an object frame) in
    another (e.g. the hand frame).  Conjugation preserves the rotation angle.
    """
    return PoseDelta(compose(frame, compose(x.delta, inverse(frame))))


def poses_close(a: Pose, b: Pose, tol: float = TOL) -> bool:
    """True when b^-1 a is within tol in rotation angle and translation norm."""
    d = compose(inverse(b), a)
    dt = math.sqrt(d.t[0] ** 2 + d.t[1] ** 2 + d.t[2] ** 2)
    return rotation_angle(d) <= tol and dt <= tol
