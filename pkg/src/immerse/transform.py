"""Rigid transforms (translation + unit quaternion) on plain float tuples.

Tuples keep per-tick overhead low; numpy is only used by the tests' oracles.
Quaternions are stored as ``(w, x, y, z)``.
"""

from __future__ import annotations

import math
from typing import Tuple

Vec3 = Tuple[float, float, float]
Quat = Tuple[float, float, float, float]

ZERO: Vec3 = (0.0, 0.0, 0.0)
IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def vdot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def vcross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def vnorm(a: Vec3) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def quat_normalize(q: Quat) -> Quat:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"cannot normalize quaternion {q!r}")
    if n == 1.0:
        return q
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quat:
    n = vnorm(axis)
    if n == 0.0:
        if angle == 0.0:
            return IDENTITY_QUAT
        raise ValueError("rotation axis must be nonzero")
    s = math.sin(0.5 * angle) / n
    return quat_normalize((math.cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s))


def quat_from_rotvec(r: Vec3) -> Quat:
    """Quaternion for a rotation vector (axis * angle)."""
    angle = vnorm(r)
    if angle == 0.0:
        return IDENTITY_QUAT
    s = math.sin(0.5 * angle) / angle
    return quat_normalize((math.cos(0.5 * angle), r[0] * s, r[1] * s, r[2] * s))


def quat_to_axis_angle(q: Quat) -> tuple[Vec3, float]:
    w, x, y, z = q
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(x * x + y * y + z * z)
    if s == 0.0:
        return (1.0, 0.0, 0.0), 0.0
    return (x / s, y / s, z / s), 2.0 * math.atan2(s, w)


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * (u x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_to_matrix(q: Quat) -> tuple[Vec3, Vec3, Vec3]:
    """Row-major rotation matrix."""
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def quat_slerp(a: Quat, b: Quat, u: float) -> Quat:
    d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    if d < 0.0:
        b = (-b[0], -b[1], -b[2], -b[3])
        d = -d
    if d > 0.9995:
        return quat_normalize(tuple(a[i] + u * (b[i] - a[i]) for i in range(4)))
    theta = math.acos(d)
    s = math.sin(theta)
    wa = math.sin((1.0 - u) * theta) / s
    wb = math.sin(u * theta) / s
    return quat_normalize(tuple(wa * a[i] + wb * b[i] for i in range(4)))


class Transform:
    """Position (meters) and orientation; scale is always 1.

    Instances are immutable, so they can be shared and cached freely.
    """

    __slots__ = ("position", "orientation")

    def __init__(self, position: Vec3 = ZERO, orientation: Quat = IDENTITY_QUAT):
        self.position = (float(position[0]), float(position[1]), float(position[2]))
        q = (float(orientation[0]), float(orientation[1]), float(orientation[2]), float(orientation[3]))
        self.orientation = IDENTITY_QUAT if q == IDENTITY_QUAT else quat_normalize(q)

    @classmethod
    def _raw(cls, position: Vec3, orientation: Quat) -> "Transform":
        t = object.__new__(cls)
        t.position = position
        t.orientation = orientation
        return t

    @classmethod
    def from_axis_angle(cls, position: Vec3, axis: Vec3, angle: float) -> "Transform":
        return cls(position, quat_from_axis_angle(axis, angle))

    def compose(self, other: "Transform") -> "Transform":
        """``self ∘ other``: ``other`` expressed in ``self``'s frame."""
        q = self.orientation
        p = other.position if q is IDENTITY_QUAT or other.position == ZERO else quat_rotate(q, other.position)
        pos = (self.position[0] + p[0], self.position[1] + p[1], self.position[2] + p[2])
        if other.orientation is IDENTITY_QUAT:
            return Transform._raw(pos, self.orientation)
        if self.orientation is IDENTITY_QUAT:
            return Transform._raw(pos, other.orientation)
        return Transform._raw(pos, quat_normalize(quat_mul(self.orientation, other.orientation)))

    __matmul__ = compose

    def inverse(self) -> "Transform":
        qi = quat_conj(self.orientation)
        p = quat_rotate(qi, self.position)
        return Transform._raw((-p[0], -p[1], -p[2]), qi)

    def apply(self, point: Vec3) -> Vec3:
        return vadd(self.position, quat_rotate(self.orientation, point))

    def with_position(self, position: Vec3) -> "Transform":
        return Transform._raw((float(position[0]), float(position[1]), float(position[2])), self.orientation)

    def with_orientation(self, orientation: Quat) -> "Transform":
        return Transform(self.position, orientation)

    def basis(self) -> tuple[Vec3, Vec3, Vec3]:
        return quat_to_matrix(self.orientation)

    def almost_equal(self, other: "Transform", tol: float = 1e-9) -> bool:
        if any(abs(a - b) > tol for a, b in zip(self.position, other.position)):
            return False
        q, r = self.orientation, other.orientation
        # q and -q are the same rotation
        same = all(abs(a - b) <= tol for a, b in zip(q, r))
        flipped = all(abs(a + b) <= tol for a, b in zip(q, r))
        return same or flipped

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Transform):
            return NotImplemented
        return self.position == other.position and self.orientation == other.orientation

    def __hash__(self) -> int:
        return hash((self.position, self.orientation))

    def __repr__(self) -> str:
        return f"Transform(position={self.position}, orientation={self.orientation})"


IDENTITY = Transform()
