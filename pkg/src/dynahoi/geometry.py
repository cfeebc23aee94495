"""Small 3D vector / rotation helpers used throughout the gym.

Everything here works on plain floats so that rollouts stay cheap and
bit-reproducible; numpy is reserved for batch statistics elsewhere.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Tuple


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other):  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)


ZERO3 = Vec3(0.0, 0.0, 0.0)
UP = Vec3(0.0, 1.0, 0.0)

# Gravity magnitude shared by the ballistic family generators and the
# physics invariant tests.
GRAVITY = 9.81


def dist(a: Vec3, b: Vec3) -> float:
    dx = a.x - b.x
    dy = a.y - b.y
    dz = a.z - b.z
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def planar_dist(a: Vec3, b: Vec3) -> float:
    """Distance projected onto the horizontal (XZ) plane."""
    dx = a.x - b.x
    dz = a.z - b.z
    return math.sqrt(dx * dx + dz * dz)


def lerp(a: Vec3, b: Vec3, u: float) -> Vec3:
    return Vec3(
        a.x + (b.x - a.x) * u,
        a.y + (b.y - a.y) * u,
        a.z + (b.z - a.z) * u,
    )


def rotate_about(v: Vec3, axis: Vec3, angle: float) -> Vec3:
    """Rodrigues rotation of v about a unit axis."""
    c = math.cos(angle)
    s = math.sin(angle)
    k = axis
    kv = k.cross(v)
    kkv = k.dot(v)
    return Vec3(
        v.x * c + kv.x * s + k.x * kkv * (1.0 - c),
        v.y * c + kv.y * s + k.y * kkv * (1.0 - c),
        v.z * c + kv.z * s + k.z * kkv * (1.0 - c),
    )


class Quat(NamedTuple):
    """Unit quaternion, scalar-first."""

    w: float
    x: float
    y: float
    z: float


IDENTITY_QUAT = Quat(1.0, 0.0, 0.0, 0.0)


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quat:
    half = 0.5 * angle
    s = math.sin(half)
    return Quat(math.cos(half), axis.x * s, axis.y * s, axis.z * s)


def quat_mul(a: Quat, b: Quat) -> Quat:
    return Quat(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def quat_conj(q: Quat) -> Quat:
    return Quat(q.w, -q.x, -q.y, -q.z)


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    # q * (0, v) * q^-1 expanded
    u = Vec3(q.x, q.y, q.z)
    uv = u.cross(v)
    uuv = u.cross(uv)
    return Vec3(
        v.x + 2.0 * (q.w * uv.x + uuv.x),
        v.y + 2.0 * (q.w * uv.y + uuv.y),
        v.z + 2.0 * (q.w * uv.z + uuv.z),
    )


def quat_norm(q: Quat) -> float:
    return math.sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z)


def quat_to_euler(q: Quat) -> Tuple[float, float, float]:
    """Intrinsic Z-Y-X decomposition, returned as (roll, pitch, yaw) radians.

    Pitch is clamped into [-pi/2, pi/2]; at the gimbal poles roll absorbs
    the free angle.  Logging-only: nothing numeric consumes these.
    """
    sinp = 2.0 * (q.w * q.y - q.z * q.x)
    sinp = max(-1.0, min(1.0, sinp))
    roll = math.atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y))
    pitch = math.asin(sinp)
    yaw = math.atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z))
    return roll, pitch, yaw
