"""Hand model, forward kinematics and object contact queries.

The hand is an 18-DoF abstraction: 3 translational degrees for the palm
plus 15 one-DoF flexion joints (5 fingers x 3 joints).  Finger bases sit
on a circle in the palm plane; at zero flexion every segment points
straight down, and flexion curls each finger inward toward the vertical
axis under the palm, so the closed hand forms a cage below the palm
center.  The thumb base sits opposed to the other four fingers.

Joint angles are radians in [0, JOINT_LIMIT].  All queries are pure
functions of the state; nothing here mutates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

from .geometry import (
    IDENTITY_QUAT,
    Quat,
    Vec3,
    dist,
    quat_conj,
    quat_from_axis_angle,
    quat_rotate,
)

FINGER_COUNT = 5
JOINTS_PER_FINGER = 3
JOINT_COUNT = FINGER_COUNT * JOINTS_PER_FINGER
JOINT_LIMIT = math.pi / 2.0  # 90 degree max grab rotation


@dataclass(frozen=True)
class HandModel:
    """Geometry constants for the 18-DoF hand.

    base_angles_deg places each finger base on a circle of base_radius in
    the palm's horizontal plane; the last entry is the thumb, opposed to
    the four-finger spread.  grasp_anchor is the palm-relative point an
    attached object is carried at (the center of the finger cage).
    """

    base_radius: float = 0.06
    base_angles_deg: Tuple[float, ...] = (20.0, 60.0, 100.0, 140.0, 270.0)
    segments: Tuple[float, float, float] = (0.04, 0.03, 0.02)
    grasp_anchor: Vec3 = Vec3(0.0, -0.075, 0.0)
    contact_radius: float = 0.012

    @property
    def reach(self) -> float:
        """Max fingertip distance from the palm center."""
        return self.base_radius + sum(self.segments)

    def base_offset(self, finger: int) -> Vec3:
        a = math.radians(self.base_angles_deg[finger])
        return Vec3(self.base_radius * math.cos(a), 0.0, self.base_radius * math.sin(a))

    def flex_axis(self, finger: int) -> Vec3:
        # Y x radial: rotation about this axis tilts the rest (down)
        # direction toward the palm's central axis.
        a = math.radians(self.base_angles_deg[finger])
        return Vec3(math.sin(a), 0.0, -math.cos(a))


DEFAULT_HAND = HandModel()


@dataclass(frozen=True)
class HandState:
    palm: Vec3
    joints: Tuple[float, ...]  # 15 flexion angles, radians

    def __post_init__(self) -> None:
        if len(self.joints) != JOINT_COUNT:
            raise ValueError(f"expected {JOINT_COUNT} joints, got {len(self.joints)}")


def open_hand(palm: Vec3) -> HandState:
    return HandState(palm=palm, joints=(0.0,) * JOINT_COUNT)


def clamp_joints(joints: Sequence[float]) -> Tuple[float, ...]:
    return tuple(min(JOINT_LIMIT, max(0.0, q)) for q in joints)


def _segment_dir(model: HandModel, finger: int, cumulative: float) -> Vec3:
    # Rest direction -Y rotated by the cumulative flexion angle about the
    # finger's flex axis; closed form avoids a generic Rodrigues call.
    a = math.radians(model.base_angles_deg[finger])
    s = math.sin(cumulative)
    c = math.cos(cumulative)
    return Vec3(-s * math.cos(a), -c, -s * math.sin(a))


def finger_chain(model: HandModel, state: HandState, finger: int) -> Tuple[Vec3, Vec3, Vec3, Vec3]:
    """Positions (base pivot, joint2 pivot, joint3 pivot, fingertip)."""
    q0 = state.joints[finger * JOINTS_PER_FINGER]
    q1 = state.joints[finger * JOINTS_PER_FINGER + 1]
    q2 = state.joints[finger * JOINTS_PER_FINGER + 2]
    l1, l2, l3 = model.segments
    p0 = state.palm + model.base_offset(finger)
    p1 = p0 + _segment_dir(model, finger, q0).scale(l1)
    p2 = p1 + _segment_dir(model, finger, q0 + q1).scale(l2)
    p3 = p2 + _segment_dir(model, finger, q0 + q1 + q2).scale(l3)
    return p0, p1, p2, p3


def fingertip_poses(model: HandModel, state: HandState) -> Tuple[Tuple[Vec3, Quat], ...]:
    """World pose of every fingertip.

    The orientation is the accumulated flexion rotation about the
    finger's flex axis.  It is tracked for logging completeness; no
    metric consumes it.
    """
    out = []
    for f in range(FINGER_COUNT):
        chain = finger_chain(model, state, f)
        total = (
            state.joints[f * JOINTS_PER_FINGER]
            + state.joints[f * JOINTS_PER_FINGER + 1]
            + state.joints[f * JOINTS_PER_FINGER + 2]
        )
        rot = quat_from_axis_angle(model.flex_axis(f), total)
        out.append((chain[3], rot))
    return tuple(out)


def fingertip_positions(model: HandModel, state: HandState) -> Tuple[Vec3, ...]:
    return tuple(finger_chain(model, state, f)[3] for f in range(FINGER_COUNT))


def grasp_anchor_world(model: HandModel, palm: Vec3) -> Vec3:
    return palm + model.grasp_anchor


# ---------------------------------------------------------------------------
# Objects


@dataclass(frozen=True)
class ObjectShape:
    """Rigid convex primitive with exact surface distance.

    kind: "sphere" (size = (radius,)), "box" (size = half extents),
    "cylinder" (size = (radius, half_height), axis local Y).
    """

    kind: str
    size: Tuple[float, ...]
    position: Vec3
    orientation: Quat = IDENTITY_QUAT
    name: str = ""

    def at(self, position: Vec3) -> "ObjectShape":
        return ObjectShape(self.kind, self.size, position, self.orientation, self.name)


def surface_distance(obj: ObjectShape, point: Vec3) -> float:
    """Signed distance from point to the object surface (negative inside)."""
    local = quat_rotate(quat_conj(obj.orientation), point - obj.position)
    if obj.kind == "sphere":
        return local.norm() - obj.size[0]
    if obj.kind == "box":
        hx, hy, hz = obj.size
        dx = abs(local.x) - hx
        dy = abs(local.y) - hy
        dz = abs(local.z) - hz
        ox = max(dx, 0.0)
        oy = max(dy, 0.0)
        oz = max(dz, 0.0)
        outside = math.sqrt(ox * ox + oy * oy + oz * oz)
        inside = min(max(dx, dy, dz), 0.0)
        return outside + inside
    if obj.kind == "cylinder":
        r, hh = obj.size
        dr = math.sqrt(local.x * local.x + local.z * local.z) - r
        dy = abs(local.y) - hh
        orr = max(dr, 0.0)
        oy = max(dy, 0.0)
        outside = math.sqrt(orr * orr + oy * oy)
        inside = min(max(dr, dy), 0.0)
        return outside + inside
    raise ValueError(f"unknown object kind: {obj.kind}")


def palm_object_distance(palm: Vec3, obj: ObjectShape) -> float:
    """Euclidean palm-center to object-center distance (the localization
    quantity)."""
    return dist(palm, obj.position)


def fingertip_surface_distance(model: HandModel, state: HandState, obj: ObjectShape) -> float:
    """Minimum fingertip-to-surface distance; penetration counts as 0."""
    best = math.inf
    for tip in fingertip_positions(model, state):
        d = max(surface_distance(obj, tip), 0.0)
        if d < best:
            best = d
    return best


def contact_test(model: HandModel, state: HandState, obj: ObjectShape) -> Tuple[bool, ...]:
    """Per-finger contact: fingertip within contact_radius of the surface."""
    flags = []
    for tip in fingertip_positions(model, state):
        flags.append(surface_distance(obj, tip) <= model.contact_radius)
    return tuple(flags)
