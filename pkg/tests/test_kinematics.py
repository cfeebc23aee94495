import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynahoi.geometry import Quat, Vec3, dist, quat_norm, quat_rotate
from dynahoi.kinematics import (
    DEFAULT_HAND,
    FINGER_COUNT,
    JOINT_COUNT,
    JOINT_LIMIT,
    HandState,
    ObjectShape,
    clamp_joints,
    contact_test,
    finger_chain,
    fingertip_poses,
    fingertip_positions,
    fingertip_surface_distance,
    grasp_anchor_world,
    open_hand,
    palm_object_distance,
    surface_distance,
)

SEG_SUM = sum(DEFAULT_HAND.segments)


def _random_state(rng: random.Random, palm_scale: float = 1.0) -> HandState:
    palm = Vec3(
        rng.uniform(-palm_scale, palm_scale),
        rng.uniform(-palm_scale, palm_scale),
        rng.uniform(-palm_scale, palm_scale),
    )
    joints = tuple(rng.uniform(0.0, JOINT_LIMIT) for _ in range(JOINT_COUNT))
    return HandState(palm=palm, joints=joints)


def test_zero_flexion_fingertips_point_straight_down():
    # With every joint at zero each fingertip sits at the base offset plus
    # the summed segment lengths along the rest direction (straight down).
    state = open_hand(Vec3(0.0, 0.0, 0.0))
    for f in range(FINGER_COUNT):
        base = DEFAULT_HAND.base_offset(f)
        expected = Vec3(base.x, base.y - SEG_SUM, base.z)
        tip = fingertip_positions(DEFAULT_HAND, state)[f]
        assert dist(tip, expected) < 1e-12


def test_zero_flexion_with_translated_palm():
    palm = Vec3(0.3, 1.1, -0.2)
    state = open_hand(palm)
    for f in range(FINGER_COUNT):
        base = DEFAULT_HAND.base_offset(f)
        expected = Vec3(palm.x + base.x, palm.y + base.y - SEG_SUM, palm.z + base.z)
        assert dist(fingertip_positions(DEFAULT_HAND, state)[f], expected) < 1e-12


def test_thumb_base_opposes_finger_spread():
    # Four finger bases sit in the half-plane z > 0, the thumb in z < 0.
    offsets = [DEFAULT_HAND.base_offset(f) for f in range(FINGER_COUNT)]
    assert all(o.z > 0 for o in offsets[:4])
    assert offsets[4].z < 0


@given(
    dx=st.floats(-5, 5, allow_nan=False),
    dy=st.floats(-5, 5, allow_nan=False),
    dz=st.floats(-5, 5, allow_nan=False),
)
@settings(max_examples=50, deadline=None)
def test_fk_translation_equivariance(dx, dy, dz):
    rng = random.Random(7)
    state = _random_state(rng)
    shifted = HandState(palm=state.palm + Vec3(dx, dy, dz), joints=state.joints)
    for a, b in zip(fingertip_positions(DEFAULT_HAND, state), fingertip_positions(DEFAULT_HAND, shifted)):
        moved = a + Vec3(dx, dy, dz)
        assert dist(moved, b) < 1e-9


def test_fk_finite_difference_matches_analytic_derivative():
    # Independent analytic chain derivative: each segment past joint j
    # differentiates to L_s * d'(theta_cum) with
    # d(theta) = (-sin(t) cos(a), -cos(t), -sin(t) sin(a)).
    rng = random.Random(13)
    h = 1e-7
    for _ in range(20):
        state = _random_state(rng)
        finger = rng.randrange(FINGER_COUNT)
        joint = rng.randrange(3)
        a = math.radians(DEFAULT_HAND.base_angles_deg[finger])
        qs = state.joints[finger * 3 : finger * 3 + 3]
        ls = DEFAULT_HAND.segments
        grad = Vec3(0.0, 0.0, 0.0)
        for s in range(joint, 3):
            cum = sum(qs[: s + 1])
            dprime = Vec3(
                -math.cos(cum) * math.cos(a), math.sin(cum), -math.cos(cum) * math.sin(a)
            )
            grad = grad + dprime.scale(ls[s])

        bumped = list(state.joints)
        bumped[finger * 3 + joint] += h
        tip0 = fingertip_positions(DEFAULT_HAND, state)[finger]
        tip1 = fingertip_positions(DEFAULT_HAND, HandState(state.palm, tuple(bumped)))[finger]
        fd = Vec3((tip1.x - tip0.x) / h, (tip1.y - tip0.y) / h, (tip1.z - tip0.z) / h)
        assert dist(fd, grad) < 1e-6


def test_fingertip_orientations_are_unit_quaternions():
    rng = random.Random(3)
    for _ in range(25):
        state = _random_state(rng)
        for _, q in fingertip_poses(DEFAULT_HAND, state):
            assert abs(quat_norm(q) - 1.0) < 1e-9


def test_finger_chain_segment_lengths_preserved():
    rng = random.Random(5)
    for _ in range(25):
        state = _random_state(rng)
        for f in range(FINGER_COUNT):
            p0, p1, p2, p3 = finger_chain(DEFAULT_HAND, state, f)
            assert abs(dist(p0, p1) - DEFAULT_HAND.segments[0]) < 1e-12
            assert abs(dist(p1, p2) - DEFAULT_HAND.segments[1]) < 1e-12
            assert abs(dist(p2, p3) - DEFAULT_HAND.segments[2]) < 1e-12


def test_clamp_joints_bounds():
    clamped = clamp_joints([-0.5, 0.3, 9.0] * 5)
    assert min(clamped) == 0.0
    assert max(clamped) == JOINT_LIMIT
    assert clamped[1] == 0.3


def test_sphere_surface_distance_exact():
    obj = ObjectShape("sphere", (0.05,), Vec3(1.0, 2.0, 3.0))
    assert abs(surface_distance(obj, Vec3(1.0, 2.0, 3.2)) - 0.15) < 1e-12
    assert abs(surface_distance(obj, Vec3(1.0, 2.0, 3.0)) - (-0.05)) < 1e-12


def test_box_surface_distance_faces_and_corners():
    obj = ObjectShape("box", (0.1, 0.2, 0.3), Vec3(0.0, 0.0, 0.0))
    # face hit along x
    assert abs(surface_distance(obj, Vec3(0.5, 0.0, 0.0)) - 0.4) < 1e-12
    # corner: Euclidean distance to the (0.1, 0.2, 0.3) corner
    p = Vec3(0.2, 0.4, 0.6)
    expected = math.sqrt(0.1**2 + 0.2**2 + 0.3**2)
    assert abs(surface_distance(obj, p) - expected) < 1e-12
    # inside: most-penetrated face
    assert abs(surface_distance(obj, Vec3(0.05, 0.0, 0.0)) - (-0.05)) < 1e-12


def test_cylinder_surface_distance_exact():
    obj = ObjectShape("cylinder", (0.1, 0.2), Vec3(0.0, 0.0, 0.0))
    assert abs(surface_distance(obj, Vec3(0.3, 0.0, 0.0)) - 0.2) < 1e-12
    assert abs(surface_distance(obj, Vec3(0.0, 0.5, 0.0)) - 0.3) < 1e-12
    # rim: diagonal to the circular edge
    p = Vec3(0.3, 0.4, 0.0)
    assert abs(surface_distance(obj, p) - math.sqrt(0.2**2 + 0.2**2)) < 1e-12


def test_rotated_box_distance_matches_rotated_query():
    # 90 degrees about Y maps local +x to world -z.
    q = Quat(math.cos(math.pi / 4), 0.0, math.sin(math.pi / 4), 0.0)
    obj = ObjectShape("box", (0.1, 0.05, 0.3), Vec3(0.0, 0.0, 0.0), orientation=q)
    plain = ObjectShape("box", (0.1, 0.05, 0.3), Vec3(0.0, 0.0, 0.0))
    p = Vec3(0.4, 0.02, -0.1)
    local = quat_rotate(Quat(q.w, -q.x, -q.y, -q.z), p)
    assert abs(surface_distance(obj, p) - surface_distance(plain, local)) < 1e-12


def test_contact_monotone_in_object_radius():
    rng = random.Random(11)
    for _ in range(50):
        state = _random_state(rng, palm_scale=0.2)
        center = state.palm + Vec3(
            rng.uniform(-0.1, 0.1), rng.uniform(-0.15, 0.0), rng.uniform(-0.1, 0.1)
        )
        previous = None
        for r in (0.01, 0.03, 0.05, 0.08, 0.12):
            flags = contact_test(DEFAULT_HAND, state, ObjectShape("sphere", (r,), center))
            count = sum(flags)
            if previous is not None:
                assert count >= previous
            previous = count


def test_penetrating_fingertip_reports_zero_distance():
    state = open_hand(Vec3(0.0, 0.0, 0.0))
    tip = fingertip_positions(DEFAULT_HAND, state)[0]
    obj = ObjectShape("sphere", (0.05,), tip)
    assert fingertip_surface_distance(DEFAULT_HAND, state, obj) == 0.0


def test_distances_invariant_under_rigid_translation():
    rng = random.Random(17)
    for _ in range(25):
        state = _random_state(rng)
        center = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
        obj = ObjectShape("sphere", (0.04,), center)
        shift = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3))
        state2 = HandState(state.palm + shift, state.joints)
        obj2 = ObjectShape("sphere", (0.04,), center + shift)
        assert abs(
            palm_object_distance(state.palm, obj) - palm_object_distance(state2.palm, obj2)
        ) < 1e-9
        assert abs(
            fingertip_surface_distance(DEFAULT_HAND, state, obj)
            - fingertip_surface_distance(DEFAULT_HAND, state2, obj2)
        ) < 1e-9


def test_grasp_anchor_world_offsets_palm():
    anchor = grasp_anchor_world(DEFAULT_HAND, Vec3(1.0, 2.0, 3.0))
    assert dist(anchor, Vec3(1.0, 2.0, 3.0) + DEFAULT_HAND.grasp_anchor) < 1e-12
    # anchor is centered under the palm so a snapped object sits in the cage
    assert abs(DEFAULT_HAND.grasp_anchor.x) < 1e-12
    assert DEFAULT_HAND.grasp_anchor.y < 0


def test_closing_reduces_anchor_distance():
    # Uniform flexion sweeps the fingertips toward the cage center.
    palm = Vec3(0.0, 0.0, 0.0)
    obj = ObjectShape("sphere", (0.03,), grasp_anchor_world(DEFAULT_HAND, palm))
    d_open = fingertip_surface_distance(DEFAULT_HAND, open_hand(palm), obj)
    closed = HandState(palm, (0.5,) * JOINT_COUNT)
    d_closed = fingertip_surface_distance(DEFAULT_HAND, closed, obj)
    assert d_closed < d_open


def test_uniform_close_eventually_contacts_all_fingers():
    palm = Vec3(0.0, 0.0, 0.0)
    obj = ObjectShape("sphere", (0.03,), grasp_anchor_world(DEFAULT_HAND, palm))
    hit = False
    q = 0.0
    while q <= JOINT_LIMIT:
        state = HandState(palm, (q,) * JOINT_COUNT)
        if all(contact_test(DEFAULT_HAND, state, obj)):
            hit = True
            break
        q += 0.02
    assert hit, "uniform closing never contacted the object"


def test_rest_pose_clear_of_catalog_scale_objects():
    # No instant contact at zero flexion for the largest catalog shapes.
    palm = Vec3(0.0, 0.0, 0.0)
    anchor = grasp_anchor_world(DEFAULT_HAND, palm)
    state = open_hand(palm)
    for obj in (
        ObjectShape("sphere", (0.044,), anchor),
        ObjectShape("box", (0.032, 0.032, 0.032), anchor),
        ObjectShape("cylinder", (0.034, 0.045), anchor),
    ):
        assert not any(contact_test(DEFAULT_HAND, state, obj))


def test_unknown_object_kind_rejected():
    with pytest.raises(ValueError):
        surface_distance(ObjectShape("torus", (0.1,), Vec3(0, 0, 0)), Vec3(1, 0, 0))


def test_handstate_arity_checked():
    with pytest.raises(ValueError):
        HandState(palm=Vec3(0, 0, 0), joints=(0.0,) * 14)
