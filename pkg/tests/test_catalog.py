import json

import pytest

from dynahoi.catalog import (
    CatalogError,
    build_episode,
    canonical_checksum,
    corpus_plan,
    load_catalog,
)
from dynahoi.engine import Camera
from dynahoi.geometry import Vec3, dist
from dynahoi.kinematics import (
    DEFAULT_HAND,
    contact_test,
    fingertip_positions,
    grasp_anchor_world,
    open_hand,
    surface_distance,
)
from dynahoi.oracle import plan_intercept

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


def test_catalog_shape(catalog):
    assert catalog.version == "1.0.0"
    assert len(catalog.subcategories) == 22
    assert len(catalog.objects) == 11
    families = {s.family for s in catalog.subcategories}
    assert families == {
        "straight_line",
        "simple_harmonic",
        "circular_arc",
        "projectile",
        "pendulum",
        "inclined_rolling",
        "impact_response",
        "hybrid",
    }


def test_checksum_guards_against_edits(catalog, tmp_path):
    import importlib.resources as res

    raw = json.loads(
        res.files("dynahoi.data").joinpath("motion_catalog.json").read_text("utf-8")
    )
    raw["defaults"]["min_clearance"] = 0.1
    tampered = tmp_path / "catalog.json"
    tampered.write_text(json.dumps(raw))
    with pytest.raises(CatalogError):
        load_catalog(str(tampered))
    # re-stamping the checksum makes it load again
    body = {k: v for k, v in raw.items() if k != "checksum"}
    raw["checksum"] = canonical_checksum(body)
    tampered.write_text(json.dumps(raw))
    assert load_catalog(str(tampered)).defaults["min_clearance"] == 0.1


def test_object_sizes_within_hand_scale(catalog):
    for o in catalog.objects:
        if o.kind == "sphere":
            assert o.size[0] <= 0.044
        elif o.kind == "box":
            assert max(o.size) <= 0.032
        elif o.kind == "cylinder":
            assert o.size[0] <= 0.034
        else:
            pytest.fail(f"unexpected kind {o.kind}")
        assert o.weight > 0


def test_no_object_contacts_open_hand_at_anchor(catalog):
    """Every cataloged object held at the grasp anchor must clear the open
    hand, otherwise grasps would register before any closing motion."""
    palm = Vec3(0.0, 1.0, 0.0)
    state = open_hand(palm)
    anchor = grasp_anchor_world(DEFAULT_HAND, palm)
    for o in catalog.objects:
        shape = o.shape_at(anchor)
        assert not any(contact_test(DEFAULT_HAND, state, shape)), o.name
        gap = min(surface_distance(shape, p) for p in fingertip_positions(DEFAULT_HAND, state))
        assert gap > DEFAULT_HAND.contact_radius, o.name


def test_unknown_subcategory_raises(catalog):
    with pytest.raises(CatalogError):
        build_episode("no_such_thing", 0)


def test_build_is_deterministic(catalog):
    for name in ("line_slow", "pendulum_wide", "bounce_damped", "hybrid_arc_line"):
        a = build_episode(name, 3)
        b = build_episode(name, 3)
        assert a.to_dict() == b.to_dict()


def test_seeds_vary_the_scene(catalog):
    dicts = [build_episode("harmonic_standard", s).to_dict() for s in range(6)]
    assert len({json.dumps(d, sort_keys=True) for d in dicts}) == 6


def test_every_subcategory_yields_valid_scenes(catalog):
    box = catalog.defaults["core_box"]
    clearance = catalog.defaults["min_clearance"]
    for sub in catalog.subcategories:
        for seed in SEEDS:
            cfg = build_episode(sub.name, seed)
            assert sub.frames[0] <= cfg.frames <= sub.frames[1]
            assert 44 <= cfg.frames <= 160
            # target path keeps clear of the resting hand for the whole episode
            for f in range(cfg.frames):
                assert (
                    dist(cfg.motion.position_at(f * cfg.dt), cfg.hand_start)
                    >= clearance - 1e-9
                ), (sub.name, seed, f)
            # intercept point lands in the sampling box (bounce pins x/z only)
            p = cfg.motion.position_at(cfg.intercept_time)
            assert box["x"][0] - 1e-9 <= p.x <= box["x"][1] + 1e-9
            assert box["z"][0] - 1e-9 <= p.z <= box["z"][1] + 1e-9
            if sub.family != "impact_response":
                assert box["y"][0] - 1e-9 <= p.y <= box["y"][1] + 1e-9
            plan = plan_intercept(cfg)  # must not raise
            assert plan.speed <= 2.0


def test_straight_line_scenes_stay_visible_while_observing(catalog):
    camera = Camera()
    for name in ("line_slow", "line_medium", "line_fast"):
        for seed in SEEDS:
            cfg = build_episode(name, seed)
            for f in range(cfg.observe_frames + 1):
                obs = camera.project(cfg.hand_start, cfg.motion.position_at(f * cfg.dt))
                assert obs.visible, (name, seed, f)


def test_jitter_flag_pulls_documented_defaults(catalog):
    cfg = build_episode("line_slow", 0, jitter=True)
    jd = catalog.defaults["jitter"]
    assert cfg.jitter_sigma == jd["sigma"] > 0
    assert cfg.jitter_stall_rate == jd["stall_rate"] > 0
    clean = build_episode("line_slow", 0)
    assert clean.jitter_sigma == 0.0 and clean.jitter_stall_rate == 0.0
    # the scene itself is unchanged by the flag
    assert clean.motion.position_at(1.0) == cfg.motion.position_at(1.0)


def test_frame_override(catalog):
    cfg = build_episode("line_slow", 0, frames=90)
    assert cfg.frames == 90


def test_corpus_plan_counts_and_determinism(catalog):
    plan = corpus_plan(7, 200)
    assert len(plan) == 200
    assert plan == corpus_plan(7, 200)
    per_family = {}
    for name, _ in plan:
        fam = catalog.subcategory(name).family
        per_family[fam] = per_family.get(fam, 0) + 1
    assert set(per_family) == {s.family for s in catalog.subcategories}
    assert all(count >= 20 for count in per_family.values()), per_family


def test_corpus_plan_seeds_unique(catalog):
    plan = corpus_plan(3, 50)
    seeds = [s for _, s in plan]
    assert len(set(seeds)) == len(seeds)
