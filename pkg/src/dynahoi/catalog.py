"""Episode catalog: versioned scene data plus deterministic sampling.

The shipped ``data/motion_catalog.json`` holds the object library, the 22
motion subcategories with their parameter ranges, and global scene
defaults.  The file is integrity-checked: a sha256 over its canonical
body must match the embedded checksum, so silent edits fail loudly.

Sampling is reproducible by construction.  ``build_episode`` seeds a PCG64
generator from ``SeedSequence([seed, crc32(subcategory)])`` and draws
candidate scenes until one passes the validity gates:

* clearance: the target path keeps >= ``min_clearance`` from the resting
  hand for the whole episode, so nothing is graspable by standing still;
* feasibility: the scripted expert can reach the intercept point under
  its speed cap with margin;
* visibility (straight-line families): the target stays in the overhead
  camera frame for the full observation window.

Rejected draws simply consume generator entropy; the accepted scene is a
pure function of (subcategory, seed, overrides).

Every family is sampled around the origin and then rigidly shifted so
the trajectory passes exactly through the drawn intercept point at the
snapped intercept time.  Bouncing motion shifts only horizontally since
its vertical profile is tied to the ground plane.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engine import DT, Camera, EpisodeConfig
from .geometry import Vec3, dist, rotate_about
from .kinematics import ObjectShape
from .motion import (
    CircularArc,
    Hybrid,
    ImpactResponse,
    InclinedRolling,
    Pendulum,
    Projectile,
    SimpleHarmonic,
    StraightLine,
    compose_hybrid,
)
from .oracle import InfeasiblePlanError, plan_intercept

CATALOG_RESOURCE = "motion_catalog.json"
MAX_TRIES = 200
SPEED_MARGIN = 1.9  # m/s, below the oracle's hard 2.0 cap
MIN_MOVE_FRAMES = 4
MIN_TAIL_FRAMES = 6


class CatalogError(Exception):
    """Catalog data is missing, corrupt, or cannot yield a valid scene."""


@dataclass(frozen=True)
class ObjectEntry:
    name: str
    kind: str
    size: Tuple[float, ...]
    weight: float

    def shape_at(self, position: Vec3) -> ObjectShape:
        return ObjectShape(self.kind, self.size, position, name=self.name)


@dataclass(frozen=True)
class Subcategory:
    name: str
    family: str
    stratum: str
    weight: float
    frames: Tuple[int, int]
    params: Dict[str, Sequence[float]]
    instruction: str


@dataclass(frozen=True)
class Catalog:
    version: str
    defaults: Dict[str, object]
    objects: Tuple[ObjectEntry, ...]
    subcategories: Tuple[Subcategory, ...]

    def names(self) -> List[str]:
        return [s.name for s in self.subcategories]

    def subcategory(self, name: str) -> Subcategory:
        for s in self.subcategories:
            if s.name == name:
                return s
        raise CatalogError(f"unknown subcategory: {name}")

    @property
    def hand_start(self) -> Vec3:
        return Vec3(*self.defaults["hand_start"])

    @property
    def observe_frames(self) -> int:
        return int(self.defaults["observe_frames"])


def canonical_checksum(body: dict) -> str:
    """sha256 of the canonical JSON encoding of the catalog body."""
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _parse_catalog(raw: dict) -> Catalog:
    body = {k: v for k, v in raw.items() if k != "checksum"}
    stated = raw.get("checksum")
    if stated != canonical_checksum(body):
        raise CatalogError("catalog checksum mismatch; data file was altered")
    objects = tuple(
        ObjectEntry(o["name"], o["kind"], tuple(o["size"]), o["weight"]) for o in body["objects"]
    )
    subs = tuple(
        Subcategory(
            s["name"],
            s["family"],
            s["stratum"],
            s["weight"],
            (s["frames"][0], s["frames"][1]),
            s["params"],
            s["instruction"],
        )
        for s in body["subcategories"]
    )
    return Catalog(body["version"], body["defaults"], objects, subs)


_CACHED: Optional[Catalog] = None


def load_catalog(path: Optional[str] = None) -> Catalog:
    global _CACHED
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return _parse_catalog(json.load(fh))
    if _CACHED is None:
        text = resources.files("dynahoi.data").joinpath(CATALOG_RESOURCE).read_text("utf-8")
        _CACHED = _parse_catalog(json.loads(text))
    return _CACHED


# ---------------------------------------------------------------------------
# Sampling


def _rng_for(subcategory: str, seed: int) -> np.random.Generator:
    tag = zlib.crc32(subcategory.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))


def _uniform(rng: np.random.Generator, lo_hi: Sequence[float]) -> float:
    return float(rng.uniform(lo_hi[0], lo_hi[1]))


def _heading(rng: np.random.Generator, pitch_range: Sequence[float]) -> Vec3:
    azimuth = float(rng.uniform(0.0, 2.0 * math.pi))
    pitch = _uniform(rng, pitch_range)
    c = math.cos(pitch)
    return Vec3(c * math.cos(azimuth), math.sin(pitch), c * math.sin(azimuth))


def _horizontal(rng: np.random.Generator) -> Vec3:
    azimuth = float(rng.uniform(0.0, 2.0 * math.pi))
    return Vec3(math.cos(azimuth), 0.0, math.sin(azimuth))


def _tilted_basis(rng: np.random.Generator, max_tilt: float) -> Tuple[Vec3, Vec3]:
    tilt = float(rng.uniform(0.0, max_tilt))
    axis = _horizontal(rng)
    u1 = rotate_about(Vec3(1.0, 0.0, 0.0), axis, tilt)
    u2 = rotate_about(Vec3(0.0, 0.0, 1.0), axis, tilt)
    return u1.normalized(), u2.normalized()


def _sample_motion(sub: Subcategory, rng: np.random.Generator, t_i: float, dur: float):
    p = sub.params
    origin = Vec3(0.0, 0.0, 0.0)
    fam = sub.family

    if fam == "straight_line":
        speed = _uniform(rng, p["speed"])
        return StraightLine(origin, _heading(rng, p["pitch"]).scale(speed))

    if fam == "simple_harmonic":
        axis = _heading(rng, p["pitch"])
        return SimpleHarmonic(
            origin,
            axis,
            _uniform(rng, p["amplitude"]),
            _uniform(rng, p["omega"]),
            float(rng.uniform(0.0, 2.0 * math.pi)),
        )

    if fam == "circular_arc":
        u1, u2 = _tilted_basis(rng, p["max_tilt"][1])
        omega = _uniform(rng, p["omega"]) * (1.0 if rng.random() < 0.5 else -1.0)
        return CircularArc(
            origin,
            u1,
            u2,
            _uniform(rng, p["radius"]),
            omega,
            float(rng.uniform(0.0, 2.0 * math.pi)),
        )

    if fam == "projectile":
        vh = _uniform(rng, p["horizontal_speed"])
        t_apex = t_i + _uniform(rng, p["apex_offset"])
        v0y = 9.81 * t_apex
        azimuth = float(rng.uniform(0.0, 2.0 * math.pi))
        speed = math.hypot(vh, v0y)
        elevation = math.atan2(v0y, vh)
        return Projectile(origin, speed, elevation, azimuth)

    if fam == "pendulum":
        return Pendulum(
            origin,
            _uniform(rng, p["length"]),
            _horizontal(rng),
            _uniform(rng, p["theta0"]) * (1.0 if rng.random() < 0.5 else -1.0),
            0.0,
            dur + 0.25,
        )

    if fam == "inclined_rolling":
        return InclinedRolling(
            origin,
            _horizontal(rng),
            _uniform(rng, p["incline"]),
            _uniform(rng, p["speed0"]),
        )

    if fam == "impact_response":
        ground_y = _uniform(rng, p["ground_y"])
        drop = _uniform(rng, p["drop_height"])
        vh = _uniform(rng, p["horizontal_speed"])
        azimuth = float(rng.uniform(0.0, 2.0 * math.pi))
        vy0 = _uniform(rng, p["vertical_speed"])
        start = Vec3(0.0, ground_y + drop, 0.0)
        vel = Vec3(vh * math.cos(azimuth), vy0, vh * math.sin(azimuth))
        return ImpactResponse(
            start, vel, ground_y, _uniform(rng, p["restitution"]), dur + 0.25
        )

    if fam == "hybrid":
        return _sample_hybrid(sub, rng, dur)

    raise CatalogError(f"unknown family in catalog: {fam}")


def _tangent_arc(end: Vec3, velocity: Vec3, radius: float, side: float) -> CircularArc:
    speed = velocity.norm()
    v_hat = velocity.scale(1.0 / speed)
    normal = Vec3(0.0, 1.0, 0.0).cross(v_hat).normalized().scale(side)
    center = end + normal.scale(radius)
    u1 = (end - center).scale(1.0 / radius)
    return CircularArc(center, u1, v_hat, radius, speed / radius, 0.0)


def _sample_hybrid(sub: Subcategory, rng: np.random.Generator, dur: float) -> Hybrid:
    p = sub.params
    origin = Vec3(0.0, 0.0, 0.0)
    variant = sub.name

    if variant == "hybrid_line_arc":
        speed = _uniform(rng, p["speed"])
        heading = _horizontal(rng)
        line = StraightLine(origin, heading.scale(speed))
        d1 = _uniform(rng, p["first_frac"]) * dur
        side = 1.0 if rng.random() < 0.5 else -1.0
        arc = _tangent_arc(line.position_at(d1), line.velocity, _uniform(rng, p["radius"]), side)
        return compose_hybrid([(line, d1), (arc, dur - d1 + 0.3)])

    if variant == "hybrid_arc_line":
        u1, u2 = _tilted_basis(rng, 0.0)
        arc = CircularArc(
            origin,
            u1,
            u2,
            _uniform(rng, p["radius"]),
            _uniform(rng, p["omega"]) * (1.0 if rng.random() < 0.5 else -1.0),
            float(rng.uniform(0.0, 2.0 * math.pi)),
        )
        d1 = _uniform(rng, p["first_frac"]) * dur
        line = StraightLine(origin, arc.velocity_at(d1))
        return compose_hybrid([(arc, d1), (line, dur - d1 + 0.3)])

    if variant == "hybrid_stop_go":
        speed = _uniform(rng, p["speed"])
        heading = _horizontal(rng)
        line = StraightLine(origin, heading.scale(speed))
        d1 = _uniform(rng, p["first_frac"]) * dur
        d2 = min(_uniform(rng, p["burst_duration"]), 0.3 * dur)
        burst = SimpleHarmonic(
            origin,
            _heading(rng, [-0.3, 0.3]),
            _uniform(rng, p["burst_amplitude"]),
            _uniform(rng, p["burst_omega"]),
            0.0,
        )
        tail = StraightLine(origin, heading.scale(speed))
        return compose_hybrid([(line, d1), (burst, d2), (tail, dur - d1 - d2 + 0.3)])

    raise CatalogError(f"unknown hybrid variant: {variant}")


def _shift(motion, delta: Vec3):
    """Rigid translation of a trajectory; bounce keeps its ground plane."""
    fam = motion.family
    if fam == "straight_line":
        return StraightLine(motion.start + delta, motion.velocity)
    if fam == "simple_harmonic":
        return SimpleHarmonic(
            motion.center + delta, motion.axis, motion.amplitude, motion.omega, motion.phase
        )
    if fam == "circular_arc":
        return CircularArc(
            motion.center + delta, motion.u1, motion.u2, motion.radius, motion.omega, motion.phase
        )
    if fam == "projectile":
        return Projectile(motion.start + delta, motion.speed, motion.elevation, motion.azimuth)
    if fam == "pendulum":
        # checkpoints depend only on angles; reuse them instead of re-integrating
        shifted = object.__new__(Pendulum)
        shifted.pivot = motion.pivot + delta
        shifted.length = motion.length
        shifted.swing_axis = motion.swing_axis
        shifted.theta0 = motion.theta0
        shifted.theta_dot0 = motion.theta_dot0
        shifted.horizon = motion.horizon
        shifted._checkpoints = motion._checkpoints
        return shifted
    if fam == "inclined_rolling":
        return InclinedRolling(motion.origin + delta, motion.downhill_h, motion.incline, motion.speed0)
    if fam == "impact_response":
        planar = Vec3(delta.x, 0.0, delta.z)
        out = ImpactResponse.__new__(ImpactResponse)
        out.start = motion.start + planar
        out.velocity = motion.velocity
        out.ground_y = motion.ground_y
        out.restitution = motion.restitution
        out.horizon = motion.horizon
        out.arcs = [(t, p + planar, v, s) for t, p, v, s in motion.arcs]
        return out
    if fam == "hybrid":
        segments = list(motion.segments)
        first, d0 = segments[0]
        segments[0] = (_shift(first, delta), d0)
        return compose_hybrid(segments)
    raise CatalogError(f"cannot shift family: {fam}")


def _pick_object(catalog: Catalog, rng: np.random.Generator) -> ObjectEntry:
    weights = np.array([o.weight for o in catalog.objects], dtype=float)
    idx = int(rng.choice(len(weights), p=weights / weights.sum()))
    return catalog.objects[idx]


def _sample_intercept_point(rng: np.random.Generator, box: dict) -> Vec3:
    return Vec3(
        float(rng.uniform(box["x"][0], box["x"][1])),
        float(rng.uniform(box["y"][0], box["y"][1])),
        float(rng.uniform(box["z"][0], box["z"][1])),
    )


def _clearance_ok(motion, frames: int, dt: float, hand_start: Vec3, min_clearance: float) -> bool:
    for f in range(frames):
        if dist(motion.position_at(f * dt), hand_start) < min_clearance:
            return False
    return True


def _observe_visible(motion, observe_frames: int, dt: float, hand_start: Vec3) -> bool:
    camera = Camera()
    for f in range(observe_frames + 1):
        if not camera.project(hand_start, motion.position_at(f * dt)).visible:
            return False
    return True


def build_episode(
    subcategory: str,
    seed: int,
    *,
    frames: Optional[int] = None,
    observe_frames: Optional[int] = None,
    jitter: bool = False,
    episode_id: Optional[int] = None,
    catalog: Optional[Catalog] = None,
) -> EpisodeConfig:
    """Sample one valid episode configuration, deterministically in seed."""
    cat = catalog or load_catalog()
    sub = cat.subcategory(subcategory)
    rng = _rng_for(subcategory, seed)
    defaults = cat.defaults
    hand_start = cat.hand_start
    observe = cat.observe_frames if observe_frames is None else int(observe_frames)
    dt = DT
    frac = float(defaults["intercept_fraction"])
    lead = float(defaults["lead_time"])
    min_clear = float(defaults["min_clearance"])
    jitter_cfg = defaults["jitter"]

    for _ in range(MAX_TRIES):
        f = frames if frames is not None else int(rng.integers(sub.frames[0], sub.frames[1] + 1))
        if f <= observe + MIN_TAIL_FRAMES:
            raise CatalogError(f"frame budget {f} too small for observe window {observe}")
        dur = (f - 1) * dt
        t_obs = observe * dt
        f_i = int(round((t_obs + frac * (dur - t_obs)) / dt))
        t_i = f_i * dt
        if f - 1 - f_i < MIN_TAIL_FRAMES:
            continue

        entry = _pick_object(cat, rng)
        p_i = _sample_intercept_point(rng, defaults["core_box"])
        nominal = _sample_motion(sub, rng, t_i, dur)
        delta = p_i - nominal.position_at(t_i)
        motion = _shift(nominal, delta)
        anchor = motion.position_at(t_i)

        move_frames = (f_i - int(round(lead / dt))) - observe
        if move_frames < MIN_MOVE_FRAMES:
            continue
        if dist(anchor, hand_start) / (move_frames * dt) > SPEED_MARGIN:
            continue
        if not _clearance_ok(motion, f, dt, hand_start, min_clear):
            continue
        if sub.family == "straight_line" and not _observe_visible(motion, observe, dt, hand_start):
            continue

        config = EpisodeConfig(
            episode_id=seed if episode_id is None else episode_id,
            subcategory=subcategory,
            motion=motion,
            obj=entry.shape_at(motion.position_at(0.0)),
            hand_start=hand_start,
            frames=f,
            observe_frames=observe,
            intercept_time=t_i,
            lead_time=lead,
            dt=dt,
            jitter_sigma=float(jitter_cfg["sigma"]) if jitter else 0.0,
            jitter_stall_rate=float(jitter_cfg["stall_rate"]) if jitter else 0.0,
            jitter_seed=seed,
            instruction=sub.instruction.format(object=entry.name.replace("_", " ")),
        )
        try:
            plan_intercept(config)
        except InfeasiblePlanError:
            continue
        return config

    raise CatalogError(
        f"no valid scene for {subcategory!r} seed {seed} within {MAX_TRIES} draws"
    )


def corpus_plan(seed: int, count: int, catalog: Optional[Catalog] = None) -> List[Tuple[str, int]]:
    """Deterministic (subcategory, episode_seed) schedule for a corpus.

    Episode quotas follow subcategory weights by largest-remainder
    apportionment, then interleave evenly so any prefix is still roughly
    weight-proportional.
    """
    cat = catalog or load_catalog()
    subs = cat.subcategories
    total_w = sum(s.weight for s in subs)
    shares = [count * s.weight / total_w for s in subs]
    quotas = [int(math.floor(x)) for x in shares]
    remainder = count - sum(quotas)
    by_frac = sorted(range(len(subs)), key=lambda i: (shares[i] - quotas[i], subs[i].name), reverse=True)
    for i in by_frac[:remainder]:
        quotas[i] += 1

    entries: List[Tuple[float, str]] = []
    for s, q in zip(subs, quotas):
        for j in range(q):
            entries.append(((j + 0.5) / q, s.name))
    entries.sort(key=lambda e: (e[0], e[1]))
    return [(name, seed + i) for i, (_, name) in enumerate(entries)]
