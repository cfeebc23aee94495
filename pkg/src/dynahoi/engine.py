"""Fixed-step episode engine.

One rollout = exactly ``frames`` states at dt = 0.05 s.  The first
``observe_frames`` frames are an observation window where the hand is
frozen (actions are zeroed) while the target follows its generator.
Afterwards the controller's per-frame deltas apply under hard caps:
palm displacement <= loc_cap per frame, per-joint rotation <= gras_cap,
joints clamped to [0, pi/2].

Once the control phase is active and the palm-to-object-center distance
falls under the attach radius, the object is captured: it snaps to the
hand's grasp anchor and is rigidly carried for the rest of the episode.
Early success never shortens a rollout; remaining frames are recorded
with the attached flag set.

Observations replace a rendered image with an exact pinhole projection
of the object center from a palm-mounted overhead camera
(u, v, depth, visibility), alongside proprioception and the instruction
string.  An observation is a pure function of the current state; nothing
about the future of the motion leaks through it.

Jitter mode reproduces logging-cadence artifacts: the finished record is
resampled at timestamps whose inter-sample intervals carry multiplicative
noise, with occasional zero-length stalls that duplicate a sample.  Only
the logged streams change; the underlying dynamics stay deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Vec3, dist, lerp
from .kinematics import (
    DEFAULT_HAND,
    JOINT_COUNT,
    JOINT_LIMIT,
    HandModel,
    HandState,
    ObjectShape,
    clamp_joints,
    fingertip_poses,
    grasp_anchor_world,
)
from .motion import motion_from_dict, motion_to_dict

DT = 0.05  # 20 Hz physics / logging interval
LOC_CAP = 0.1  # m per frame
GRAS_CAP = 0.2  # rad per frame per joint
LOC_THRESHOLD = 0.3
LENIENT_THRESHOLD = 1.0


@dataclass(frozen=True)
class Action:
    d_palm: Vec3
    d_joints: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.d_joints) != JOINT_COUNT:
            raise ValueError(f"expected {JOINT_COUNT} joint deltas")

    @staticmethod
    def zero() -> "Action":
        return Action(Vec3(0.0, 0.0, 0.0), (0.0,) * JOINT_COUNT)

    @staticmethod
    def from_vector(vec: Sequence[float]) -> "Action":
        if len(vec) != 3 + JOINT_COUNT:
            raise ValueError("action vector must have 18 entries")
        return Action(Vec3(vec[0], vec[1], vec[2]), tuple(vec[3:]))

    def to_vector(self) -> List[float]:
        return [self.d_palm.x, self.d_palm.y, self.d_palm.z, *self.d_joints]

    def is_zero(self) -> bool:
        return self.d_palm == Vec3(0.0, 0.0, 0.0) and all(q == 0.0 for q in self.d_joints)


@dataclass(frozen=True)
class CameraObs:
    u: float
    v: float
    depth: float
    visible: bool


@dataclass(frozen=True)
class Camera:
    """Palm-mounted overhead pinhole camera looking straight down.

    Camera axes: image x = world +X, image y = world +Z, optical axis =
    world -Y, so depth is height of the camera above the point.  Wide
    focal keeps desk-scale targets visible during the observe window.
    """

    offset: Vec3 = Vec3(0.0, 1.8, 0.0)
    focal: float = 200.0
    cx: float = 320.0
    cy: float = 320.0
    width: int = 640
    height: int = 640
    intrinsics_id: str = "overhead_v1"

    def position(self, palm: Vec3) -> Vec3:
        return palm + self.offset

    def project(self, palm: Vec3, point: Vec3) -> CameraObs:
        c = self.position(palm)
        x_cam = point.x - c.x
        y_cam = point.z - c.z
        depth = c.y - point.y
        if depth <= 1e-9:
            return CameraObs(0.0, 0.0, depth, False)
        u = self.cx + self.focal * x_cam / depth
        v = self.cy + self.focal * y_cam / depth
        visible = 0.0 <= u < self.width and 0.0 <= v < self.height
        return CameraObs(u, v, depth, visible)

    def unproject(self, palm: Vec3, u: float, v: float, depth: float) -> Vec3:
        c = self.position(palm)
        return Vec3(
            c.x + (u - self.cx) * depth / self.focal,
            c.y - depth,
            c.z + (v - self.cy) * depth / self.focal,
        )


DEFAULT_CAMERA = Camera()


@dataclass(frozen=True)
class Observation:
    frame: int
    time: float
    palm: Vec3
    joints: Tuple[float, ...]
    fingertips: Tuple[Tuple[Vec3, Tuple[float, float, float, float]], ...]
    camera: CameraObs
    instruction: str


@dataclass(frozen=True)
class EpisodeConfig:
    episode_id: int
    subcategory: str
    motion: object  # any family generator
    obj: ObjectShape
    hand_start: Vec3
    frames: int
    observe_frames: int
    intercept_time: float  # absolute seconds, snapped to the frame grid
    lead_time: float = 0.25
    dt: float = DT
    loc_threshold: float = LOC_THRESHOLD
    lenient_threshold: float = LENIENT_THRESHOLD
    loc_cap: float = LOC_CAP
    gras_cap: float = GRAS_CAP
    jitter_sigma: float = 0.0
    jitter_stall_rate: float = 0.0
    jitter_seed: int = 0
    instruction: str = ""
    hand: HandModel = DEFAULT_HAND

    def __post_init__(self) -> None:
        if self.frames < 2:
            raise ValueError("episode needs at least 2 frames")
        if not 0 <= self.observe_frames < self.frames:
            raise ValueError("observe_frames must be in [0, frames)")

    @property
    def duration(self) -> float:
        return (self.frames - 1) * self.dt

    def family(self) -> str:
        return self.motion.family

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "subcategory": self.subcategory,
            "motion": motion_to_dict(self.motion),
            "object": {
                "kind": self.obj.kind,
                "size": list(self.obj.size),
                "position": list(self.obj.position),
                "orientation": list(self.obj.orientation),
                "name": self.obj.name,
            },
            "hand_start": list(self.hand_start),
            "frames": self.frames,
            "observe_frames": self.observe_frames,
            "intercept_time": self.intercept_time,
            "lead_time": self.lead_time,
            "dt": self.dt,
            "loc_threshold": self.loc_threshold,
            "lenient_threshold": self.lenient_threshold,
            "loc_cap": self.loc_cap,
            "gras_cap": self.gras_cap,
            "jitter_sigma": self.jitter_sigma,
            "jitter_stall_rate": self.jitter_stall_rate,
            "jitter_seed": self.jitter_seed,
            "instruction": self.instruction,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeConfig":
        from .geometry import Quat

        o = d["object"]
        return EpisodeConfig(
            episode_id=d["episode_id"],
            subcategory=d["subcategory"],
            motion=motion_from_dict(d["motion"]),
            obj=ObjectShape(
                o["kind"], tuple(o["size"]), Vec3(*o["position"]), Quat(*o["orientation"]), o["name"]
            ),
            hand_start=Vec3(*d["hand_start"]),
            frames=d["frames"],
            observe_frames=d["observe_frames"],
            intercept_time=d["intercept_time"],
            lead_time=d["lead_time"],
            dt=d["dt"],
            loc_threshold=d["loc_threshold"],
            lenient_threshold=d["lenient_threshold"],
            loc_cap=d["loc_cap"],
            gras_cap=d["gras_cap"],
            jitter_sigma=d["jitter_sigma"],
            jitter_stall_rate=d["jitter_stall_rate"],
            jitter_seed=d["jitter_seed"],
            instruction=d["instruction"],
        )


@dataclass
class EpisodeRecord:
    """Logged streams of one rollout; index = frame."""

    config: EpisodeConfig
    times: List[float] = field(default_factory=list)
    palm: List[Vec3] = field(default_factory=list)
    joints: List[Tuple[float, ...]] = field(default_factory=list)
    target: List[Vec3] = field(default_factory=list)
    actions: List[Action] = field(default_factory=list)
    phases: List[str] = field(default_factory=list)
    attached: List[bool] = field(default_factory=list)
    camera: List[CameraObs] = field(default_factory=list)

    @property
    def frames(self) -> int:
        return len(self.palm)

    @property
    def attach_frame(self) -> Optional[int]:
        for i, a in enumerate(self.attached):
            if a:
                return i
        return None

    def hand_state(self, frame: int) -> HandState:
        return HandState(self.palm[frame], self.joints[frame])

    def palm_object_distances(self) -> List[float]:
        return [dist(p, t) for p, t in zip(self.palm, self.target)]

    def target_path_length(self) -> float:
        return sum(dist(a, b) for a, b in zip(self.target, self.target[1:]))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "times": self.times,
            "palm": [[p.x, p.y, p.z] for p in self.palm],
            "joints": [list(j) for j in self.joints],
            "target": [[p.x, p.y, p.z] for p in self.target],
            "actions": [a.to_vector() for a in self.actions],
            "phases": self.phases,
            "attached": self.attached,
            "camera": [[c.u, c.v, c.depth, c.visible] for c in self.camera],
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeRecord":
        rec = EpisodeRecord(config=EpisodeConfig.from_dict(d["config"]))
        rec.times = list(d["times"])
        rec.palm = [Vec3(*p) for p in d["palm"]]
        rec.joints = [tuple(j) for j in d["joints"]]
        rec.target = [Vec3(*p) for p in d["target"]]
        rec.actions = [Action.from_vector(a) for a in d["actions"]]
        rec.phases = list(d["phases"])
        rec.attached = list(d["attached"])
        rec.camera = [CameraObs(c[0], c[1], c[2], bool(c[3])) for c in d["camera"]]
        return rec


def clamp_action(action: Action, loc_cap: float, gras_cap: float) -> Action:
    d = action.d_palm
    n = d.norm()
    if n > loc_cap:
        d = d.scale(loc_cap / n)
    joints = tuple(min(gras_cap, max(-gras_cap, q)) for q in action.d_joints)
    return Action(d, joints)


class Engine:
    """Steps one episode; states are recorded as they are produced."""

    def __init__(self, config: EpisodeConfig, camera: Camera = DEFAULT_CAMERA) -> None:
        self.config = config
        self.camera = camera
        self.record = EpisodeRecord(config=config)
        self._frame = 0
        self._palm = config.hand_start
        self._joints = (0.0,) * JOINT_COUNT
        self._attached = False
        self._target = config.motion.position_at(0.0)
        self._log_state(phase="observe" if config.observe_frames > 0 else "act", action=None)

    # -- state access -----------------------------------------------------

    @property
    def frame(self) -> int:
        return self._frame

    @property
    def done_stepping(self) -> bool:
        return self._frame >= self.config.frames - 1

    def observation(self) -> Observation:
        state = HandState(self._palm, self._joints)
        tips = tuple(
            (pos, (q.w, q.x, q.y, q.z)) for pos, q in fingertip_poses(self.config.hand, state)
        )
        cam = self.camera.project(self._palm, self._target)
        return Observation(
            frame=self._frame,
            time=self._frame * self.config.dt,
            palm=self._palm,
            joints=self._joints,
            fingertips=tips,
            camera=cam,
            instruction=self.config.instruction,
        )

    # -- stepping ---------------------------------------------------------

    def step(self, action: Action, phase: str = "act") -> Observation:
        if self.done_stepping:
            raise RuntimeError("episode already ran its full frame budget")
        cfg = self.config
        t_next = self._frame + 1

        in_observe = self._frame < cfg.observe_frames
        applied = Action.zero() if in_observe else clamp_action(action, cfg.loc_cap, cfg.gras_cap)

        # overwrite the action recorded for the frame we are leaving
        self.record.actions[self._frame] = applied
        self.record.phases[self._frame] = "observe" if in_observe else phase

        self._palm = self._palm + applied.d_palm
        self._joints = clamp_joints(
            tuple(q + dq for q, dq in zip(self._joints, applied.d_joints))
        )

        if self._attached:
            self._target = grasp_anchor_world(cfg.hand, self._palm)
        else:
            self._target = cfg.motion.position_at(t_next * cfg.dt)
            if t_next > cfg.observe_frames and dist(self._palm, self._target) <= cfg.loc_threshold:
                self._attached = True
                self._target = grasp_anchor_world(cfg.hand, self._palm)

        self._frame = t_next
        self._log_state(phase=phase, action=None)
        return self.observation()

    def _log_state(self, phase: str, action: Optional[Action]) -> None:
        rec = self.record
        rec.times.append(self._frame * self.config.dt)
        rec.palm.append(self._palm)
        rec.joints.append(self._joints)
        rec.target.append(self._target)
        rec.actions.append(action or Action.zero())
        rec.phases.append(phase)
        rec.attached.append(self._attached)
        rec.camera.append(self.camera.project(self._palm, self._target))


def run_rollout(
    config: EpisodeConfig,
    controller,
    camera: Camera = DEFAULT_CAMERA,
) -> EpisodeRecord:
    """Run a full episode with ``controller.act(obs) -> Action``.

    The controller may expose a ``phase`` attribute naming the intent of
    the action it just returned; phases land in the record and drive
    approach-segment metric extraction.
    """
    engine = Engine(config, camera)
    begin = getattr(controller, "begin", None)
    if begin is not None:
        begin(config)
    obs = engine.observation()
    while not engine.done_stepping:
        action = controller.act(obs)
        phase = getattr(controller, "phase", "act")
        obs = engine.step(action, phase=phase)
    # final frame keeps the controller's last declared phase
    engine.record.phases[-1] = getattr(controller, "phase", engine.record.phases[-1])
    record = engine.record
    if config.jitter_sigma > 0.0 or config.jitter_stall_rate > 0.0:
        record = apply_jitter(record, camera)
    return record


# ---------------------------------------------------------------------------
# Logging jitter


def apply_jitter(record: EpisodeRecord, camera: Camera = DEFAULT_CAMERA) -> EpisodeRecord:
    """Resample the logged streams at perturbed timestamps.

    Interval model: dt * J_k with J_k drawn as 0 (a stall duplicating the
    previous sample) with probability ``jitter_stall_rate``, otherwise
    1 + sigma * N(0, 1) floored at 0.1.  Continuous streams interpolate
    between physics frames; discrete flags take the frame the timestamp
    falls in.  The camera block is re-projected from the resampled state
    so observations stay consistent.
    """
    cfg = record.config
    n = record.frames
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([cfg.jitter_seed, cfg.episode_id]))
    )
    times = [0.0]
    for _ in range(n - 1):
        stall = rng.random()
        noise = rng.standard_normal()
        if stall < cfg.jitter_stall_rate:
            step = 0.0
        else:
            step = cfg.dt * max(0.1, 1.0 + cfg.jitter_sigma * noise)
        times.append(times[-1] + step)

    t_max = (n - 1) * cfg.dt
    out = EpisodeRecord(config=cfg)
    for k in range(n):
        tau = min(times[k], t_max)
        i = min(int(tau / cfg.dt), n - 1)
        u = tau / cfg.dt - i
        j = min(i + 1, n - 1)
        palm = lerp(record.palm[i], record.palm[j], u)
        joints = tuple(
            a + (b - a) * u for a, b in zip(record.joints[i], record.joints[j])
        )
        target = lerp(record.target[i], record.target[j], u)
        out.times.append(tau)
        out.palm.append(palm)
        out.joints.append(joints)
        out.target.append(target)
        out.actions.append(record.actions[i])
        out.phases.append(record.phases[i])
        out.attached.append(record.attached[i])
        out.camera.append(camera.project(palm, target))
    return out
