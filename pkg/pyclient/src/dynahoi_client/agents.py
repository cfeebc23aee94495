"""Scripted wire policies.

Ports of the gym's reference baselines to the client side of the wire:
they see exactly what any remote policy sees (camera sample plus 18-D
hand state) and recover the target by unprojecting against the
documented overhead camera.  Constants below mirror the published
protocol tables, not anything imported from the gym.

The stock catalog freezes the hand for the first 20 frames; policies
take ``observe_frames`` for custom catalogs but default to that.

All policies return single-row chunks (fully closed-loop).  The skill
emitter is the exception: it speaks the structured program format and
must size its durations to the session horizon.
"""

from __future__ import annotations

import json
import math
from typing import Dict, List, Optional, Tuple

DT = 0.05
OBSERVE_FRAMES = 20
LOC_CAP = 0.1  # m per frame
GRAS_CAP = 0.2  # rad per frame
JOINT_LIMIT = math.pi / 2
JOINT_COUNT = 15
ATTACH_RADIUS = 0.3
CLOSE_STEP = min((math.pi / 2) * DT, GRAS_CAP)  # full flexion in one second

CAMERA_OFFSET = (0.0, 1.8, 0.0)
FOCAL = 200.0
CX = 320.0
CY = 320.0

REACH_SLACK = 1e-9

Vec = Tuple[float, float, float]
ZERO_ROW = (0.0,) * 18


def _sub(a: Vec, b: Vec) -> Vec:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _add(a: Vec, b: Vec) -> Vec:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def _scale(a: Vec, s: float) -> Vec:
    return (a[0] * s, a[1] * s, a[2] * s)


def _norm(a: Vec) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def _dist(a: Vec, b: Vec) -> float:
    return _norm(_sub(a, b))


def _capped(step: Vec, cap: float) -> Vec:
    n = _norm(step)
    if n > cap:
        return _scale(step, cap / n)
    return step


def unproject(palm: Vec, u: float, v: float, depth: float) -> Vec:
    """Camera sample back to world coordinates (overhead_v1 rig)."""
    cx = palm[0] + CAMERA_OFFSET[0]
    cy = palm[1] + CAMERA_OFFSET[1]
    cz = palm[2] + CAMERA_OFFSET[2]
    return (
        cx + (u - CX) * depth / FOCAL,
        cy - depth,
        cz + (v - CY) * depth / FOCAL,
    )


def _palm_row(step: Vec) -> Tuple[float, ...]:
    return (*step, *((0.0,) * JOINT_COUNT))


class WirePolicy:
    """Shared sensing: unprojection, last-seen memory, the capture latch."""

    name = "wire"

    def __init__(self, observe_frames: int = OBSERVE_FRAMES) -> None:
        self.observe_frames = observe_frames
        self.reset()

    def reset(self) -> None:
        self._last_seen: Optional[Vec] = None
        self._captured = False

    def _sense(self, observation: dict, palm: Vec) -> Optional[Vec]:
        cam = observation["camera"]
        if cam["visible"]:
            self._last_seen = unproject(palm, cam["u"], cam["v"], cam["depth"])
        return self._last_seen

    def _update_capture(self, frame: int, palm: Vec, estimate: Optional[Vec]) -> None:
        if self._captured or estimate is None:
            return
        if frame > self.observe_frames and _dist(palm, estimate) <= ATTACH_RADIUS:
            self._captured = True

    def _close_row(self, joints: Tuple[float, ...]) -> Tuple[float, ...]:
        if all(q >= JOINT_LIMIT - 1e-9 for q in joints):
            return ZERO_ROW
        return (0.0, 0.0, 0.0, *((CLOSE_STEP,) * JOINT_COUNT))

    def __call__(self, observation: dict, state: Tuple[float, ...]) -> List[Tuple[float, ...]]:
        raise NotImplementedError


class ZeroPolicy(WirePolicy):
    """Lower bound: never moves, never closes."""

    name = "zero"

    def __call__(self, observation, state):
        return [ZERO_ROW]


class ChaserPolicy(WirePolicy):
    """Pursues the last seen target position at the palm speed cap."""

    name = "chaser"

    def __call__(self, observation, state):
        palm = (state[0], state[1], state[2])
        frame = observation["frame"]
        estimate = self._sense(observation, palm)
        self._update_capture(frame, palm, estimate)

        if frame < self.observe_frames:
            return [ZERO_ROW]
        if self._captured:
            return [self._close_row(state[3:])]
        if estimate is None:
            return [ZERO_ROW]
        return [_palm_row(_capped(_sub(estimate, palm), LOC_CAP))]


def fit_constant_velocity(samples: List[Tuple[float, Vec]]) -> Tuple[Vec, Vec]:
    """Per-axis least-squares (p0, v) through (t, position) samples."""
    n = len(samples)
    t_mean = sum(t for t, _ in samples) / n
    p_mean = (
        sum(p[0] for _, p in samples) / n,
        sum(p[1] for _, p in samples) / n,
        sum(p[2] for _, p in samples) / n,
    )
    var = sum((t - t_mean) ** 2 for t, _ in samples)
    cov = (0.0, 0.0, 0.0)
    for t, p in samples:
        cov = _add(cov, _scale(_sub(p, p_mean), t - t_mean))
    v = _scale(cov, 1.0 / var)
    return _sub(p_mean, _scale(v, t_mean)), v


class ExtrapolatorPolicy(WirePolicy):
    """Constant-velocity interceptor committed to the earliest reachable point.

    Needs the episode length to bound its intercept search; the client
    chose that number in start_episode, so it is honest wire knowledge.
    """

    name = "extrapolator"

    def __init__(self, length: int, observe_frames: int = OBSERVE_FRAMES) -> None:
        self.length = length
        super().__init__(observe_frames)

    def reset(self) -> None:
        super().reset()
        self._samples: List[Tuple[float, Vec]] = []
        self._fit: Optional[Tuple[Vec, Vec]] = None
        self._plan: Optional[Tuple[int, Vec]] = None
        self._planned = False

    def _line_at(self, t: float) -> Vec:
        p0, v = self._fit
        return _add(p0, _scale(v, t))

    def _make_plan(self, frame: int, palm: Vec) -> None:
        self._planned = True
        if len(self._samples) < 2:
            return
        self._fit = fit_constant_velocity(self._samples)
        for f in range(frame + 1, self.length):
            slots = f - frame
            target = self._line_at(f * DT)
            if _dist(palm, target) <= slots * LOC_CAP + REACH_SLACK:
                self._plan = (f, _scale(_sub(target, palm), 1.0 / slots))
                return

    def __call__(self, observation, state):
        palm = (state[0], state[1], state[2])
        frame = observation["frame"]
        estimate = self._sense(observation, palm)
        self._update_capture(frame, palm, estimate)

        if frame < self.observe_frames:
            if estimate is not None:
                self._samples.append((observation["time"], estimate))
            return [ZERO_ROW]
        if self._captured:
            return [self._close_row(state[3:])]
        if not self._planned:
            self._make_plan(frame, palm)

        if self._plan is not None and frame < self._plan[0]:
            return [_palm_row(self._plan[1])]
        if self._fit is not None:
            ahead = self._line_at((frame + 1) * DT)
            return [_palm_row(_capped(_sub(ahead, palm), LOC_CAP))]
        if estimate is not None:
            return [_palm_row(_capped(_sub(estimate, palm), LOC_CAP))]
        return [ZERO_ROW]


class SkillTemplatePolicy(WirePolicy):
    """Structured-program emitter: one program text per chunk.

    Approach while the target is out of reach, grasp once captured, wait
    when blind.  Every program's durations sum to the session horizon,
    as the server requires.
    """

    name = "skill"

    def __init__(self, horizon: int, observe_frames: int = OBSERVE_FRAMES) -> None:
        self.horizon = horizon
        super().__init__(observe_frames)

    def __call__(self, observation, state) -> str:
        palm = (state[0], state[1], state[2])
        frame = observation["frame"]
        estimate = self._sense(observation, palm)
        self._update_capture(frame, palm, estimate)

        if self._captured:
            step = {
                "skill": "GRASP",
                "params": {"joint_targets": [JOINT_LIMIT] * JOINT_COUNT},
                "duration": self.horizon,
                "terminate_if": "grasp_stable",
            }
        elif estimate is None or frame < self.observe_frames:
            step = {"skill": "WAIT", "duration": self.horizon}
        else:
            step = {
                "skill": "APPROACH",
                "params": {"target_point": list(estimate), "speed": LOC_CAP / DT},
                "duration": self.horizon,
            }
        return json.dumps({"action_sequence": [step]})


POLICIES: Dict[str, type] = {
    ZeroPolicy.name: ZeroPolicy,
    ChaserPolicy.name: ChaserPolicy,
    ExtrapolatorPolicy.name: ExtrapolatorPolicy,
    SkillTemplatePolicy.name: SkillTemplatePolicy,
}


def make_policy(name: str, *, length: int, horizon: int, observe_frames: int = OBSERVE_FRAMES):
    if name == ExtrapolatorPolicy.name:
        return ExtrapolatorPolicy(length, observe_frames)
    if name == SkillTemplatePolicy.name:
        return SkillTemplatePolicy(horizon, observe_frames)
    try:
        return POLICIES[name](observe_frames)
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
