"""Scripted expert used to author ground-truth demonstrations.

The oracle knows the generator behind the target's motion, so it can do
what a learned policy must infer: pick an intercept time on the frame
grid, move the palm there in equal straight-line steps, wait for the
object to arrive, and close the fingers once it is underneath.

Phase timeline per episode::

    observe | move ... move | wait ... | close ... | hold ...

The planner arrives ``lead_time`` seconds ahead of the intercept so the
wait segment absorbs timing error from grid snapping.  A plan whose move
segment would exceed the palm speed cap is refused outright rather than
silently clipped; refusal is how infeasible catalog draws get rejected.

The controller never reads engine internals.  It mirrors attachment from
the observation stream by re-running the engine's own attach rule, which
keeps it usable over a wire where only observations travel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import DT, Action, EpisodeConfig, EpisodeRecord, Observation, run_rollout
from .geometry import Vec3, dist, planar_dist
from .kinematics import (
    JOINT_COUNT,
    JOINT_LIMIT,
    HandState,
    contact_test,
    grasp_anchor_world,
)

LEAD_TIME = 0.25  # s, arrive this early at the intercept point
CLOSE_RATE = (math.pi / 2) / 1.0  # rad/s, full flexion in one second
WAIT_PLANAR_THRESHOLD = 0.05  # m, XZ gate that triggers the close
PALM_SPEED_CAP = 2.0  # m/s, any faster plan is infeasible


class InfeasiblePlanError(Exception):
    """The intercept cannot be reached under the palm speed cap."""


@dataclass(frozen=True)
class InterceptPlan:
    intercept_frame: int
    arrive_frame: int
    intercept_point: Vec3
    step: Vec3  # constant per-frame palm displacement during move
    move_frames: int
    speed: float

    @property
    def intercept_time(self) -> float:
        return self.intercept_frame * DT


def plan_intercept(config: EpisodeConfig) -> InterceptPlan:
    """Snap the configured intercept to the frame grid and lay out the move.

    Raises InfeasiblePlanError when the move would need more than
    PALM_SPEED_CAP m/s or the timeline leaves no room to move at all.
    """
    dt = config.dt
    f_i = int(round(config.intercept_time / dt))
    f_a = f_i - int(round(config.lead_time / dt))
    if f_i > config.frames - 1:
        raise InfeasiblePlanError(
            f"intercept frame {f_i} beyond episode end {config.frames - 1}"
        )

    point = config.motion.position_at(f_i * dt)
    span = point - config.hand_start
    distance = span.norm()

    if distance <= 1e-12:
        # already there; wait-only plan
        return InterceptPlan(f_i, config.observe_frames, point, Vec3(0.0, 0.0, 0.0), 0, 0.0)

    move_frames = f_a - config.observe_frames
    if move_frames < 1:
        raise InfeasiblePlanError(
            f"arrive frame {f_a} leaves no move frames after observation"
        )
    speed = distance / (move_frames * dt)
    if speed > PALM_SPEED_CAP:
        raise InfeasiblePlanError(
            f"required palm speed {speed:.3f} m/s exceeds cap {PALM_SPEED_CAP}"
        )
    step = span.scale(1.0 / move_frames)
    return InterceptPlan(f_i, f_a, point, step, move_frames, speed)


class OracleController:
    """Privileged state machine producing ground-truth rollouts."""

    def __init__(self) -> None:
        self.phase = "observe"
        self.config: EpisodeConfig | None = None
        self.plan: InterceptPlan | None = None
        self._attached = False
        self._closing_done = False

    def begin(self, config: EpisodeConfig) -> None:
        self.config = config
        self.plan = plan_intercept(config)
        self.phase = "observe"
        self._attached = False
        self._closing_done = False

    # -- mirrors of engine rules ------------------------------------------

    def _object_position(self, obs: Observation) -> Vec3:
        cfg = self.config
        if self._attached:
            return grasp_anchor_world(cfg.hand, obs.palm)
        return cfg.motion.position_at(obs.frame * cfg.dt)

    def _update_attachment(self, obs: Observation) -> None:
        cfg = self.config
        if self._attached or obs.frame <= cfg.observe_frames:
            return
        target = cfg.motion.position_at(obs.frame * cfg.dt)
        if dist(obs.palm, target) <= cfg.loc_threshold:
            self._attached = True

    # -- policy ------------------------------------------------------------

    def act(self, obs: Observation) -> Action:
        if self.config is None:
            raise RuntimeError("begin() must run before act()")
        cfg = self.config
        plan = self.plan
        self._update_attachment(obs)

        if obs.frame < cfg.observe_frames:
            self.phase = "observe"
            return Action.zero()

        if obs.frame < plan.arrive_frame:
            self.phase = "move"
            return Action(plan.step, (0.0,) * JOINT_COUNT)

        obj_pos = self._object_position(obs)
        close_now = self._attached or planar_dist(obs.palm, obj_pos) <= WAIT_PLANAR_THRESHOLD
        if not close_now:
            self.phase = "wait"
            return Action.zero()

        if not self._closing_done:
            shape = cfg.obj.at(obj_pos)
            state = HandState(obs.palm, obs.joints)
            at_limit = all(q >= JOINT_LIMIT - 1e-9 for q in obs.joints)
            if all(contact_test(cfg.hand, state, shape)) or at_limit:
                self._closing_done = True
            else:
                self.phase = "close"
                step = min(CLOSE_RATE * cfg.dt, cfg.gras_cap)
                return Action(Vec3(0.0, 0.0, 0.0), (step,) * JOINT_COUNT)

        self.phase = "hold"
        return Action.zero()


def run_gt_episode(config: EpisodeConfig) -> EpisodeRecord:
    """Roll the oracle through one episode and return its record."""
    return run_rollout(config, OracleController())
