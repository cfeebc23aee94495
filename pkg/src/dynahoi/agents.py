"""Non-privileged scripted baselines.

Unlike the oracle, none of these controllers may read the motion
generator.  They sense the target exclusively through the camera stream
in the observation (unprojecting u, v, depth against the current palm),
which is the same interface a remote policy gets over the wire.  That
keeps their scores honest reference rows: whatever separates them from
the oracle is exactly the value of knowing the future.

Three baselines, in increasing order of effort:

``zero``
    Never acts.  Localizes only if the target happens to cross the
    attach shell around the resting palm.

``chaser``
    Pure pursuit of the target's *current* position at the palm speed
    cap.  No anticipation; it trails anything faster than the cap and
    hits slow targets from behind.

``extrapolator``
    Fits a constant-velocity line to the observe-window camera track
    (least squares per axis), commits to the earliest point of that
    line reachable under the speed cap, and flies there in equal
    steps.  Exact for straight-line targets; systematically wrong for
    anything that curves.

All three close the fingers blindly at the oracle's close rate once the
observed center distance drops under the attach radius.  They cannot run
a contact test (that needs the object pose), so they squeeze to the
joint limit and hold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .engine import DEFAULT_CAMERA, Action, Camera, EpisodeConfig, Observation
from .geometry import Vec3, dist
from .kinematics import JOINT_COUNT, JOINT_LIMIT
from .oracle import CLOSE_RATE

REACH_SLACK = 1e-9  # m, forgives float rounding in the reachability test


def _capped(step: Vec3, cap: float) -> Vec3:
    n = step.norm()
    if n > cap:
        return step.scale(cap / n)
    return step


class ScriptedAgent:
    """Shared sensing plumbing: camera unprojection and the capture latch."""

    name = "scripted"

    def __init__(self, camera: Camera = DEFAULT_CAMERA) -> None:
        self.camera = camera
        self.phase = "observe"
        self.config: Optional[EpisodeConfig] = None
        self._captured = False
        self._last_seen: Optional[Vec3] = None

    def begin(self, config: EpisodeConfig) -> None:
        self.config = config
        self.phase = "observe"
        self._captured = False
        self._last_seen = None

    def _sense(self, obs: Observation) -> Optional[Vec3]:
        """Current world-frame target estimate, or None before first sight."""
        if obs.camera.visible:
            self._last_seen = self.camera.unproject(
                obs.palm, obs.camera.u, obs.camera.v, obs.camera.depth
            )
        return self._last_seen

    def _update_capture(self, obs: Observation, estimate: Optional[Vec3]) -> None:
        # The observed (palm, target) pair at frame t is exactly the pair the
        # engine ran its attach test on when stepping into t, so seeing the
        # distance under the threshold after the observe window means the
        # object is already riding the palm anchor.
        if self._captured or estimate is None:
            return
        cfg = self.config
        if obs.frame > cfg.observe_frames and dist(obs.palm, estimate) <= cfg.loc_threshold:
            self._captured = True

    def _close_action(self, obs: Observation) -> Action:
        if all(q >= JOINT_LIMIT - 1e-9 for q in obs.joints):
            self.phase = "hold"
            return Action.zero()
        self.phase = "close"
        step = min(CLOSE_RATE * self.config.dt, self.config.gras_cap)
        return Action(Vec3(0.0, 0.0, 0.0), (step,) * JOINT_COUNT)

    def act(self, obs: Observation) -> Action:  # pragma: no cover - interface
        raise NotImplementedError


class ZeroAgent(ScriptedAgent):
    """Lower bound: emits the zero action every frame."""

    name = "zero"

    def act(self, obs: Observation) -> Action:
        self.phase = "observe" if obs.frame < self.config.observe_frames else "hold"
        return Action.zero()


class ChaserAgent(ScriptedAgent):
    """Pursues the last seen target position at the palm speed cap."""

    name = "chaser"

    def act(self, obs: Observation) -> Action:
        cfg = self.config
        estimate = self._sense(obs)
        self._update_capture(obs, estimate)

        if obs.frame < cfg.observe_frames:
            self.phase = "observe"
            return Action.zero()
        if self._captured:
            return self._close_action(obs)
        if estimate is None:
            self.phase = "wait"
            return Action.zero()
        self.phase = "move"
        return Action(_capped(estimate - obs.palm, cfg.loc_cap), (0.0,) * JOINT_COUNT)


@dataclass(frozen=True)
class _LinePlan:
    arrive_frame: int
    step: Vec3


@dataclass(frozen=True)
class _LineFit:
    p0: Vec3
    v: Vec3

    def at(self, t: float) -> Vec3:
        return self.p0 + self.v.scale(t)


def fit_constant_velocity(samples: List[Tuple[float, Vec3]]) -> _LineFit:
    """Per-axis least-squares line through (t, position) samples.

    With fewer than two samples there is no slope to estimate; callers
    are expected to guard.  Exact (up to float rounding) when the
    samples really are collinear in time.
    """
    n = len(samples)
    t_mean = sum(t for t, _ in samples) / n
    p_mean = Vec3(
        sum(p.x for _, p in samples) / n,
        sum(p.y for _, p in samples) / n,
        sum(p.z for _, p in samples) / n,
    )
    var = sum((t - t_mean) ** 2 for t, _ in samples)
    cov = Vec3(0.0, 0.0, 0.0)
    for t, p in samples:
        cov = cov + (p - p_mean).scale(t - t_mean)
    v = cov.scale(1.0 / var)
    return _LineFit(p_mean - v.scale(t_mean), v)


class ExtrapolatorAgent(ScriptedAgent):
    """Constant-velocity interceptor committed to the earliest reachable point."""

    name = "extrapolator"

    def begin(self, config: EpisodeConfig) -> None:
        super().begin(config)
        self._samples: List[Tuple[float, Vec3]] = []
        self._fit: Optional[_LineFit] = None
        self._plan: Optional[_LinePlan] = None
        self._planned = False

    def _make_plan(self, obs: Observation) -> None:
        self._planned = True
        if len(self._samples) < 2:
            return  # blind window; degrade to pursuit of whatever shows up
        self._fit = fit_constant_velocity(self._samples)
        cfg = self.config
        for f in range(obs.frame + 1, cfg.frames):
            slots = f - obs.frame
            target = self._fit.at(f * cfg.dt)
            need = dist(obs.palm, target)
            if need <= slots * cfg.loc_cap + REACH_SLACK:
                self._plan = _LinePlan(f, (target - obs.palm).scale(1.0 / slots))
                return
        # Nothing reachable inside the episode: fall through to tracking.

    def act(self, obs: Observation) -> Action:
        cfg = self.config
        estimate = self._sense(obs)
        self._update_capture(obs, estimate)

        if obs.frame < cfg.observe_frames:
            self.phase = "observe"
            if estimate is not None:
                self._samples.append((obs.time, estimate))
            return Action.zero()
        if self._captured:
            return self._close_action(obs)
        if not self._planned:
            self._make_plan(obs)

        if self._plan is not None and obs.frame < self._plan.arrive_frame:
            self.phase = "move"
            return Action(self._plan.step, (0.0,) * JOINT_COUNT)
        if self._fit is not None:
            # Past the commit point without a capture: keep riding the
            # predicted line so a late crossing still counts.
            self.phase = "track"
            ahead = self._fit.at((obs.frame + 1) * cfg.dt)
            return Action(_capped(ahead - obs.palm, cfg.loc_cap), (0.0,) * JOINT_COUNT)
        if estimate is not None:
            self.phase = "move"
            return Action(_capped(estimate - obs.palm, cfg.loc_cap), (0.0,) * JOINT_COUNT)
        self.phase = "wait"
        return Action.zero()


AGENTS: Dict[str, type] = {
    ZeroAgent.name: ZeroAgent,
    ChaserAgent.name: ChaserAgent,
    ExtrapolatorAgent.name: ExtrapolatorAgent,
}


def make_agent(name: str, camera: Camera = DEFAULT_CAMERA) -> ScriptedAgent:
    try:
        cls = AGENTS[name]
    except KeyError:
        raise ValueError(f"unknown agent {name!r}; choose from {sorted(AGENTS)}")
    return cls(camera)
