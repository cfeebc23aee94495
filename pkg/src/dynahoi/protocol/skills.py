"""Constrained skill-program response format: parser and executor.

The accepted shape is exactly the hybrid template: an ``action_sequence``
of parameterized skills whose durations sum to the horizon T, plus an
optional ``predicted_motion`` rollout of T frames of 18 hand parameters.
Parsing is strict: unknown skills, stray keys, non-summing durations or
gaps in ``frame_index`` all fail with a diagnostic naming the offending
path and constraint.  ``terminate_if`` has no defined grammar anywhere,
so it is accepted as an opaque string, carried through, and never
evaluated.

Execution is deliberately dumb: every skill needs explicit numeric
targets in its params, because any server-side prediction would leak the
motion model into the evaluated policy.  When ``predicted_motion`` is
present it wins outright and the skills only document intent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from ..engine import DT, GRAS_CAP, LOC_CAP, Action
from ..geometry import Vec3
from ..kinematics import JOINT_COUNT, JOINT_LIMIT

SKILL_NAMES = ("WAIT", "APPROACH", "INTERCEPT", "GRASP", "LIFT", "ADJUST")
STATE_DIM = 3 + JOINT_COUNT
_STEP_KEYS = {"skill", "params", "duration", "terminate_if"}
_FRAME_KEYS = {"frame_index", "hand_params"}
_TOP_KEYS = {"action_sequence", "predicted_motion"}


class SkillProgramError(Exception):
    """kind is "syntax" or "semantic"; where names the position or path."""

    def __init__(self, kind: str, where: str, detail: str) -> None:
        super().__init__(f"{kind} error at {where}: {detail}")
        self.kind = kind
        self.where = where
        self.detail = detail


def _semantic(where: str, detail: str) -> SkillProgramError:
    return SkillProgramError("semantic", where, detail)


@dataclass(frozen=True)
class SkillStep:
    skill: str
    duration: int
    params: dict = field(default_factory=dict)
    terminate_if: Optional[str] = None


@dataclass(frozen=True)
class SkillProgram:
    horizon: int
    steps: Tuple[SkillStep, ...]
    predicted_motion: Optional[Tuple[Tuple[float, ...], ...]] = None  # T rows of 18


# ---------------------------------------------------------------------------
# Parsing


def _check_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _semantic(where, "must be a number")
    if not math.isfinite(value):
        raise _semantic(where, "must be finite")
    return float(value)


def _check_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _semantic(where, "must be an integer")
    return value


def _parse_step(raw, where: str) -> SkillStep:
    if not isinstance(raw, dict):
        raise _semantic(where, "each step must be an object")
    extra = set(raw) - _STEP_KEYS
    if extra:
        raise _semantic(where, f"unexpected key {sorted(extra)[0]!r}")
    if "skill" not in raw:
        raise _semantic(where, "missing skill")
    skill = raw["skill"]
    if not isinstance(skill, str):
        raise _semantic(f"{where}.skill", "must be a string")
    if skill not in SKILL_NAMES:
        raise _semantic(f"{where}.skill", f"unknown skill {skill!r}")
    if "duration" not in raw:
        raise _semantic(where, "missing duration")
    duration = _check_int(raw["duration"], f"{where}.duration")
    if duration < 1:
        raise _semantic(f"{where}.duration", "must be >= 1")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise _semantic(f"{where}.params", "must be an object")
    terminate_if = raw.get("terminate_if")
    if terminate_if is not None and not isinstance(terminate_if, str):
        raise _semantic(f"{where}.terminate_if", "must be an opaque string")
    return SkillStep(skill=skill, duration=duration, params=params, terminate_if=terminate_if)


def _parse_motion(raw, horizon: int) -> Tuple[Tuple[float, ...], ...]:
    where = "predicted_motion"
    if not isinstance(raw, list):
        raise _semantic(where, "must be a list")
    if len(raw) != horizon:
        raise _semantic(where, f"must have exactly horizon={horizon} frames, got {len(raw)}")
    rows = []
    for i, entry in enumerate(raw):
        at = f"{where}[{i}]"
        if not isinstance(entry, dict):
            raise _semantic(at, "each frame must be an object")
        extra = set(entry) - _FRAME_KEYS
        if extra:
            raise _semantic(at, f"unexpected key {sorted(extra)[0]!r}")
        if "frame_index" not in entry:
            raise _semantic(at, "missing frame_index")
        idx = _check_int(entry["frame_index"], f"{at}.frame_index")
        if idx != i + 1:
            raise _semantic(
                f"{at}.frame_index", f"frames must run 1..{horizon} consecutively, got {idx}"
            )
        if "hand_params" not in entry:
            raise _semantic(at, "missing hand_params")
        hp = entry["hand_params"]
        if not isinstance(hp, list) or len(hp) != STATE_DIM:
            got = len(hp) if isinstance(hp, list) else type(hp).__name__
            raise _semantic(f"{at}.hand_params", f"must be {STATE_DIM} values, got {got}")
        rows.append(tuple(_check_number(v, f"{at}.hand_params[{k}]") for k, v in enumerate(hp)))
    return tuple(rows)


def validate_skill_program(obj, horizon: int) -> SkillProgram:
    """Validate an already-parsed JSON object against the template shape."""
    if not isinstance(obj, dict):
        raise _semantic("$", "program must be a JSON object")
    extra = set(obj) - _TOP_KEYS
    if extra:
        raise _semantic("$", f"unexpected key {sorted(extra)[0]!r}")
    if "action_sequence" not in obj:
        raise _semantic("$", "missing action_sequence")
    seq = obj["action_sequence"]
    if not isinstance(seq, list):
        raise _semantic("action_sequence", "must be a list")
    if not seq:
        raise _semantic("action_sequence", "must not be empty")
    steps = tuple(_parse_step(raw, f"action_sequence[{i}]") for i, raw in enumerate(seq))
    total = sum(s.duration for s in steps)
    if total != horizon:
        raise _semantic(
            "action_sequence", f"durations must sum to horizon (got {total}, horizon {horizon})"
        )
    motion = None
    if "predicted_motion" in obj and obj["predicted_motion"] is not None:
        motion = _parse_motion(obj["predicted_motion"], horizon)
    return SkillProgram(horizon=horizon, steps=steps, predicted_motion=motion)


def _reject_constant(name: str):
    raise _semantic("$", f"non-finite constant {name!r}")


def parse_skill_program(text: str, horizon: int) -> SkillProgram:
    """Strict parse of the JSON response text against the template."""
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except SkillProgramError:
        raise
    except json.JSONDecodeError as exc:
        raise SkillProgramError("syntax", f"offset {exc.pos}", exc.msg)
    return validate_skill_program(obj, horizon)


# ---------------------------------------------------------------------------
# Execution


def _param_vector(params: dict, key: str, arity: int, where: str) -> Tuple[float, ...]:
    if key not in params:
        raise _semantic(where, f"requires params.{key}")
    value = params[key]
    if not isinstance(value, (list, tuple)) or len(value) != arity:
        raise _semantic(f"{where}.params.{key}", f"must be {arity} numbers")
    return tuple(_check_number(v, f"{where}.params.{key}[{i}]") for i, v in enumerate(value))


def _param_number(params: dict, key: str, where: str) -> float:
    if key not in params:
        raise _semantic(where, f"requires params.{key}")
    return _check_number(params[key], f"{where}.params.{key}")


def _cap_palm(step: Vec3, cap: float) -> Vec3:
    n = step.norm()
    if n > cap:
        return step.scale(cap / n)
    return step


def _cap_joints(deltas: Sequence[float], cap: float) -> Tuple[float, ...]:
    return tuple(max(-cap, min(cap, d)) for d in deltas)


def expand_skill_program(
    prog: SkillProgram,
    state: Sequence[float],
    *,
    dt: float = DT,
    loc_cap: float = LOC_CAP,
    gras_cap: float = GRAS_CAP,
) -> List[Action]:
    """Turn a program into horizon per-frame deltas from the given state.

    A pure function of (program, state): no motion model, no engine
    internals.  With predicted_motion present, the raw differences of the
    given absolutes are emitted so a replay reconstructs them exactly;
    the engine still applies its own caps on execution.
    """
    if len(state) != STATE_DIM:
        raise _semantic("state", f"state vector must have {STATE_DIM} entries")
    palm = Vec3(float(state[0]), float(state[1]), float(state[2]))
    joints = tuple(float(q) for q in state[3:])

    if prog.predicted_motion is not None:
        actions = []
        prev = (palm.x, palm.y, palm.z, *joints)
        for row in prog.predicted_motion:
            actions.append(Action.from_vector([b - a for a, b in zip(prev, row)]))
            prev = row
        return actions

    actions: List[Action] = []
    for si, step in enumerate(prog.steps):
        where = f"action_sequence[{si}]"
        if step.skill == "WAIT":
            for _ in range(step.duration):
                actions.append(Action.zero())
        elif step.skill in ("APPROACH", "INTERCEPT"):
            target = Vec3(*_param_vector(step.params, "target_point", 3, where))
            speed = _param_number(step.params, "speed", where)
            for _ in range(step.duration):
                span = target - palm
                distance = span.norm()
                if distance <= 1e-12:
                    actions.append(Action.zero())
                    continue
                step_len = min(abs(speed) * dt, distance)
                d_palm = _cap_palm(span.scale(step_len / distance), loc_cap)
                actions.append(Action(d_palm, (0.0,) * JOINT_COUNT))
                palm = palm + d_palm
        elif step.skill == "GRASP":
            targets = _param_vector(step.params, "joint_targets", JOINT_COUNT, where)
            rates = tuple((t - q) / step.duration for t, q in zip(targets, joints))
            for _ in range(step.duration):
                d = _cap_joints(rates, gras_cap)
                actions.append(Action(Vec3(0.0, 0.0, 0.0), d))
                joints = tuple(
                    min(JOINT_LIMIT, max(0.0, q + dq)) for q, dq in zip(joints, d)
                )
        elif step.skill == "LIFT":
            speed = _param_number(step.params, "speed", where)
            d_palm = _cap_palm(Vec3(0.0, speed * dt, 0.0), loc_cap)
            for _ in range(step.duration):
                actions.append(Action(d_palm, (0.0,) * JOINT_COUNT))
                palm = palm + d_palm
        else:  # ADJUST
            if "d_palm" not in step.params and "d_joints" not in step.params:
                raise _semantic(where, "requires params.d_palm and/or params.d_joints")
            d_palm = Vec3(0.0, 0.0, 0.0)
            d_joints: Tuple[float, ...] = (0.0,) * JOINT_COUNT
            if "d_palm" in step.params:
                d_palm = _cap_palm(Vec3(*_param_vector(step.params, "d_palm", 3, where)), loc_cap)
            if "d_joints" in step.params:
                d_joints = _cap_joints(
                    _param_vector(step.params, "d_joints", JOINT_COUNT, where), gras_cap
                )
            for _ in range(step.duration):
                actions.append(Action(d_palm, d_joints))
                palm = palm + d_palm
                joints = tuple(
                    min(JOINT_LIMIT, max(0.0, q + dq)) for q, dq in zip(joints, d_joints)
                )
    return actions
