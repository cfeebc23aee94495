"""Message codec for the evaluation loop.

Framing: a decimal byte count, one newline, then exactly that many bytes
of UTF-8 JSON.  The JSON is canonical (sorted keys, compact separators,
no NaN/Infinity), so encoding is a bijection on message values and
``encode(decode(b)) == b`` holds for every canonically framed input.

Message types, tagged by a ``type`` field:

``start_episode``     episode_id, task_type, length (episode frames N),
                      horizon (action chunk size T)
``image_and_state``   frame index, ``state``: 18 reals (3 palm + 15
                      joints), ``image``: always null (reserved; this
                      build has no renderer), ``observation``: structured
                      camera sample, timestamp and instruction text
``action_data``       either ``actions`` (1..T rows of 18 reals) or a
                      ``skill_program`` object, never both
``metrics``           terminal report for the episode
``error``             machine-readable code plus human detail

Every validation failure raises WireProtocolError carrying one of the
E_* codes; the decoder never throws anything else, no matter the input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, List, Optional, Sequence, Tuple, Union

STATE_DIM = 18
MAX_FRAME_BYTES = 16 * 1024 * 1024  # sanity cap on a single message

E_FRAME = "bad_frame"
E_SYNTAX = "bad_json"
E_SCHEMA = "bad_schema"
E_UNKNOWN = "unknown_type"
E_NONFINITE = "non_finite"
E_ORDER = "out_of_order"
E_DEADLINE = "deadline"
E_SKILL = "bad_skill_program"
E_EPISODE = "bad_episode"
E_INTERNAL = "internal"


class WireProtocolError(Exception):
    def __init__(self, code: str, detail: str) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def _require(cond: bool, detail: str, code: str = E_SCHEMA) -> None:
    if not cond:
        raise WireProtocolError(code, detail)


def _number(value, where: str) -> float:
    # bool is an int subclass; it is not a number on this wire
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{where} must be a number")
    value = float(value)
    _require(math.isfinite(value), f"{where} is not finite", E_NONFINITE)
    return value


def _integer(value, where: str, minimum: int) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), f"{where} must be an integer")
    _require(value >= minimum, f"{where} must be >= {minimum}")
    return value


def _string(value, where: str) -> str:
    _require(isinstance(value, str), f"{where} must be a string")
    return value


def _vector(value, where: str, arity: int) -> Tuple[float, ...]:
    _require(isinstance(value, list), f"{where} must be a list")
    _require(len(value) == arity, f"{where} must have {arity} entries, got {len(value)}")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


# ---------------------------------------------------------------------------
# Message types


@dataclass(frozen=True)
class StartEpisode:
    episode_id: int
    task_type: str
    length: int
    horizon: int

    def to_payload(self) -> dict:
        return {
            "type": "start_episode",
            "episode_id": self.episode_id,
            "task_type": self.task_type,
            "length": self.length,
            "horizon": self.horizon,
        }

    @staticmethod
    def from_payload(p: dict) -> "StartEpisode":
        return StartEpisode(
            episode_id=_integer(p.get("episode_id"), "episode_id", 0),
            task_type=_string(p.get("task_type"), "task_type"),
            length=_integer(p.get("length"), "length", 2),
            horizon=_integer(p.get("horizon"), "horizon", 1),
        )


@dataclass(frozen=True)
class ImageAndState:
    frame: int
    state: Tuple[float, ...]  # 3 palm + 15 joints
    observation: dict
    image: None = None

    def to_payload(self) -> dict:
        return {
            "type": "image_and_state",
            "frame": self.frame,
            "image": None,
            "state": list(self.state),
            "observation": self.observation,
        }

    @staticmethod
    def from_payload(p: dict) -> "ImageAndState":
        _require(p.get("image", None) is None, "image slot is reserved and must be null")
        frame = _integer(p.get("frame"), "frame", 0)
        state = _vector(p.get("state"), "state", STATE_DIM)
        obs = p.get("observation")
        _require(isinstance(obs, dict), "observation must be an object")
        cam = obs.get("camera")
        _require(isinstance(cam, dict), "observation.camera must be an object")
        for key in ("u", "v", "depth"):
            _number(cam.get(key), f"observation.camera.{key}")
        _require(isinstance(cam.get("visible"), bool), "observation.camera.visible must be a bool")
        _number(obs.get("time"), "observation.time")
        _string(obs.get("instruction", ""), "observation.instruction")
        return ImageAndState(frame=frame, state=state, observation=obs)


@dataclass(frozen=True)
class ActionData:
    actions: Optional[Tuple[Tuple[float, ...], ...]] = None
    skill_program: Optional[dict] = None

    def __post_init__(self) -> None:
        if (self.actions is None) == (self.skill_program is None):
            raise WireProtocolError(E_SCHEMA, "action_data needs exactly one of actions / skill_program")

    def to_payload(self) -> dict:
        if self.actions is not None:
            return {"type": "action_data", "actions": [list(row) for row in self.actions]}
        return {"type": "action_data", "skill_program": self.skill_program}

    @staticmethod
    def from_payload(p: dict) -> "ActionData":
        has_actions = "actions" in p
        has_program = "skill_program" in p
        _require(has_actions != has_program, "action_data needs exactly one of actions / skill_program")
        if has_actions:
            rows = p["actions"]
            _require(isinstance(rows, list), "actions must be a list")
            _require(len(rows) >= 1, "action chunk must have at least one row")
            return ActionData(
                actions=tuple(_vector(row, f"actions[{i}]", STATE_DIM) for i, row in enumerate(rows))
            )
        _require(isinstance(p["skill_program"], dict), "skill_program must be an object")
        return ActionData(skill_program=p["skill_program"])


@dataclass(frozen=True)
class Metrics:
    report: dict

    def to_payload(self) -> dict:
        return {"type": "metrics", "report": self.report}

    @staticmethod
    def from_payload(p: dict) -> "Metrics":
        _require(isinstance(p.get("report"), dict), "report must be an object")
        return Metrics(report=p["report"])


@dataclass(frozen=True)
class WireError:
    code: str
    detail: str

    def to_payload(self) -> dict:
        return {"type": "error", "code": self.code, "detail": self.detail}

    @staticmethod
    def from_payload(p: dict) -> "WireError":
        return WireError(code=_string(p.get("code"), "code"), detail=_string(p.get("detail"), "detail"))


WireMessage = Union[StartEpisode, ImageAndState, ActionData, Metrics, WireError]

_TYPES = {
    "start_episode": StartEpisode,
    "image_and_state": ImageAndState,
    "action_data": ActionData,
    "metrics": Metrics,
    "error": WireError,
}


# ---------------------------------------------------------------------------
# Encoding / decoding


def _reject_constant(name: str):
    raise WireProtocolError(E_NONFINITE, f"non-finite constant {name!r} on the wire")


def canonical_json(payload: dict) -> bytes:
    try:
        return json.dumps(
            payload, sort_keys=True, separators=(",", ":"), allow_nan=False
        ).encode("utf-8")
    except ValueError as exc:
        raise WireProtocolError(E_NONFINITE, str(exc))


def encode(msg: WireMessage) -> bytes:
    body = canonical_json(msg.to_payload())
    return str(len(body)).encode("ascii") + b"\n" + body


def decode_payload(payload) -> WireMessage:
    _require(isinstance(payload, dict), "message must be a JSON object")
    tag = payload.get("type")
    _require(isinstance(tag, str), "missing message type")
    cls = _TYPES.get(tag)
    if cls is None:
        raise WireProtocolError(E_UNKNOWN, f"unknown message type {tag!r}")
    return cls.from_payload(payload)


def _parse_body(body: bytes) -> WireMessage:
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireProtocolError(E_SYNTAX, f"invalid UTF-8: {exc}")
    try:
        payload = json.loads(text, parse_constant=_reject_constant)
    except WireProtocolError:
        raise
    except json.JSONDecodeError as exc:
        raise WireProtocolError(E_SYNTAX, f"invalid JSON at position {exc.pos}")
    return decode_payload(payload)


def decode(data: bytes) -> WireMessage:
    """Decode one complete frame (prefix, newline, body, nothing after)."""
    _require(isinstance(data, (bytes, bytearray)), "frame must be bytes", E_FRAME)
    head, sep, body = bytes(data).partition(b"\n")
    _require(sep == b"\n", "missing length prefix terminator", E_FRAME)
    _require(head.isdigit(), "length prefix must be decimal digits", E_FRAME)
    length = int(head)
    _require(length <= MAX_FRAME_BYTES, "frame length over cap", E_FRAME)
    _require(len(body) == length, f"body is {len(body)} bytes, prefix says {length}", E_FRAME)
    return _parse_body(body)


# ---------------------------------------------------------------------------
# Stream I/O


def write_message(stream: IO[bytes], msg: WireMessage) -> None:
    stream.write(encode(msg))
    stream.flush()


def _read_exact(stream: IO[bytes], n: int) -> bytes:
    chunks = []
    left = n
    while left > 0:
        chunk = stream.read(left)
        if not chunk:
            raise WireProtocolError(E_FRAME, "stream closed mid-frame")
        chunks.append(chunk)
        left -= len(chunk)
    return b"".join(chunks)


def read_message(stream: IO[bytes]) -> Optional[WireMessage]:
    """Read one framed message; None on clean EOF before a frame starts."""
    head = b""
    while True:
        ch = stream.read(1)
        if not ch:
            if head:
                raise WireProtocolError(E_FRAME, "stream closed inside length prefix")
            return None
        if ch == b"\n":
            break
        head += ch
        if len(head) > 8:  # 16 MiB cap fits in 8 digits
            raise WireProtocolError(E_FRAME, "length prefix too long")
    if not head.isdigit():
        raise WireProtocolError(E_FRAME, "length prefix must be decimal digits")
    length = int(head)
    if length > MAX_FRAME_BYTES:
        raise WireProtocolError(E_FRAME, "frame length over cap")
    return _parse_body(_read_exact(stream, length))


def actions_payload(rows: Sequence[Sequence[float]]) -> ActionData:
    return ActionData(actions=tuple(tuple(float(v) for v in row) for row in rows))


def state_vector(palm, joints) -> List[float]:
    return [palm[0], palm[1], palm[2], *joints]
