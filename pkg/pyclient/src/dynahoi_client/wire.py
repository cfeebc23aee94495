"""Client-side codec for the evaluation wire protocol.

Deliberately a sibling of the server's codec rather than an import: this
package talks to the server over bytes only, so the framing rules are
re-implemented here from the documented format (docs/protocol.md in the
gym repository) and the same golden frames are pinned in the client
tests.  If the two codecs ever drift, the goldens catch it.

Framing: ASCII decimal byte count, one LF, then that many bytes of
canonical UTF-8 JSON (sorted keys, compact separators, no NaN or
Infinity).
"""

from __future__ import annotations

import json
import math
from typing import IO, Optional, Sequence, Tuple

STATE_DIM = 18
MAX_FRAME_BYTES = 16 * 1024 * 1024


class ClientError(Exception):
    """Anything that ends an episode early.

    ``code`` carries the server's error code when the server said no,
    one of the schema codes when the client refused to send a malformed
    message, or "transport" when the socket itself died.
    """

    def __init__(self, code: str, detail: str) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def _fail(code: str, detail: str) -> None:
    raise ClientError(code, detail)


def canonical_json(payload: dict) -> bytes:
    try:
        return json.dumps(
            payload, sort_keys=True, separators=(",", ":"), allow_nan=False
        ).encode("utf-8")
    except ValueError as exc:
        raise ClientError("non_finite", str(exc))


def frame(payload: dict) -> bytes:
    body = canonical_json(payload)
    return str(len(body)).encode("ascii") + b"\n" + body


# ---------------------------------------------------------------------------
# Outgoing messages


def encode_start_episode(episode_id: int, task_type: str, length: int, horizon: int) -> bytes:
    return frame(
        {
            "type": "start_episode",
            "episode_id": episode_id,
            "task_type": task_type,
            "length": length,
            "horizon": horizon,
        }
    )


def validate_chunk(rows: Sequence[Sequence[float]], horizon: int) -> Tuple[Tuple[float, ...], ...]:
    """Enforce the chunk invariants locally, before anything hits the wire."""
    if len(rows) < 1:
        _fail("bad_schema", "action chunk must have at least one row")
    if len(rows) > horizon:
        _fail("bad_schema", f"chunk of {len(rows)} rows exceeds horizon {horizon}")
    out = []
    for i, row in enumerate(rows):
        vals = tuple(float(v) for v in row)
        if len(vals) != STATE_DIM:
            _fail("bad_schema", f"actions[{i}] must have {STATE_DIM} entries, got {len(vals)}")
        for j, v in enumerate(vals):
            if not math.isfinite(v):
                _fail("non_finite", f"actions[{i}][{j}] is not finite")
        out.append(vals)
    return tuple(out)


def encode_action_chunk(rows: Sequence[Sequence[float]], horizon: int) -> bytes:
    checked = validate_chunk(rows, horizon)
    return frame({"type": "action_data", "actions": [list(row) for row in checked]})


def encode_skill_program(program: dict) -> bytes:
    if not isinstance(program, dict):
        _fail("bad_skill_program", "skill program must be a JSON object")
    return frame({"type": "action_data", "skill_program": program})


# ---------------------------------------------------------------------------
# Incoming messages


def _reject_constant(name: str):
    raise ClientError("non_finite", f"non-finite constant {name!r} on the wire")


def read_frame_bytes(stream: IO[bytes]) -> Optional[bytes]:
    """One framed body off the stream; None on a clean EOF."""
    prefix = b""
    while True:
        ch = stream.read(1)
        if ch == b"":
            if prefix:
                _fail("bad_frame", "stream ended inside a length prefix")
            return None
        if ch == b"\n":
            break
        if not ch.isdigit():
            _fail("bad_frame", f"length prefix contains {ch!r}")
        prefix += ch
        if len(prefix) > 8:
            _fail("bad_frame", "length prefix too long")
    if not prefix:
        _fail("bad_frame", "empty length prefix")
    n = int(prefix)
    if n > MAX_FRAME_BYTES:
        _fail("bad_frame", f"frame of {n} bytes exceeds the cap")
    body = stream.read(n)
    if len(body) != n:
        _fail("bad_frame", f"frame truncated at {len(body)}/{n} bytes")
    return body


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail("bad_schema", f"{where} must be a number")
    if not math.isfinite(value):
        _fail("non_finite", f"{where} is not finite")
    return float(value)


def read_server_message(stream: IO[bytes]) -> Optional[dict]:
    """Next server payload, validated as far as this client consumes it.

    Returns the parsed payload dict (``type`` one of image_and_state /
    metrics / error), or None on clean EOF.
    """
    body = read_frame_bytes(stream)
    if body is None:
        return None
    try:
        payload = json.loads(body.decode("utf-8"), parse_constant=_reject_constant)
    except ClientError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        _fail("bad_json", str(exc))
    if not isinstance(payload, dict) or not isinstance(payload.get("type"), str):
        _fail("bad_schema", "message must be an object with a type tag")
    tag = payload["type"]
    if tag == "image_and_state":
        if not isinstance(payload.get("frame"), int) or payload["frame"] < 0:
            _fail("bad_schema", "frame must be a non-negative integer")
        state = payload.get("state")
        if not isinstance(state, list) or len(state) != STATE_DIM:
            _fail("bad_schema", f"state must have {STATE_DIM} entries")
        for i, v in enumerate(state):
            _number(v, f"state[{i}]")
        obs = payload.get("observation")
        if not isinstance(obs, dict) or not isinstance(obs.get("camera"), dict):
            _fail("bad_schema", "observation.camera must be an object")
        cam = obs["camera"]
        for key in ("u", "v", "depth"):
            _number(cam.get(key), f"observation.camera.{key}")
        if not isinstance(cam.get("visible"), bool):
            _fail("bad_schema", "observation.camera.visible must be a bool")
        _number(obs.get("time"), "observation.time")
        return payload
    if tag == "metrics":
        if not isinstance(payload.get("report"), dict):
            _fail("bad_schema", "metrics report must be an object")
        return payload
    if tag == "error":
        if not isinstance(payload.get("code"), str) or not isinstance(payload.get("detail"), str):
            _fail("bad_schema", "error needs string code and detail")
        return payload
    _fail("unknown_type", f"unexpected server message {tag!r}")
