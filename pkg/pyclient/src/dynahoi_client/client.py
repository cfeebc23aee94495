"""Closed-loop episode driver.

One blocking connection per episode: connect, announce the episode,
answer every observation with whatever the policy returns, hand back the
terminal report.  A policy is any callable

    policy(observation, state) -> chunk

where ``observation`` is the wire observation mapping with the frame
index added under ``"frame"``, and ``state`` is the 18-tuple (palm x, y,
z, then 15 joint angles).  The chunk may be

- a sequence of action rows (each 18 deltas, at most ``horizon`` rows),
- a dict: a skill program object, sent as-is, or
- a str: skill program JSON text, parsed here so emitter bugs surface
  client-side with a useful message instead of a server rejection.

Parallel evaluation is the caller's business: run several processes.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from .wire import (
    ClientError,
    encode_action_chunk,
    encode_skill_program,
    encode_start_episode,
    read_server_message,
)

Policy = Callable[[dict, Tuple[float, ...]], object]

DEFAULT_HORIZON = 10


@dataclass
class PolicyClient:
    host: str
    port: int
    horizon: int = DEFAULT_HORIZON
    timeout: float = 30.0

    @staticmethod
    def from_address(address: str, horizon: int = DEFAULT_HORIZON, timeout: float = 30.0) -> "PolicyClient":
        host, _, port_text = address.rpartition(":")
        if not host or not port_text.isdigit():
            raise ClientError("bad_address", f"expected host:port, got {address!r}")
        return PolicyClient(host, int(port_text), horizon=horizon, timeout=timeout)


def _chunk_bytes(result, horizon: int) -> bytes:
    if isinstance(result, str):
        try:
            program = json.loads(result)
        except json.JSONDecodeError as exc:
            raise ClientError("bad_skill_program", f"emitter produced invalid JSON: {exc}")
        return encode_skill_program(program)
    if isinstance(result, dict):
        return encode_skill_program(result)
    return encode_action_chunk(result, horizon)


def run_episode(
    client: PolicyClient,
    task_type: str,
    episode_id: int,
    length: int,
    policy: Policy,
) -> dict:
    """Drive one full episode; returns the terminal metrics report.

    Raises ClientError carrying the server's error code if the server
    rejects anything, or "transport" if the connection dies mid-episode.
    """
    reset = getattr(policy, "reset", None)
    if reset is not None:
        reset()
    try:
        sock = socket.create_connection((client.host, client.port), timeout=client.timeout)
    except OSError as exc:
        raise ClientError("transport", f"connect to {client.host}:{client.port} failed: {exc}")
    with sock:
        stream = sock.makefile("rwb")
        try:
            stream.write(encode_start_episode(episode_id, task_type, length, client.horizon))
            stream.flush()
            while True:
                payload = read_server_message(stream)
                if payload is None:
                    raise ClientError("transport", "server closed without a terminal message")
                if payload["type"] == "metrics":
                    return payload["report"]
                if payload["type"] == "error":
                    raise ClientError(payload["code"], payload["detail"])
                observation = dict(payload["observation"])
                observation["frame"] = payload["frame"]
                state = tuple(float(v) for v in payload["state"])
                stream.write(_chunk_bytes(policy(observation, state), client.horizon))
                stream.flush()
        except OSError as exc:
            raise ClientError("transport", str(exc))
        finally:
            stream.close()
