"""Threaded evaluation server speaking the wire protocol.

Session shape, one episode per connection::

    client                          server
    start_episode{id, task, N, T}
                                    image_and_state frame 0
    action_data (1..T rows)
                                    ... engine steps, truncated at the
                                        episode boundary ...
                                    image_and_state frame k
    action_data ...
                                    metrics{report}

The server derives the episode deterministically from (task_type,
episode_id): the id seeds the catalog draw, the declared length N
overrides the frame count.  The expert reference needed for grasp
scoring is rolled out internally before the session starts; nothing of
the motion model ever crosses the wire beyond the camera samples.

Skill-program chunks are expanded server-side against the current hand
state only.  Sessions are fully isolated: each owns its engine, its
failures close only its own connection, and a per-read deadline aborts
stalled clients with a terminal error message.
"""

from __future__ import annotations

import socket
import threading
from typing import Optional, Tuple

from ..catalog import CatalogError, build_episode
from ..engine import DEFAULT_CAMERA, Action, Camera, Engine
from ..metrics import evaluate_record
from ..oracle import run_gt_episode
from .skills import SkillProgramError, expand_skill_program, validate_skill_program
from .wire import (
    E_DEADLINE,
    E_EPISODE,
    E_ORDER,
    E_SCHEMA,
    E_SKILL,
    ActionData,
    ImageAndState,
    Metrics,
    StartEpisode,
    WireError,
    WireProtocolError,
    read_message,
    write_message,
)
from .ws import WebSocketError, maybe_wrap_websocket

DEFAULT_DEADLINE = 30.0


def observation_payload(obs) -> dict:
    cam = obs.camera
    return {
        "time": obs.time,
        "camera": {"u": cam.u, "v": cam.v, "depth": cam.depth, "visible": cam.visible},
        "instruction": obs.instruction,
    }


def obs_message(obs) -> ImageAndState:
    state = (obs.palm.x, obs.palm.y, obs.palm.z, *obs.joints)
    return ImageAndState(frame=obs.frame, state=state, observation=observation_payload(obs))


class EvalServer:
    """Accepts connections and runs one evaluation session per client."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        deadline: float = DEFAULT_DEADLINE,
        threshold: Optional[float] = None,
        camera: Camera = DEFAULT_CAMERA,
        catalog=None,
    ) -> None:
        self.host = host
        self.port = port
        self.deadline = deadline
        self.threshold = threshold
        self.camera = camera
        self.catalog = catalog
        self._listener: Optional[socket.socket] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._stopping = threading.Event()

    # -- lifecycle ---------------------------------------------------------

    @property
    def address(self) -> Tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("server is not started")
        return self._listener.getsockname()[:2]

    def start(self) -> Tuple[str, int]:
        listener = socket.create_server((self.host, self.port))
        listener.settimeout(0.2)
        self._listener = listener
        self._stopping.clear()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self.address

    def stop(self) -> None:
        self._stopping.set()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5.0)
            self._accept_thread = None
        if self._listener is not None:
            self._listener.close()
            self._listener = None

    def serve_forever(self) -> None:
        """Blocking variant for the command line; Ctrl-C stops it."""
        self.start()
        try:
            while not self._stopping.is_set():
                self._stopping.wait(0.5)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def __enter__(self) -> "EvalServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- connection handling ----------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._session, args=(conn,), daemon=True).start()

    def _session(self, conn: socket.socket) -> None:
        conn.settimeout(self.deadline)
        stream = None
        try:
            stream = maybe_wrap_websocket(conn)
            self._run_session(stream)
        except socket.timeout:
            self._try_send(stream, WireError(E_DEADLINE, "client exceeded the session deadline"))
        except WireProtocolError as exc:
            self._try_send(stream, WireError(exc.code, exc.detail))
        except SkillProgramError as exc:
            self._try_send(stream, WireError(E_SKILL, str(exc)))
        except (ConnectionError, OSError, ValueError, WebSocketError):
            pass  # transport died; nothing sensible to send
        finally:
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
            try:
                conn.close()
            except OSError:
                pass

    @staticmethod
    def _try_send(stream, msg: WireError) -> None:
        if stream is None:
            return
        try:
            write_message(stream, msg)
        except (WireProtocolError, ConnectionError, OSError, ValueError):
            pass

    # -- session core ------------------------------------------------------

    def _run_session(self, stream) -> None:
        first = read_message(stream)
        if first is None:
            return
        if not isinstance(first, StartEpisode):
            raise WireProtocolError(E_ORDER, "session must open with start_episode")

        try:
            config = build_episode(
                first.task_type,
                first.episode_id,
                frames=first.length,
                episode_id=first.episode_id,
                catalog=self.catalog,
            )
        except (CatalogError, KeyError) as exc:
            raise WireProtocolError(E_EPISODE, f"cannot derive episode: {exc}")

        gt_record = run_gt_episode(config)  # grasp reference, never sent
        engine = Engine(config, self.camera)
        horizon = first.horizon

        while not engine.done_stepping:
            write_message(stream, obs_message(engine.observation()))
            reply = read_message(stream)
            if reply is None:
                return  # client hung up mid-episode; nothing to score
            if not isinstance(reply, ActionData):
                raise WireProtocolError(E_ORDER, "expected action_data")
            rows = self._chunk_rows(reply, engine, horizon)
            remaining = config.frames - 1 - engine.frame
            for row in rows[:remaining]:  # truncate at the episode boundary
                engine.step(Action.from_vector(list(row)))

        report = evaluate_record(engine.record, gt_record=gt_record, threshold=self.threshold)
        write_message(stream, Metrics(report.to_dict()))

    def _chunk_rows(self, reply: ActionData, engine: Engine, horizon: int):
        if reply.actions is not None:
            if len(reply.actions) > horizon:
                raise WireProtocolError(
                    E_SCHEMA, f"chunk of {len(reply.actions)} rows exceeds horizon {horizon}"
                )
            return reply.actions
        program = validate_skill_program(reply.skill_program, horizon)
        obs = engine.observation()
        state = [obs.palm.x, obs.palm.y, obs.palm.z, *obs.joints]
        return [tuple(a.to_vector()) for a in expand_skill_program(program, state)]
