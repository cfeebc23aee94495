"""Wire codec, skill programs, and the evaluation server.

The loopback tests run a real server on an ephemeral port and drive it
with the oracle acting as a wire client.  The reference for exactness is
an in-process bridge: the same controller stepping the same engine
directly, so any divergence is introduced by serialization or session
handling, not by the policy.
"""

import io
import json
import math
import random
import socket
import struct
import threading

import pytest

from dynahoi.catalog import build_episode
from dynahoi.engine import Action, CameraObs, Engine, Observation
from dynahoi.geometry import Vec3
from dynahoi.metrics import evaluate_record
from dynahoi.oracle import OracleController, run_gt_episode
from dynahoi.protocol import EvalServer
from dynahoi.protocol.skills import (
    SkillProgramError,
    expand_skill_program,
    parse_skill_program,
    validate_skill_program,
)
from dynahoi.protocol.wire import (
    E_DEADLINE,
    E_EPISODE,
    E_FRAME,
    E_NONFINITE,
    E_ORDER,
    E_SCHEMA,
    E_SYNTAX,
    E_UNKNOWN,
    ActionData,
    ImageAndState,
    Metrics,
    StartEpisode,
    WireError,
    WireProtocolError,
    decode,
    encode,
    read_message,
    write_message,
)
from dynahoi.protocol.ws import (
    OP_BINARY,
    OP_CLOSE,
    OP_PING,
    OP_TEXT,
    accept_key,
    read_frame,
    write_frame,
)

ZERO_ROW = (0.0,) * 18


def _frame(body: str) -> bytes:
    raw = body.encode("utf-8")
    return str(len(raw)).encode() + b"\n" + raw


def _obs_from_wire(msg: ImageAndState) -> Observation:
    cam = msg.observation["camera"]
    return Observation(
        frame=msg.frame,
        time=msg.observation["time"],
        palm=Vec3(*msg.state[:3]),
        joints=tuple(msg.state[3:]),
        fingertips=(),
        camera=CameraObs(cam["u"], cam["v"], cam["depth"], cam["visible"]),
        instruction=msg.observation["instruction"],
    )


def _drive_oracle(host, port, task, episode_id, length, horizon):
    """Run the oracle as a wire client; returns (report, frames_observed)."""
    cfg = build_episode(task, episode_id, frames=length, episode_id=episode_id)
    ctl = OracleController()
    ctl.begin(cfg)
    observed = []
    with socket.create_connection((host, port)) as sock:
        stream = sock.makefile("rwb")
        write_message(stream, StartEpisode(episode_id, task, length, horizon))
        while True:
            msg = read_message(stream)
            if isinstance(msg, Metrics):
                return msg.report, observed
            if isinstance(msg, WireError):
                raise AssertionError(f"server error {msg.code}: {msg.detail}")
            obs = _obs_from_wire(msg)
            observed.append(msg.frame)
            rows = [tuple(ctl.act(obs).to_vector()) for _ in range(horizon)]
            write_message(stream, ActionData(actions=tuple(rows)))


def _bridge_report(task, episode_id, length, horizon=1):
    """Same controller, same engine, same chunking, no wire in between."""
    cfg = build_episode(task, episode_id, frames=length, episode_id=episode_id)
    ctl = OracleController()
    ctl.begin(cfg)
    engine = Engine(cfg)
    while not engine.done_stepping:
        obs = engine.observation()
        rows = [ctl.act(obs) for _ in range(horizon)]
        remaining = cfg.frames - 1 - engine.frame
        for act in rows[:remaining]:
            engine.step(act)
    gt = run_gt_episode(cfg)
    return evaluate_record(engine.record, gt_record=gt).to_dict()


@pytest.fixture(scope="module")
def server():
    with EvalServer(deadline=8.0) as srv:
        yield srv.address


# -- wire codec ---------------------------------------------------------------


def test_start_episode_golden_frame():
    # canonical bytes pinned: sorted keys, compact separators, len prefix
    body = (
        '{"episode_id":7,"horizon":10,"length":80,'
        '"task_type":"circular_slow","type":"start_episode"}'
    )
    golden = _frame(body)
    assert encode(StartEpisode(7, "circular_slow", 80, 10)) == golden
    msg = decode(golden)
    assert msg == StartEpisode(7, "circular_slow", 80, 10)
    assert encode(msg) == golden


def test_every_message_type_round_trips():
    obs = {
        "time": 0.35,
        "instruction": "Grasp the ball.",
        "camera": {"u": 320.0, "v": 18.25, "depth": 1.8, "visible": True},
    }
    msgs = [
        StartEpisode(0, "line_slow", 64, 1),
        ImageAndState(frame=7, image=None, state=tuple(float(i) for i in range(18)), observation=obs),
        ActionData(actions=(ZERO_ROW, tuple(0.01 * i for i in range(18)))),
        ActionData(skill_program={"action_sequence": [{"skill": "WAIT", "params": {}, "duration": 1}]}),
        Metrics({"s_loc": True, "e_loc": 0.12}),
        WireError("bad_schema", "because"),
    ]
    for msg in msgs:
        raw = encode(msg)
        again = decode(raw)
        assert again == msg
        assert encode(again) == raw


def test_seventeen_element_row_is_schema_error():
    raw = _frame(json.dumps({"type": "action_data", "actions": [[0.0] * 17]},
                            sort_keys=True, separators=(",", ":")))
    with pytest.raises(WireProtocolError) as err:
        decode(raw)
    assert err.value.code == E_SCHEMA
    assert "18" in err.value.detail


def test_action_data_requires_exactly_one_payload():
    with pytest.raises(WireProtocolError):
        ActionData()
    with pytest.raises(WireProtocolError):
        ActionData(actions=(ZERO_ROW,), skill_program={"action_sequence": []})


def test_non_finite_rejected_both_directions():
    bad = ActionData(actions=((float("nan"),) + (0.0,) * 17,))
    with pytest.raises(WireProtocolError) as err:
        encode(bad)
    assert err.value.code == E_NONFINITE

    body = '{"actions":[[Infinity' + ",0.0" * 17 + ']],"type":"action_data"}'
    with pytest.raises(WireProtocolError) as err:
        decode(_frame(body))
    assert err.value.code == E_NONFINITE


@pytest.mark.parametrize(
    "raw, code",
    [
        (b"12345", E_FRAME),                      # no terminator
        (b"xx\n{}", E_FRAME),                     # non-decimal prefix
        (b"5\n{}", E_FRAME),                      # prefix/body length mismatch
        (b"", E_FRAME),                           # empty input
        (_frame("hello"), E_SYNTAX),              # not JSON
        (_frame('{"type":"mystery"}'), E_UNKNOWN),
        (_frame('{"no_type":1}'), E_SCHEMA),
        (_frame('[1,2,3]'), E_SCHEMA),            # body must be an object
    ],
)
def test_decode_rejects_malformed_frames(raw, code):
    with pytest.raises(WireProtocolError) as err:
        decode(raw)
    assert err.value.code == code


def test_stream_read_write_round_trip():
    buf = io.BytesIO()
    sent = [StartEpisode(1, "line_slow", 64, 1),
            ActionData(actions=(ZERO_ROW,)),
            Metrics({"s_loc": False})]
    for msg in sent:
        write_message(buf, msg)
    buf.seek(0)
    got = [read_message(buf) for _ in sent]
    assert got == sent
    assert read_message(buf) is None  # clean EOF


def test_stream_truncated_frame_is_error():
    raw = encode(StartEpisode(1, "line_slow", 64, 1))
    buf = io.BytesIO(raw[:-3])
    with pytest.raises(WireProtocolError):
        read_message(buf)


def test_decode_fuzz_never_crashes():
    # full 1e5-case budget lives in the acceptance suite
    rng = random.Random(4242)
    for _ in range(20000):
        n = rng.randrange(0, 300)
        raw = bytes(rng.randrange(256) for _ in range(n))
        if rng.random() < 0.4:  # bias towards well-framed garbage bodies
            raw = str(len(raw)).encode() + b"\n" + raw
        try:
            decode(raw)
        except WireProtocolError:
            pass


# -- skill programs -----------------------------------------------------------


def template_program(**over):
    """The documented response template: APPROACH(4) + GRASP(6), T=10."""
    base = {
        "action_sequence": [
            {"skill": "APPROACH",
             "params": {"target_point": [0.0, 1.0, 0.5], "speed": 0.5},
             "duration": 4},
            {"skill": "GRASP",
             "params": {"joint_targets": [1.2] * 15},
             "duration": 6,
             "terminate_if": "grasp_stable"},
        ],
        "predicted_motion": [
            {"frame_index": i, "hand_params": [0.01 * i] * 18} for i in range(1, 11)
        ],
    }
    base.update(over)
    return base


def test_reference_template_accepted():
    prog = parse_skill_program(json.dumps(template_program()), horizon=10)
    assert [s.skill for s in prog.steps] == ["APPROACH", "GRASP"]
    assert [s.duration for s in prog.steps] == [4, 6]
    assert prog.steps[1].terminate_if == "grasp_stable"  # stored, never evaluated
    assert len(prog.predicted_motion) == 10


def _mutated(name):
    p = template_program()
    if name == "top_not_object":
        return [1, 2, 3]
    if name == "top_unknown_key":
        p["reasoning"] = "because"
    elif name == "missing_sequence":
        del p["action_sequence"]
    elif name == "empty_sequence":
        p["action_sequence"] = []
    elif name == "step_not_object":
        p["action_sequence"][0] = "WAIT"
    elif name == "step_unknown_key":
        p["action_sequence"][0]["velocity"] = 3
    elif name == "missing_skill":
        del p["action_sequence"][0]["skill"]
    elif name == "unknown_skill":
        p["action_sequence"][0]["skill"] = "FLY"
    elif name == "skill_not_string":
        p["action_sequence"][0]["skill"] = 7
    elif name == "missing_duration":
        del p["action_sequence"][0]["duration"]
    elif name == "zero_duration":
        p["action_sequence"][0]["duration"] = 0
    elif name == "negative_duration":
        p["action_sequence"][0]["duration"] = -2
    elif name == "float_duration":
        p["action_sequence"][0]["duration"] = 2.5
    elif name == "bool_duration":
        p["action_sequence"][0]["duration"] = True
    elif name == "bad_sum":
        p["action_sequence"][0]["duration"] = 3
    elif name == "params_not_object":
        p["action_sequence"][0]["params"] = [1, 2]
    elif name == "terminate_if_not_string":
        p["action_sequence"][1]["terminate_if"] = 42
    elif name == "motion_not_list":
        p["predicted_motion"] = {"frame_index": 1}
    elif name == "motion_short":
        p["predicted_motion"] = p["predicted_motion"][:-1]
    elif name == "motion_gap":
        p["predicted_motion"][4]["frame_index"] = 9
    elif name == "hand_params_arity":
        p["predicted_motion"][0]["hand_params"] = [0.0] * 17
    elif name == "motion_row_unknown_key":
        p["predicted_motion"][0]["extra"] = 1
    return p


MALFORMED = [
    # (variant, expected kind, where-substring, detail-substring)
    ("top_not_object", "semantic", "$", "JSON object"),
    ("top_unknown_key", "semantic", "$", "unexpected key 'reasoning'"),
    ("missing_sequence", "semantic", "$", "missing action_sequence"),
    ("empty_sequence", "semantic", "action_sequence", "must not be empty"),
    ("step_not_object", "semantic", "action_sequence[0]", "must be an object"),
    ("step_unknown_key", "semantic", "action_sequence[0]", "unexpected key 'velocity'"),
    ("missing_skill", "semantic", "action_sequence[0]", "missing skill"),
    ("unknown_skill", "semantic", "action_sequence[0].skill", "unknown skill 'FLY'"),
    ("skill_not_string", "semantic", "action_sequence[0].skill", "must be a string"),
    ("missing_duration", "semantic", "action_sequence[0]", "missing duration"),
    ("zero_duration", "semantic", "action_sequence[0].duration", "must be >= 1"),
    ("negative_duration", "semantic", "action_sequence[0].duration", "must be >= 1"),
    ("float_duration", "semantic", "action_sequence[0].duration", "must be an integer"),
    ("bool_duration", "semantic", "action_sequence[0].duration", "must be an integer"),
    ("bad_sum", "semantic", "action_sequence", "durations must sum to horizon (got 9, horizon 10)"),
    ("params_not_object", "semantic", "action_sequence[0].params", "must be an object"),
    ("terminate_if_not_string", "semantic", "action_sequence[1].terminate_if", "opaque string"),
    ("motion_not_list", "semantic", "predicted_motion", "must be a list"),
    ("motion_short", "semantic", "predicted_motion", "exactly horizon=10 frames, got 9"),
    ("motion_gap", "semantic", "predicted_motion[4].frame_index", "1..10 consecutively"),
    ("hand_params_arity", "semantic", "predicted_motion[0].hand_params", "18 values, got 17"),
    ("motion_row_unknown_key", "semantic", "predicted_motion[0]", "unexpected key 'extra'"),
]


@pytest.mark.parametrize("name, kind, where, detail", MALFORMED, ids=[m[0] for m in MALFORMED])
def test_malformed_program_rejected(name, kind, where, detail):
    with pytest.raises(SkillProgramError) as err:
        validate_skill_program(_mutated(name), 10)
    assert err.value.kind == kind
    assert where in err.value.where
    assert detail in err.value.detail


def test_syntax_errors_carry_positions():
    with pytest.raises(SkillProgramError) as err:
        parse_skill_program('{"action_sequence": [', 10)
    assert err.value.kind == "syntax"
    assert "offset 21" in err.value.where

    with pytest.raises(SkillProgramError) as err:
        parse_skill_program("grab the cup", 10)
    assert err.value.kind == "syntax"
    assert "offset 0" in err.value.where


def test_parse_rejects_non_finite_literals():
    text = json.dumps(template_program()).replace("0.01", "NaN", 1)
    with pytest.raises(SkillProgramError) as err:
        parse_skill_program(text, 10)
    assert err.value.kind == "semantic"
    assert "non-finite" in err.value.detail


# -- skill expansion ----------------------------------------------------------

STATE0 = [0.0, 1.0, 0.0] + [0.0] * 15


def _seq(*steps):
    return validate_skill_program({"action_sequence": list(steps)}, sum(s["duration"] for s in steps))


def test_wait_expands_to_zero_actions():
    prog = _seq({"skill": "WAIT", "params": {}, "duration": 10})
    acts = expand_skill_program(prog, STATE0)
    assert len(acts) == 10
    assert all(a.is_zero() for a in acts)


def test_approach_constant_step_displacement():
    # 0.5 m away at 0.5 m/s with dt 0.05: ten equal 0.025 m steps
    prog = _seq({"skill": "APPROACH",
                 "params": {"target_point": [0.5, 1.0, 0.0], "speed": 0.5},
                 "duration": 10})
    acts = expand_skill_program(prog, STATE0)
    for act in acts:
        step = math.hypot(act.d_palm.x, act.d_palm.y, act.d_palm.z)
        assert step == pytest.approx(0.025, abs=1e-12)
        assert act.d_palm.x == pytest.approx(0.025, abs=1e-12)  # unit direction +X
    assert all(q == 0.0 for a in acts for q in a.d_joints)


def test_approach_never_overshoots():
    prog = _seq({"skill": "APPROACH",
                 "params": {"target_point": [0.07, 1.0, 0.0], "speed": 2.0},
                 "duration": 4})
    acts = expand_skill_program(prog, STATE0)
    x = 0.0
    for act in acts:
        assert math.hypot(act.d_palm.x, act.d_palm.y, act.d_palm.z) <= 0.1 + 1e-12
        x += act.d_palm.x
    assert x == pytest.approx(0.07, abs=1e-9)
    assert acts[-1].is_zero()  # arrived, then holds


def test_grasp_uniform_rates_reach_targets():
    targets = [1.2] * 15
    prog = _seq({"skill": "GRASP", "params": {"joint_targets": targets}, "duration": 8})
    acts = expand_skill_program(prog, STATE0)
    rates = {a.d_joints[0] for a in acts}
    assert len(rates) == 1  # uniform per-frame rate
    total = sum(a.d_joints[3] for a in acts)
    assert total == pytest.approx(1.2, abs=1e-9)
    assert all(a.d_palm == Vec3(0.0, 0.0, 0.0) for a in acts)


def test_grasp_rate_is_capped():
    prog = _seq({"skill": "GRASP", "params": {"joint_targets": [1.5] * 15}, "duration": 2})
    acts = expand_skill_program(prog, STATE0)
    assert all(abs(q) <= 0.2 + 1e-12 for a in acts for q in a.d_joints)


def test_lift_moves_up_and_respects_cap():
    prog = _seq({"skill": "LIFT", "params": {"speed": 0.6}, "duration": 5})
    acts = expand_skill_program(prog, STATE0)
    assert [a.d_palm.y for a in acts] == pytest.approx([0.03] * 5)

    prog = _seq({"skill": "LIFT", "params": {"speed": 3.0}, "duration": 2})
    acts = expand_skill_program(prog, STATE0)
    assert [a.d_palm.y for a in acts] == pytest.approx([0.1, 0.1])


def test_adjust_applies_bounded_nudges():
    prog = _seq({"skill": "ADJUST",
                 "params": {"d_palm": [0.01, 0.0, -0.01], "d_joints": [0.02] * 15},
                 "duration": 3})
    acts = expand_skill_program(prog, STATE0)
    assert acts[0].d_palm == Vec3(0.01, 0.0, -0.01)
    assert acts[0].d_joints == (0.02,) * 15


@pytest.mark.parametrize(
    "step, missing",
    [
        ({"skill": "APPROACH", "params": {"speed": 0.5}, "duration": 4}, "target_point"),
        ({"skill": "APPROACH", "params": {"target_point": [0, 1, 0]}, "duration": 4}, "speed"),
        ({"skill": "INTERCEPT", "params": {"speed": 1.0}, "duration": 4}, "target_point"),
        ({"skill": "GRASP", "params": {}, "duration": 4}, "joint_targets"),
        ({"skill": "LIFT", "params": {}, "duration": 4}, "speed"),
        ({"skill": "ADJUST", "params": {}, "duration": 4}, "d_palm"),
    ],
)
def test_expansion_requires_explicit_params(step, missing):
    prog = _seq(step)
    with pytest.raises(SkillProgramError) as err:
        expand_skill_program(prog, STATE0)
    assert missing in err.value.detail


def test_predicted_motion_takes_precedence_and_replays():
    prog = parse_skill_program(json.dumps(template_program()), horizon=10)
    acts = expand_skill_program(prog, STATE0)
    running = list(STATE0)
    for act, row in zip(acts, template_program()["predicted_motion"]):
        running = [r + d for r, d in zip(running, act.to_vector())]
        for got, want in zip(running, row["hand_params"]):
            assert got == pytest.approx(want, abs=1e-9)


def test_expansion_never_leaks_target_motion():
    # same program, two engines with different target motions: identical actions
    prog = _seq({"skill": "APPROACH",
                 "params": {"target_point": [0.2, 1.1, 0.3], "speed": 0.8},
                 "duration": 6})
    states = []
    for task in ("line_fast", "circular_slow"):
        cfg = build_episode(task, 17, frames=80, episode_id=17)
        obs = Engine(cfg).observation()
        states.append([obs.palm.x, obs.palm.y, obs.palm.z, *obs.joints])
    a = [act.to_vector() for act in expand_skill_program(prog, states[0])]
    b = [act.to_vector() for act in expand_skill_program(prog, states[1])]
    assert a == b


# -- server sessions ----------------------------------------------------------


def test_loopback_oracle_reproduces_in_process_report(server):
    host, port = server
    report, observed = _drive_oracle(host, port, "line_slow", 4, 80, 1)
    assert report == _bridge_report("line_slow", 4, 80)
    assert report["s_loc"] is True and report["s_gra"] is True
    assert observed == list(range(79))  # one observation per transition


def test_loopback_matches_labeled_gt_report_within_float_noise(server):
    # run_gt_episode labels oracle phases; the wire record cannot carry
    # them, so the line-fit window shifts by a frame. Everything else is
    # bit-equal; the fit ratios agree to float noise.
    host, port = server
    report, _ = _drive_oracle(host, port, "line_slow", 4, 80, 1)
    cfg = build_episode("line_slow", 4, frames=80, episode_id=4)
    gt = run_gt_episode(cfg)
    labeled = evaluate_record(gt, gt_record=gt).to_dict()
    for key, want in labeled.items():
        got = report[key]
        if isinstance(want, float):
            assert got == pytest.approx(want, abs=1e-9), key
        else:
            assert got == want, key


def test_skill_program_session_runs_clean(server):
    # drive a whole episode out of WAIT programs; the hand never moves
    host, port = server
    task, eid, length, horizon = "line_slow", 21, 64, 9
    with socket.create_connection((host, port)) as sock:
        stream = sock.makefile("rwb")
        write_message(stream, StartEpisode(eid, task, length, horizon))
        report = None
        while report is None:
            msg = read_message(stream)
            assert not isinstance(msg, WireError), msg
            if isinstance(msg, Metrics):
                report = msg.report
                break
            write_message(stream, ActionData(skill_program={
                "action_sequence": [{"skill": "WAIT", "params": {}, "duration": horizon}],
            }))
    cfg = build_episode(task, eid, frames=length, episode_id=eid)
    gt = run_gt_episode(cfg)
    engine = Engine(cfg)
    while not engine.done_stepping:
        engine.step(Action.zero())
    want = evaluate_record(engine.record, gt_record=gt).to_dict()
    assert report == want


def test_action_before_start_is_out_of_order(server):
    host, port = server
    with socket.create_connection((host, port)) as sock:
        stream = sock.makefile("rwb")
        write_message(stream, ActionData(actions=(ZERO_ROW,)))
        msg = read_message(stream)
    assert isinstance(msg, WireError)
    assert msg.code == E_ORDER


def test_unknown_subcategory_is_episode_error(server):
    host, port = server
    with socket.create_connection((host, port)) as sock:
        stream = sock.makefile("rwb")
        write_message(stream, StartEpisode(0, "warp_drive", 80, 1))
        msg = read_message(stream)
    assert isinstance(msg, WireError)
    assert msg.code == E_EPISODE
    assert "warp_drive" in msg.detail


def test_oversized_chunk_is_schema_error(server):
    host, port = server
    with socket.create_connection((host, port)) as sock:
        stream = sock.makefile("rwb")
        write_message(stream, StartEpisode(3, "line_slow", 72, 2))
        msg = read_message(stream)
        assert isinstance(msg, ImageAndState)
        write_message(stream, ActionData(actions=(ZERO_ROW,) * 3))
        msg = read_message(stream)
    assert isinstance(msg, WireError)
    assert msg.code == E_SCHEMA
    assert "horizon" in msg.detail


def test_stalled_client_hits_deadline():
    with EvalServer(deadline=0.5) as srv:
        host, port = srv.address
        with socket.create_connection((host, port)) as sock:
            stream = sock.makefile("rwb")
            write_message(stream, StartEpisode(3, "line_slow", 72, 1))
            assert isinstance(read_message(stream), ImageAndState)
            msg = read_message(stream)  # no action sent; server must abort
    assert isinstance(msg, WireError)
    assert msg.code == E_DEADLINE


def test_final_chunk_truncated_at_episode_boundary(server):
    # 71 transitions at horizon 10: 8 chunks, the last effectively 1 row
    host, port = server
    report, observed = _drive_oracle(host, port, "line_slow", 5, 72, 10)
    assert observed == list(range(0, 71, 10))
    assert report == _bridge_report("line_slow", 5, 72, horizon=10)


def test_chunk_accounting_is_horizon_invariant(server):
    # every horizon consumes exactly the 71 transitions of a 72-frame
    # episode and matches its equally-chunked in-process twin
    host, port = server
    for horizon in (1, 7, 71, 200):
        report, observed = _drive_oracle(host, port, "line_slow", 8, 72, horizon)
        assert report == _bridge_report("line_slow", 8, 72, horizon=horizon)
        assert len(observed) == math.ceil(71 / min(horizon, 71))


def test_concurrent_sessions_match_serial_baselines(server):
    host, port = server
    jobs = [(31, "line_slow", 72, 1), (32, "harmonic_gentle", 96, 10), (33, "circular_slow", 120, 7)]
    serial = {eid: _drive_oracle(host, port, task, eid, length, h)[0]
              for eid, task, length, h in jobs}
    results = {}
    errors = []

    def work(eid, task, length, h):
        try:
            results[eid] = _drive_oracle(host, port, task, eid, length, h)[0]
        except Exception as exc:  # surfaced after join
            errors.append(exc)

    threads = [threading.Thread(target=work, args=job) for job in jobs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert results == serial


# -- websocket adapter --------------------------------------------------------


def test_accept_key_matches_rfc_sample():
    assert accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo="


def test_frame_round_trip_plain_and_masked():
    a, b = socket.socketpair()
    try:
        write_frame(a, OP_BINARY, b"hello wire")
        assert read_frame(b) == (OP_BINARY, b"hello wire")

        payload = bytes(range(256)) * 300  # 76.8 kB forces the 64-bit length form
        write_frame(a, OP_BINARY, payload)
        assert read_frame(b) == (OP_BINARY, payload)

        mask = b"\x37\xfa\x21\x3d"
        masked = bytes(c ^ mask[i % 4] for i, c in enumerate(b"masked!"))
        b.sendall(struct.pack("!BB", 0x80 | OP_TEXT, 0x80 | 7) + mask + masked)
        assert read_frame(a) == (OP_TEXT, b"masked!")
    finally:
        a.close()
        b.close()


def _ws_send(sock, data):
    mask = b"\x11\x22\x33\x44"
    n = len(data)
    if n < 126:
        head = struct.pack("!BB", 0x80 | OP_BINARY, 0x80 | n)
    elif n < 1 << 16:
        head = struct.pack("!BBH", 0x80 | OP_BINARY, 0x80 | 126, n)
    else:
        head = struct.pack("!BBQ", 0x80 | OP_BINARY, 0x80 | 127, n)
    sock.sendall(head + mask + bytes(c ^ mask[i % 4] for i, c in enumerate(data)))


def _ws_recv_message(sock, buf):
    while True:
        nl = buf.find(b"\n")
        if nl >= 0:
            need = nl + 1 + int(buf[:nl])
            if len(buf) >= need:
                return decode(buf[:need]), buf[need:]
        opcode, payload = read_frame(sock)
        if opcode == OP_PING:
            continue
        buf += payload


def test_full_session_over_websocket(server):
    host, port = server
    task, eid, length = "line_slow", 9, 72
    cfg = build_episode(task, eid, frames=length, episode_id=eid)
    ctl = OracleController()
    ctl.begin(cfg)

    with socket.create_connection((host, port)) as sock:
        sock.sendall((
            f"GET /session HTTP/1.1\r\nHost: {host}:{port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\n"
            "Sec-WebSocket-Version: 13\r\n\r\n"
        ).encode("latin-1"))
        resp = b""
        while b"\r\n\r\n" not in resp:
            chunk = sock.recv(4096)
            assert chunk, "server closed during handshake"
            resp += chunk
        head = resp.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        assert head.startswith("HTTP/1.1 101")
        assert "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=" in head

        _ws_send(sock, encode(StartEpisode(eid, task, length, 1)))
        buf = resp.split(b"\r\n\r\n", 1)[1]
        report = None
        while report is None:
            msg, buf = _ws_recv_message(sock, buf)
            assert not isinstance(msg, WireError), msg
            if isinstance(msg, Metrics):
                report = msg.report
                break
            row = tuple(ctl.act(_obs_from_wire(msg)).to_vector())
            _ws_send(sock, encode(ActionData(actions=(row,))))

    assert report == _bridge_report(task, eid, length)


def test_raw_and_websocket_clients_share_one_port(server):
    host, port = server
    report_raw, _ = _drive_oracle(host, port, "line_slow", 9, 72, 1)
    assert report_raw == _bridge_report("line_slow", 9, 72)


def test_bad_handshake_closes_without_crash(server):
    host, port = server
    with socket.create_connection((host, port)) as sock:
        sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")  # no websocket headers
        sock.settimeout(5.0)
        data = sock.recv(4096)
    assert data == b""  # connection dropped, no half-written response
    # and the server still serves fresh sessions afterwards
    report, _ = _drive_oracle(host, port, "line_slow", 4, 80, 1)
    assert report == _bridge_report("line_slow", 4, 80)
