"""Command-line episode runner.

Connects to a running evaluation server, drives one or more episodes
with a scripted policy, and prints each terminal report as a JSON line.
Mirrors the gym CLI's habit of printing the resolved configuration
before acting, so any run can be reproduced from its own output.
"""

from __future__ import annotations

import argparse
import json
import sys

from .agents import OBSERVE_FRAMES, POLICIES, make_policy
from .client import PolicyClient, run_episode
from .wire import ClientError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynahoi-client",
        description="drive evaluation episodes against a DynaHOI server",
    )
    parser.add_argument("--connect", required=True, help="server address, host:port")
    parser.add_argument("--task", required=True, help="catalog subcategory, e.g. circular_slow")
    parser.add_argument("--episode-id", type=int, default=0, help="first episode id")
    parser.add_argument("--episodes", type=int, default=1, help="consecutive ids to run")
    parser.add_argument("--length", type=int, default=80, help="episode frames N")
    parser.add_argument("--horizon", type=int, default=1, help="action chunk size T")
    parser.add_argument(
        "--agent",
        default="extrapolator",
        choices=sorted(POLICIES),
        help="scripted policy to run",
    )
    parser.add_argument(
        "--obs-frames",
        type=int,
        default=OBSERVE_FRAMES,
        help="observe window the policy assumes (catalog default 20)",
    )
    parser.add_argument("--timeout", type=float, default=30.0, help="socket timeout, s")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    resolved = {
        "agent": args.agent,
        "connect": args.connect,
        "episode_id": args.episode_id,
        "episodes": args.episodes,
        "horizon": args.horizon,
        "length": args.length,
        "obs_frames": args.obs_frames,
        "task": args.task,
    }
    print("config " + json.dumps(resolved, sort_keys=True))
    try:
        client = PolicyClient.from_address(args.connect, horizon=args.horizon, timeout=args.timeout)
        for eid in range(args.episode_id, args.episode_id + args.episodes):
            policy = make_policy(
                args.agent, length=args.length, horizon=args.horizon, observe_frames=args.obs_frames
            )
            report = run_episode(client, args.task, eid, args.length, policy)
            print(json.dumps(report, sort_keys=True))
    except (ClientError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
