"""Operator command line: dataset generation, the evaluation server,
oracle and scripted-agent benchmark rows, archive replay, and corpus
statistics/reports.

Every long flag can also be set through the environment with the
``DYNAHOI_`` prefix (``--obs-frames`` becomes ``DYNAHOI_OBS_FRAMES``);
an explicit flag always wins over the environment.  Each run prints its
fully resolved configuration as one ``config {...}`` JSON line before
doing anything, so any invocation can be reproduced from its own output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .agents import AGENTS, make_agent
from .catalog import CatalogError, build_episode, corpus_plan, load_catalog
from .datapipe import (
    ArchiveError,
    collect_dataset,
    compute_action_stats,
    read_corpus,
    read_episode,
    write_action_stats,
)
from .engine import Engine, run_rollout
from .metrics import evaluate_record
from .oracle import InfeasiblePlanError, run_gt_episode
from .protocol import EvalServer

ENV_PREFIX = "DYNAHOI_"
LOOSE_THRESHOLD = 1.0  # relaxed localization radius; default stays at the config's 0.3
TABLE_HEADER = (
    f"{'model':<16}{'episodes':>9}{'S_loc(%)':>10}{'E_loc':>8}"
    f"{'S_gra(%)':>10}{'E_gra':>8}{'Q_smooth':>10}{'Q_line':>8}{'R_time':>8}"
)


class CliError(Exception):
    """Fatal but expected: report one line and exit 1."""


# -- flag plumbing ------------------------------------------------------------


def _env(name: str) -> Optional[str]:
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _env_default(name: str, fallback, cast=str):
    raw = _env(name)
    if raw is None:
        return fallback
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return cast(raw)
    except ValueError:
        raise SystemExit(f"error: {ENV_PREFIX}{name.upper().replace('-', '_')}={raw!r} "
                         f"is not a valid {cast.__name__}")


def _add_flag(parser, name, *, cast=str, default=None, help="", **kw):
    """Register a flag whose default can come from the environment."""
    resolved = _env_default(name, default, cast)
    if cast is bool:
        parser.add_argument(f"--{name}", action="store_true", default=resolved, help=help)
    else:
        parser.add_argument(f"--{name}", type=cast, default=resolved, help=help, **kw)


def _common_eval_flags(sub):
    _add_flag(sub, "subcategory", help="single catalog subcategory; omit for the weighted corpus mix")
    _add_flag(sub, "episodes", cast=int, default=20, help="number of episodes")
    _add_flag(sub, "seed", cast=int, default=0, help="base seed for the episode plan")
    _add_flag(sub, "obs-frames", cast=int, help="override the observation window length")
    _add_flag(sub, "threshold", cast=float, help="localization success radius in metres")
    _add_flag(sub, "lenient", cast=bool, default=False,
              help="use the loose success radius (explicit --threshold wins)")
    _add_flag(sub, "jitter", cast=bool, default=False, help="enable timing jitter")
    _add_flag(sub, "catalog", help="path to an alternate motion catalog JSON")
    _add_flag(sub, "workers", cast=int, default=1, help="episode fan-out; output order stays sorted")
    _add_flag(sub, "out", help="also write per-episode reports as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynahoi",
        description="Dynamic hand-object interception benchmark tools.",
        epilog=f"Any flag may be supplied via the environment as {ENV_PREFIX}<FLAG> "
               f"(upper snake case); explicit flags take precedence.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="collect an expert corpus to disk")
    _add_flag(g, "out", help="dataset root directory (required)")
    _add_flag(g, "episodes", cast=int, default=50, help="number of episodes")
    _add_flag(g, "seed", cast=int, default=0, help="base seed for the episode plan")
    _add_flag(g, "subcategory", help="single subcategory; omit for the weighted corpus mix")
    _add_flag(g, "obs-frames", cast=int, help="override the observation window length")
    _add_flag(g, "jitter", cast=bool, default=False, help="enable timing jitter")
    _add_flag(g, "catalog", help="path to an alternate motion catalog JSON")
    _add_flag(g, "workers", cast=int, default=1, help="episode fan-out; bytes identical at any count")
    g.set_defaults(func=cmd_generate)

    s = subs.add_parser("serve", help="run the evaluation server")
    _add_flag(s, "bind", default="127.0.0.1:8765", help="host:port to listen on (port 0 picks one)")
    _add_flag(s, "deadline", cast=float, default=30.0, help="per-read client deadline in seconds")
    _add_flag(s, "threshold", cast=float, help="localization success radius in metres")
    _add_flag(s, "lenient", cast=bool, default=False,
              help="use the loose success radius (explicit --threshold wins)")
    _add_flag(s, "catalog", help="path to an alternate motion catalog JSON")
    s.set_defaults(func=cmd_serve)

    eo = subs.add_parser("eval-oracle", help="benchmark the expert controller")
    _common_eval_flags(eo)
    eo.set_defaults(func=cmd_eval_oracle)

    es = subs.add_parser("eval-scripted", help="benchmark the scripted reference agents")
    _common_eval_flags(es)
    _add_flag(es, "agent", help=f"one of {', '.join(sorted(AGENTS))}; omit for all")
    _add_flag(es, "horizon", cast=int, default=1,
              help="act in open-loop chunks of this many frames")
    es.set_defaults(func=cmd_eval_scripted)

    r = subs.add_parser("replay", help="print an archived episode frame by frame")
    r.add_argument("path", help="episode directory (episode_N)")
    r.set_defaults(func=cmd_replay)

    st = subs.add_parser("stats", help="action statistics and histograms for a corpus")
    st.add_argument("root", help="dataset root directory")
    _add_flag(st, "out", help="directory for stats files (default: the dataset root)")
    st.set_defaults(func=cmd_stats)

    rp = subs.add_parser("report", help="stratified metric tables for a corpus")
    rp.add_argument("root", help="dataset root directory")
    _add_flag(rp, "threshold", cast=float, help="localization success radius in metres")
    _add_flag(rp, "lenient", cast=bool, default=False,
              help="use the loose success radius (explicit --threshold wins)")
    _add_flag(rp, "out", help="also write the stratified rows as JSON")
    rp.set_defaults(func=cmd_report)

    return parser


def _announce(args) -> None:
    resolved = {
        k: v for k, v in sorted(vars(args).items())
        if k != "func" and not k.startswith("_")
    }
    print("config " + json.dumps(resolved, sort_keys=True, default=str), flush=True)


def _threshold(args) -> Optional[float]:
    if args.threshold is not None:
        return args.threshold
    if getattr(args, "lenient", False):
        return LOOSE_THRESHOLD
    return None


def _catalog(args):
    return load_catalog(args.catalog) if args.catalog else None


# -- episode plans and table output -------------------------------------------


def _plan(args, cat) -> List[Tuple[str, int]]:
    if args.subcategory:
        return [(args.subcategory, args.seed + i) for i in range(args.episodes)]
    return corpus_plan(args.seed, args.episodes, cat)


def _fan_out(jobs, workers: int) -> list:
    """Run jobs (callables) preserving order; thread pool when asked."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda j: j(), jobs))
    return [j() for j in jobs]


def _table_row(name: str, reports: Sequence[dict]) -> str:
    n = len(reports)
    mean = lambda key: sum(float(r[key]) for r in reports) / n
    return (
        f"{name:<16}{n:>9d}"
        f"{100.0 * mean('s_loc'):>10.2f}{mean('e_loc'):>8.2f}"
        f"{100.0 * mean('s_gra'):>10.2f}{mean('e_gra'):>8.2f}"
        f"{mean('q_smooth'):>10.2f}{mean('q_line'):>8.2f}{mean('r_time'):>8.2f}"
    )


def _write_reports(path: str, payload) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"wrote {out}")


# -- subcommands --------------------------------------------------------------


def cmd_generate(args) -> int:
    if not args.out:
        raise CliError("generate needs --out (dataset root directory)")
    _announce(args)
    manifest = collect_dataset(
        Path(args.out),
        args.episodes,
        args.seed,
        selection=args.subcategory,
        jitter=args.jitter,
        observe_frames=args.obs_frames,
        catalog=_catalog(args),
        workers=args.workers,
    )
    print(f"generated {manifest['ok']}/{manifest['count']} episodes under {args.out}")
    if manifest["failed"]:
        print(f"failed episodes: {manifest['failed']} (see manifest)")
    print(f"manifest {Path(args.out) / 'manifest.json'}")
    return 0


def cmd_serve(args) -> int:
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise CliError(f"--bind must look like host:port, got {args.bind!r}")
    _announce(args)
    server = EvalServer(
        host,
        int(port_text),
        deadline=args.deadline,
        threshold=_threshold(args),
        catalog=_catalog(args),
    )
    with server:
        bound_host, bound_port = server.address
        print(f"listening on {bound_host}:{bound_port}", flush=True)
        try:
            while True:
                time.sleep(0.5)
        except KeyboardInterrupt:
            pass
    return 0


def _oracle_reports(args) -> List[dict]:
    cat = _catalog(args)
    thr = _threshold(args)
    plan = _plan(args, cat)

    def one(index, sub_name, ep_seed):
        def job():
            cfg = build_episode(
                sub_name,
                ep_seed,
                observe_frames=args.obs_frames,
                jitter=args.jitter,
                episode_id=index,
                catalog=cat,
            )
            return evaluate_record(run_gt_episode(cfg), threshold=thr).to_dict()
        return job

    jobs = [one(i, sub, sd) for i, (sub, sd) in enumerate(plan)]
    return _fan_out(jobs, args.workers)


def cmd_eval_oracle(args) -> int:
    _announce(args)
    reports = _oracle_reports(args)
    print(TABLE_HEADER)
    print(_table_row("oracle", reports))
    if args.out:
        _write_reports(args.out, {"agent": "oracle", "episodes": reports})
    return 0


def cmd_eval_scripted(args) -> int:
    if args.agent and args.agent not in AGENTS:
        raise CliError(f"unknown agent {args.agent!r}; pick from {', '.join(sorted(AGENTS))}")
    _announce(args)
    cat = _catalog(args)
    thr = _threshold(args)
    plan = _plan(args, cat)
    names = [args.agent] if args.agent else sorted(AGENTS)

    def one(name, index, sub_name, ep_seed):
        def job():
            cfg = build_episode(
                sub_name,
                ep_seed,
                observe_frames=args.obs_frames,
                jitter=args.jitter,
                episode_id=index,
                catalog=cat,
            )
            gt = run_gt_episode(cfg)
            if args.horizon <= 1:
                rec = run_rollout(cfg, make_agent(name))
            else:
                rec = _chunked_rollout(cfg, make_agent(name), args.horizon)
            return evaluate_record(rec, gt_record=gt, threshold=thr).to_dict()
        return job

    by_agent: Dict[str, List[dict]] = {}
    for name in names:
        jobs = [one(name, i, sub, sd) for i, (sub, sd) in enumerate(plan)]
        by_agent[name] = _fan_out(jobs, args.workers)

    print(TABLE_HEADER)
    for name in names:
        print(_table_row(name, by_agent[name]))
    if args.out:
        _write_reports(args.out, {name: by_agent[name] for name in names})
    return 0


def _chunked_rollout(cfg, agent, horizon: int):
    """Open-loop within each chunk, like a wire client at that horizon."""
    engine = Engine(cfg)
    begin = getattr(agent, "begin", None)
    if begin is not None:
        begin(cfg)
    while not engine.done_stepping:
        obs = engine.observation()
        actions = [agent.act(obs) for _ in range(horizon)]
        remaining = cfg.frames - 1 - engine.frame
        for act in actions[:remaining]:
            engine.step(act, phase=getattr(agent, "phase", "act"))
    return engine.record


def cmd_replay(args) -> int:
    _announce(args)
    path = Path(args.path)
    if not path.is_dir():
        raise CliError(f"no episode directory at {path}")
    record = read_episode(path)
    cfg = record.config
    print(f"episode {cfg.episode_id} {cfg.subcategory} frames={record.frames} "
          f"observe={cfg.observe_frames} instruction={cfg.instruction!r}")
    print(f"{'frame':>5} {'time':>7} {'phase':<8} {'palm':<26} {'target':<26} "
          f"{'dist':>6} {'attached':>8}")
    for f in range(record.frames):
        palm = record.palm[f]
        tgt = record.target[f]
        d = ((palm.x - tgt.x) ** 2 + (palm.y - tgt.y) ** 2 + (palm.z - tgt.z) ** 2) ** 0.5
        fmt = lambda v: f"({v.x:+.3f},{v.y:+.3f},{v.z:+.3f})"
        print(f"{f:>5} {record.times[f]:>7.3f} {record.phases[f]:<8} "
              f"{fmt(palm):<26} {fmt(tgt):<26} {d:>6.3f} {str(record.attached[f]):>8}")
    return 0


def cmd_stats(args) -> int:
    _announce(args)
    root = Path(args.root)
    if not root.is_dir():
        raise CliError(f"no dataset at {root}")
    records = read_corpus(root)
    stats = compute_action_stats(records)
    out_dir = Path(args.out) if args.out else root
    write_action_stats(stats, out_dir)
    print(f"{'dim':>4} {'min':>10} {'q01':>10} {'q99':>10} {'max':>10}")
    for d in range(len(stats.mins)):
        print(f"{d:>4} {stats.mins[d]:>10.4f} {stats.q01[d]:>10.4f} "
              f"{stats.q99[d]:>10.4f} {stats.maxs[d]:>10.4f}")
    print(f"wrote {out_dir / 'action_stats.json'} and {out_dir / 'action_histograms.csv'}")
    return 0


def cmd_report(args) -> int:
    _announce(args)
    root = Path(args.root)
    if not root.is_dir():
        raise CliError(f"no dataset at {root}")
    records = read_corpus(root)
    if not records:
        raise CliError(f"no episodes under {root}")
    thr = _threshold(args)
    reports = [evaluate_record(rec, threshold=thr).to_dict() for rec in records]

    def stratified(key: str) -> List[Tuple[str, List[dict]]]:
        groups: Dict[str, List[dict]] = {}
        for rep in reports:
            groups.setdefault(str(rep[key]), []).append(rep)
        return sorted(groups.items())

    total = len(reports)
    for key, title in (("periodicity", "by periodicity class"),
                       ("duration_bucket", "by duration (frames)"),
                       ("length_bucket", "by trajectory length (m)")):
        rows = stratified(key)
        print(f"\n{title}")
        print(TABLE_HEADER)
        for name, group in rows:
            print(_table_row(name, group))
        print(_table_row("all", reports))
        counted = sum(len(g) for _, g in rows)
        if counted != total:  # the strata must partition the corpus
            raise CliError(f"stratum counts {counted} != total {total} for {key}")
    if args.out:
        _write_reports(args.out, {"episodes": reports})
    return 0


# -- entry points -------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CatalogError, ArchiveError, InfeasiblePlanError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
