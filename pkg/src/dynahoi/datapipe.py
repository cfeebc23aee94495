"""Collection pipeline: on-disk episode archives, corpus statistics,
outlier filtering, and batch dataset generation.

Archive layout, one directory per episode::

    episode_{id}/
        meta_data.json        written once; task type, motion parameters,
                              the predicted intercept (targetPosition) and
                              the palm speed needed to make it (moveSpeed),
                              plus the full config for lossless reload
        joints_{t:04d}.json   per-frame tracked transforms: 15 finger
                              joints, 5 nail keypoints, the wrist root,
                              the palm center and the camera, each with a
                              world position and an Euler orientation in
                              degrees; an "img" slot reserved for a
                              renderer this build does not have; and the
                              raw engine state block, which is the
                              authoritative stream every reader rebuilds
                              records from

Transforms are redundant derived views (downstream pose consumers want
them); the state block is what round-trips bit-exactly.  Writes go to a
temp directory and are renamed into place, so a torn write never leaves
something that parses.

Statistics follow the robust-quantile recipe: per-dimension min/max,
nearest-rank q01/q99, and fixed-bin histograms exported as CSV.  The
outlier pass clips samples into [q01 - m, q99 + m] and drops whole
episodes for persistent cap saturation, inter-frame state jumps faster
than the control rate allows, or missing/invalid frames.
"""

from __future__ import annotations

import json
import math
import shutil
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .catalog import CatalogError, build_episode, corpus_plan, load_catalog
from .engine import (
    DEFAULT_CAMERA,
    Action,
    Camera,
    CameraObs,
    EpisodeConfig,
    EpisodeRecord,
)
from .geometry import Vec3, dist, quat_from_axis_angle, quat_to_euler
from .kinematics import FINGER_COUNT, JOINTS_PER_FINGER, HandState, finger_chain
from .metrics import PERIODICITY, duration_bucket, length_bucket
from .motion import motion_to_dict
from .oracle import InfeasiblePlanError, plan_intercept, run_gt_episode

META_NAME = "meta_data.json"
FRAME_NAME = "joints_{:04d}.json"
MANIFEST_NAME = "manifest.json"
WRIST_OFFSET = Vec3(0.0, 0.0, -0.1)  # wrist root sits behind the palm marker
CAMERA_EULER_DEG = (90.0, 0.0, 0.0)  # pitched straight down
SATURATION_FRACTION = 0.6
DEFAULT_MARGIN_SCALE = 0.05
HISTOGRAM_BINS = 24
ACTION_DIMS = 3 + FINGER_COUNT * JOINTS_PER_FINGER


class ArchiveError(Exception):
    """Raised when an on-disk archive is structurally broken."""


# ---------------------------------------------------------------------------
# Episode archives


def _deg(angles: Tuple[float, float, float]) -> List[float]:
    return [math.degrees(a) for a in angles]


def _transform(position: Vec3, euler_deg: Sequence[float]) -> dict:
    return {"position": [position.x, position.y, position.z], "euler_deg": list(euler_deg)}


def _frame_transforms(record: EpisodeRecord, frame: int, camera: Camera) -> dict:
    cfg = record.config
    state = HandState(record.palm[frame], record.joints[frame])
    out: Dict[str, dict] = {}
    for f in range(FINGER_COUNT):
        chain = finger_chain(cfg.hand, state, f)
        axis = cfg.hand.flex_axis(f)
        cumulative = 0.0
        for k in range(JOINTS_PER_FINGER):
            cumulative += state.joints[f * JOINTS_PER_FINGER + k]
            rot = quat_from_axis_angle(axis, cumulative)
            out[f"joint_{f}_{k}"] = _transform(chain[k], _deg(quat_to_euler(rot)))
        nail_rot = quat_from_axis_angle(axis, cumulative)
        out[f"nail_{f}"] = _transform(chain[3], _deg(quat_to_euler(nail_rot)))
    out["hands_root"] = _transform(state.palm + WRIST_OFFSET, [0.0, 0.0, 0.0])
    out["palm_center"] = _transform(state.palm, [0.0, 0.0, 0.0])
    out["camera"] = _transform(camera.position(state.palm), list(CAMERA_EULER_DEG))
    return out


def _frame_state(record: EpisodeRecord, frame: int) -> dict:
    cam = record.camera[frame]
    return {
        "time": record.times[frame],
        "palm": list(record.palm[frame]),
        "joints": list(record.joints[frame]),
        "target": list(record.target[frame]),
        "action": record.actions[frame].to_vector(),
        "phase": record.phases[frame],
        "attached": record.attached[frame],
        "camera": {"u": cam.u, "v": cam.v, "depth": cam.depth, "visible": cam.visible},
    }


def _meta_payload(record: EpisodeRecord) -> dict:
    cfg = record.config
    try:
        plan = plan_intercept(cfg)
        target_position = list(plan.intercept_point)
        move_speed = plan.speed
    except InfeasiblePlanError:
        # archive anyway; the plan fields just go unavailable
        f_i = int(round(cfg.intercept_time / cfg.dt))
        target_position = list(cfg.motion.position_at(f_i * cfg.dt))
        move_speed = None
    return {
        "episode_id": cfg.episode_id,
        "task_type": cfg.subcategory,
        "motion": motion_to_dict(cfg.motion),
        "targetPosition": target_position,
        "moveSpeed": move_speed,
        "interceptTime": cfg.intercept_time,
        "leadTime": cfg.lead_time,
        "observationTime": cfg.observe_frames * cfg.dt,
        "frames": record.frames,
        "instruction": cfg.instruction,
        "config": cfg.to_dict(),
    }


def episode_dirname(episode_id: int) -> str:
    return f"episode_{episode_id}"


def record_episode(
    record: EpisodeRecord, root: Path, camera: Camera = DEFAULT_CAMERA
) -> Path:
    """Write one episode archive atomically; returns the episode directory.

    An existing archive for the same id is replaced.  The temp directory
    lives next to the target so the final rename stays on one filesystem.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    final = root / episode_dirname(record.config.episode_id)
    tmp = root / f".{final.name}.tmp-{uuid.uuid4().hex}"
    tmp.mkdir()
    try:
        (tmp / META_NAME).write_text(json.dumps(_meta_payload(record), indent=2))
        for t in range(record.frames):
            payload = {
                "frame": t,
                "transforms": _frame_transforms(record, t, camera),
                "img": None,
                "state": _frame_state(record, t),
            }
            (tmp / FRAME_NAME.format(t)).write_text(json.dumps(payload))
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    return final


def read_episode(path: Path) -> EpisodeRecord:
    """Rebuild an EpisodeRecord from an archive directory.

    Raises ArchiveError on missing meta, gaps in the frame sequence, or
    frames that do not parse back into a valid hand state.
    """
    path = Path(path)
    meta_file = path / META_NAME
    if not meta_file.is_file():
        raise ArchiveError(f"{path}: missing {META_NAME}")
    meta = json.loads(meta_file.read_text())
    config = EpisodeConfig.from_dict(meta["config"])

    frame_files = sorted(path.glob("joints_*.json"))
    record = EpisodeRecord(config=config)
    for t, frame_file in enumerate(frame_files):
        if frame_file.name != FRAME_NAME.format(t):
            raise ArchiveError(f"{path}: frame files not consecutive at {frame_file.name}")
        payload = json.loads(frame_file.read_text())
        state = payload["state"]
        palm = Vec3(*state["palm"])
        joints = tuple(state["joints"])
        HandState(palm, joints)  # validates joint count
        record.times.append(state["time"])
        record.palm.append(palm)
        record.joints.append(joints)
        record.target.append(Vec3(*state["target"]))
        record.actions.append(Action.from_vector(state["action"]))
        record.phases.append(state["phase"])
        record.attached.append(state["attached"])
        cam = state["camera"]
        record.camera.append(CameraObs(cam["u"], cam["v"], cam["depth"], cam["visible"]))
    if record.frames == 0:
        raise ArchiveError(f"{path}: no frame files")
    if record.frames != config.frames:
        raise ArchiveError(
            f"{path}: {record.frames} frame files for a {config.frames}-frame episode"
        )
    return record


def read_corpus(root: Path) -> List[EpisodeRecord]:
    """All archives under root, ordered by episode id."""
    root = Path(root)
    dirs = [p for p in root.iterdir() if p.is_dir() and p.name.startswith("episode_")]
    dirs.sort(key=lambda p: int(p.name.split("_", 1)[1]))
    return [read_episode(p) for p in dirs]


# ---------------------------------------------------------------------------
# Action statistics


@dataclass(frozen=True)
class ActionStats:
    """Per-dimension order statistics plus fixed-bin histograms."""

    mins: Tuple[float, ...]
    maxs: Tuple[float, ...]
    q01: Tuple[float, ...]
    q99: Tuple[float, ...]
    histograms: Tuple[Tuple[Tuple[float, ...], Tuple[int, ...]], ...]  # (edges, counts)

    def __post_init__(self) -> None:
        for lo, q1, q9, hi in zip(self.mins, self.q01, self.q99, self.maxs):
            if not lo <= q1 <= q9 <= hi:
                raise ValueError("quantiles must satisfy min <= q01 <= q99 <= max")

    def to_dict(self) -> dict:
        return {
            "mins": list(self.mins),
            "maxs": list(self.maxs),
            "q01": list(self.q01),
            "q99": list(self.q99),
            "histograms": [
                {"edges": list(e), "counts": list(c)} for e, c in self.histograms
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "ActionStats":
        return ActionStats(
            mins=tuple(d["mins"]),
            maxs=tuple(d["maxs"]),
            q01=tuple(d["q01"]),
            q99=tuple(d["q99"]),
            histograms=tuple(
                (tuple(h["edges"]), tuple(h["counts"])) for h in d["histograms"]
            ),
        )


def nearest_rank(sorted_vals: Sequence[float], pct: int) -> float:
    """Nearest-rank percentile over an ascending sequence, exact in int math."""
    n = len(sorted_vals)
    if n == 0:
        raise ValueError("empty sample")
    idx = min((n * pct + 99) // 100, n - 1)
    return sorted_vals[idx]


def _histogram(vals: Sequence[float], lo: float, hi: float, bins: int):
    if hi <= lo:
        return (lo, hi), (len(vals),)
    width = (hi - lo) / bins
    counts = [0] * bins
    for v in vals:
        k = int((v - lo) / width)
        if k >= bins:  # the max lands on the closing edge
            k = bins - 1
        counts[k] += 1
    edges = tuple(lo + width * i for i in range(bins + 1))
    return edges, tuple(counts)


def compute_action_stats(records: Sequence[EpisodeRecord], bins: int = HISTOGRAM_BINS) -> ActionStats:
    if not records:
        raise ValueError("action stats need at least one episode")
    pooled: List[List[float]] = [[] for _ in range(ACTION_DIMS)]
    for rec in records:
        for act in rec.actions:
            for d, v in enumerate(act.to_vector()):
                pooled[d].append(v)
    mins, maxs, q01s, q99s, hists = [], [], [], [], []
    for vals in pooled:
        vals.sort()
        mins.append(vals[0])
        maxs.append(vals[-1])
        q01s.append(nearest_rank(vals, 1))
        q99s.append(nearest_rank(vals, 99))
        hists.append(_histogram(vals, vals[0], vals[-1], bins))
    return ActionStats(tuple(mins), tuple(maxs), tuple(q01s), tuple(q99s), tuple(hists))


def write_action_stats(stats: ActionStats, out_dir: Path) -> Tuple[Path, Path]:
    """Dump stats as JSON plus a flat CSV of all per-dimension histograms."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats_file = out_dir / "action_stats.json"
    stats_file.write_text(json.dumps(stats.to_dict(), indent=2))
    hist_file = out_dir / "action_histograms.csv"
    lines = ["dim,bin_lo,bin_hi,count"]
    for d, (edges, counts) in enumerate(stats.histograms):
        if len(edges) == 2 and len(counts) == 1:
            lines.append(f"{d},{edges[0]!r},{edges[1]!r},{counts[0]}")
            continue
        for k, count in enumerate(counts):
            lines.append(f"{d},{edges[k]!r},{edges[k + 1]!r},{count}")
    hist_file.write_text("\n".join(lines) + "\n")
    return stats_file, hist_file


# ---------------------------------------------------------------------------
# Outlier filtering


@dataclass(frozen=True)
class Rejection:
    episode_id: int
    rule: str  # saturation | discontinuity | invalid
    detail: str


def _finite(x: float) -> bool:
    return math.isfinite(x)


def _invalid_reason(rec: EpisodeRecord) -> Optional[str]:
    n = rec.frames
    streams = (rec.times, rec.joints, rec.target, rec.actions, rec.phases, rec.attached, rec.camera)
    if n == 0:
        return "no frames"
    if any(len(s) != n for s in streams):
        return "stream length mismatch"
    if rec.config.frames != n:
        return f"{n} frames logged, config says {rec.config.frames}"
    for t in range(n):
        vals = [*rec.palm[t], *rec.joints[t], *rec.target[t], rec.times[t]]
        if not all(_finite(v) for v in vals):
            return f"non-finite value at frame {t}"
        if any(q < -1e-9 or q > math.pi / 2 + 1e-9 for q in rec.joints[t]):
            return f"joint outside [0, pi/2] at frame {t}"
    if any(b - a < -1e-12 for a, b in zip(rec.times, rec.times[1:])):
        return "timestamps decrease"
    return None


def _saturation_fraction(rec: EpisodeRecord) -> float:
    cfg = rec.config
    hot = 0
    for act in rec.actions:
        palm_hot = act.d_palm.norm() >= cfg.loc_cap - 1e-9
        joint_hot = any(abs(q) >= cfg.gras_cap - 1e-9 for q in act.d_joints)
        if palm_hot or joint_hot:
            hot += 1
    return hot / len(rec.actions) if rec.actions else 0.0


def _discontinuity(rec: EpisodeRecord) -> Optional[str]:
    # Displacement between consecutive logged samples may not exceed what
    # the caps allow over the recorded interval; stalls (dt = 0) must
    # duplicate the sample exactly.
    cfg = rec.config
    for t in range(1, rec.frames):
        span = rec.times[t] - rec.times[t - 1]
        ratio = span / cfg.dt
        if dist(rec.palm[t], rec.palm[t - 1]) > cfg.loc_cap * ratio + 1e-9:
            return f"palm jump at frame {t}"
        for a, b in zip(rec.joints[t - 1], rec.joints[t]):
            if abs(b - a) > cfg.gras_cap * ratio + 1e-9:
                return f"joint jump at frame {t}"
    return None


def _clip_actions(rec: EpisodeRecord, lo: Sequence[float], hi: Sequence[float]) -> EpisodeRecord:
    out = EpisodeRecord.from_dict(rec.to_dict())
    out.actions = [
        Action.from_vector([min(hi[d], max(lo[d], v)) for d, v in enumerate(a.to_vector())])
        for a in rec.actions
    ]
    return out


def filter_outliers(
    records: Sequence[EpisodeRecord],
    stats: ActionStats,
    margin_scale: float = DEFAULT_MARGIN_SCALE,
) -> Tuple[List[EpisodeRecord], List[Rejection]]:
    """Clip per-sample action values into the robust range and drop broken episodes.

    Returns (kept records with clipped actions, rejection log).  Applying
    the same pass again with the same stats is a no-op.
    """
    margin = [margin_scale * (q9 - q1) for q1, q9 in zip(stats.q01, stats.q99)]
    lo = [q1 - m for q1, m in zip(stats.q01, margin)]
    hi = [q9 + m for q9, m in zip(stats.q99, margin)]

    kept: List[EpisodeRecord] = []
    rejected: List[Rejection] = []
    for rec in records:
        eid = rec.config.episode_id
        reason = _invalid_reason(rec)
        if reason is not None:
            rejected.append(Rejection(eid, "invalid", reason))
            continue
        frac = _saturation_fraction(rec)
        if frac >= SATURATION_FRACTION:
            rejected.append(Rejection(eid, "saturation", f"{frac:.2f} of frames at caps"))
            continue
        reason = _discontinuity(rec)
        if reason is not None:
            rejected.append(Rejection(eid, "discontinuity", reason))
            continue
        kept.append(_clip_actions(rec, lo, hi))
    return kept, rejected


# ---------------------------------------------------------------------------
# Batch collection


def _collect_one(
    root: Path,
    index: int,
    sub_name: str,
    ep_seed: int,
    *,
    retries: int,
    jitter: bool,
    frames: Optional[int],
    observe_frames: Optional[int],
    cat,
) -> dict:
    """Build, run, and archive one planned episode, retrying in place."""
    entry = {"episode_id": index, "subcategory": sub_name, "seed": ep_seed}
    last_error = ""
    for attempt in range(1, retries + 1):
        target_dir = root / episode_dirname(index)
        if target_dir.exists():
            shutil.rmtree(target_dir)  # clear partial output before re-running
        try:
            cfg = build_episode(
                sub_name,
                ep_seed,
                frames=frames,
                observe_frames=observe_frames,
                jitter=jitter,
                episode_id=index,
                catalog=cat,
            )
            rec = run_gt_episode(cfg)
            record_episode(rec, root)
        except (CatalogError, InfeasiblePlanError) as exc:
            last_error = str(exc)
            continue
        entry.update(
            status="ok",
            attempts=attempt,
            path=episode_dirname(index),
            frames=rec.frames,
            periodicity=PERIODICITY[cfg.family()],
            duration_bucket=duration_bucket(rec.frames),
            length_bucket=length_bucket(rec.target_path_length()),
        )
        return entry
    entry.update(status="failed", attempts=retries, error=last_error)
    return entry


def collect_dataset(
    root: Path,
    count: int,
    seed: int,
    *,
    selection: Optional[str] = None,
    retries: int = 3,
    jitter: bool = False,
    frames: Optional[int] = None,
    observe_frames: Optional[int] = None,
    catalog=None,
    workers: int = 1,
) -> dict:
    """Run the expert over a catalog draw and archive everything.

    selection picks one subcategory; None spreads episodes over the whole
    catalog by declared weights.  A failing episode is cleared and retried
    up to `retries` times on the same configuration, then recorded as a
    failure in the manifest.  The manifest carries no timestamps and each
    episode's bytes depend only on its own plan slot, so the same
    arguments reproduce it byte-for-byte at any worker count.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cat = catalog if catalog is not None else load_catalog()
    if selection is not None:
        plan = [(selection, seed + i) for i in range(count)]
    else:
        plan = corpus_plan(seed, count, cat)

    def job(item):
        i, (sub_name, ep_seed) = item
        return _collect_one(
            root,
            i,
            sub_name,
            ep_seed,
            retries=retries,
            jitter=jitter,
            frames=frames,
            observe_frames=observe_frames,
            cat=cat,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(job, enumerate(plan)))
    else:
        episodes = [job(item) for item in enumerate(plan)]
    ok = sum(1 for e in episodes if e["status"] == "ok")

    manifest = {
        "schema": "dynahoi-corpus-v1",
        "seed": seed,
        "count": count,
        "selection": selection,
        "jitter": jitter,
        "ok": ok,
        "failed": count - ok,
        "episodes": episodes,
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
