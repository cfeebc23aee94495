"""Hierarchical task metrics and stratified aggregation.

Localization asks whether the palm ever came within a threshold of the
object center; grasping, judged only at the first localization-success
frame, asks whether every joint rotated in the ground-truth direction by
at least 0.9 of the reference magnitude.  Continuous companions E_loc
and E_gra record the best distances achieved regardless of success.

Trajectory quality covers the approach: Q_smooth = 1/(1 + CV) over
consecutive palm step lengths (population standard deviation, CV
defined as 0 for an all-zero track) and Q_line = mean cosine between
each step and the net displacement (0 for a closed track; zero-length
steps contribute 0).  R_time = 1 - T/N rewards early completion and is
0 when the task never completes.

The per-frame analysis re-judges the grasp rule at every frame and asks
how many fingers hold; loose/medium/strict demand 3/4/5 of them.  A
finger "holds" when its three joints pass the sign + 0.9x rule, or
under the alternative geometric interpretation, when its tip touches
the object; the joint rule is the reported default.

All functions are pure; evaluating the same record twice produces an
identical report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .engine import EpisodeRecord
from .geometry import Vec3, dist
from .kinematics import (
    FINGER_COUNT,
    JOINTS_PER_FINGER,
    contact_test,
    fingertip_positions,
    surface_distance,
)

LOOSE, MEDIUM, STRICT = "loose", "medium", "strict"
_LEVEL_FINGERS = {LOOSE: 3, MEDIUM: 4, STRICT: 5}

DURATION_BUCKETS = ((20, 40), (40, 60), (60, 80), (80, 120))
LENGTH_BUCKETS = ((0.0, 0.5), (0.5, 2.0), (2.0, 4.0))

PERIODICITY = {
    "circular_arc": "circular",
    "simple_harmonic": "periodic",
    "pendulum": "periodic",
    "straight_line": "linear",
    "projectile": "linear",
    "inclined_rolling": "linear",
    "impact_response": "impact",
    "hybrid": "hybrid",
}


# ---------------------------------------------------------------------------
# Trajectory quality


def q_smooth(points: Sequence[Vec3]) -> float:
    if len(points) < 2:
        raise ValueError("need at least two positions")
    steps = [dist(a, b) for a, b in zip(points, points[1:])]
    mu = sum(steps) / len(steps)
    if mu == 0.0:
        return 1.0
    var = sum((d - mu) ** 2 for d in steps) / len(steps)
    cv = math.sqrt(var) / mu
    return 1.0 / (1.0 + cv)


def q_line(points: Sequence[Vec3]) -> float:
    if len(points) < 2:
        raise ValueError("need at least two positions")
    net = points[-1] - points[0]
    span = net.norm()
    if span == 0.0:
        return 0.0
    v_hat = net.scale(1.0 / span)
    total = 0.0
    count = 0
    for a, b in zip(points, points[1:]):
        step = b - a
        n = step.norm()
        total += 0.0 if n == 0.0 else step.scale(1.0 / n).dot(v_hat)
        count += 1
    return total / count


def r_time(total_frames: int, completion_frame: Optional[int]) -> float:
    """completion_frame is 1-based; None means the task never completed."""
    if completion_frame is None:
        return 0.0
    if not 1 <= completion_frame <= total_frames:
        raise ValueError(f"completion frame {completion_frame} outside [1, {total_frames}]")
    return 1.0 - completion_frame / total_frames


def move_segment(record: EpisodeRecord) -> List[int]:
    """Palm indices covering the approach.

    Oracle-style records mark their Move phase explicitly; the segment is
    that contiguous run plus the arrival frame.  Records without phase
    marks (wire policies) fall back to observation end through the
    attachment frame, or episode end when never attached.
    """
    idx = [i for i, p in enumerate(record.phases) if p == "move"]
    if idx:
        return list(range(idx[0], min(idx[-1] + 1, record.frames - 1) + 1))
    start = min(record.config.observe_frames, record.frames - 2)
    end = record.attach_frame
    if end is None or end <= start:
        end = record.frames - 1
    return list(range(start, end + 1))


# ---------------------------------------------------------------------------
# Localization / grasping


def localization(
    record: EpisodeRecord, threshold: float
) -> Tuple[bool, float, Optional[int]]:
    distances = record.palm_object_distances()
    e_loc = min(distances)
    first = None
    for i, d in enumerate(distances):
        if d <= threshold:
            first = i
            break
    return e_loc <= threshold, e_loc, first


def grasp_reference(gt_record: EpisodeRecord, eval_frame: int) -> Tuple[float, ...]:
    """Reference joint deltas, clamped to the record's last frame."""
    f = min(eval_frame, gt_record.frames - 1)
    base = gt_record.joints[0]
    return tuple(q - q0 for q, q0 in zip(gt_record.joints[f], base))


def joint_rule(pred: Sequence[float], gt: Sequence[float]) -> bool:
    """sign(pred) = sign(gt) and |pred| >= 0.9|gt|, inclusive; gt = 0 auto-passes."""
    for p, g in zip(pred, gt):
        if g == 0.0:
            continue
        if p * g <= 0.0:
            return False
        if abs(p) < 0.9 * abs(g):
            return False
    return True


def e_grasp(record: EpisodeRecord) -> float:
    """Closest any fingertip ever came to the object surface."""
    model = record.config.hand
    obj = record.config.obj
    best = math.inf
    for f in range(record.frames):
        shape = obj.at(record.target[f])
        state = record.hand_state(f)
        for tip in fingertip_positions(model, state):
            d = max(surface_distance(shape, tip), 0.0)
            if d < best:
                best = d
    return best


def grasping(
    record: EpisodeRecord,
    gt_grasp: Sequence[float],
    eval_frame: Optional[int],
    localized: bool,
) -> Tuple[bool, float]:
    e_gra = e_grasp(record)
    if not localized:
        return False, e_gra
    if eval_frame is None:
        raise ValueError("localization succeeded but no eval frame was given")
    pred = grasp_reference(record, eval_frame)
    return joint_rule(pred, gt_grasp), e_gra


def _fingers_holding_joint_rule(
    joints: Sequence[float], base: Sequence[float], gt_grasp: Sequence[float]
) -> int:
    held = 0
    for f in range(FINGER_COUNT):
        lo = f * JOINTS_PER_FINGER
        hi = lo + JOINTS_PER_FINGER
        pred = [joints[i] - base[i] for i in range(lo, hi)]
        if joint_rule(pred, gt_grasp[lo:hi]):
            held += 1
    return held


def per_frame_grasp_rate(
    record: EpisodeRecord,
    gt_grasp: Sequence[float],
    level: str,
    mode: str = "joints",
) -> float:
    """Fraction of frames with at least {3,4,5} fingers holding."""
    need = _LEVEL_FINGERS[level]
    base = record.joints[0]
    good = 0
    for f in range(record.frames):
        if mode == "joints":
            held = _fingers_holding_joint_rule(record.joints[f], base, gt_grasp)
        elif mode == "contact":
            shape = record.config.obj.at(record.target[f])
            held = sum(contact_test(record.config.hand, record.hand_state(f), shape))
        else:
            raise ValueError(f"unknown mode: {mode}")
        if held >= need:
            good += 1
    return good / record.frames


# ---------------------------------------------------------------------------
# Episode report


@dataclass(frozen=True)
class MetricsReport:
    episode_id: int
    subcategory: str
    threshold: float
    s_loc: bool
    e_loc: float
    f_loc: Optional[int]
    s_gra: bool
    e_gra: float
    q_smooth: float
    q_line: float
    r_time: float
    rate_loose: float
    rate_medium: float
    rate_strict: float
    periodicity: str
    duration_bucket: str
    length_bucket: str

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "subcategory": self.subcategory,
            "threshold": self.threshold,
            "s_loc": self.s_loc,
            "e_loc": self.e_loc,
            "f_loc": self.f_loc,
            "s_gra": self.s_gra,
            "e_gra": self.e_gra,
            "q_smooth": self.q_smooth,
            "q_line": self.q_line,
            "r_time": self.r_time,
            "rate_loose": self.rate_loose,
            "rate_medium": self.rate_medium,
            "rate_strict": self.rate_strict,
            "periodicity": self.periodicity,
            "duration_bucket": self.duration_bucket,
            "length_bucket": self.length_bucket,
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        return MetricsReport(**d)


def duration_bucket(frames: int) -> str:
    if frames < DURATION_BUCKETS[0][0]:
        return f"<{DURATION_BUCKETS[0][0]}"
    for lo, hi in DURATION_BUCKETS:
        if lo <= frames < hi:
            return f"{lo}-{hi}"
    return f">{DURATION_BUCKETS[-1][1]}"


def length_bucket(path_length: float) -> str:
    for lo, hi in LENGTH_BUCKETS:
        if lo <= path_length < hi:
            return f"{lo:g}-{hi:g}"
    return f">{LENGTH_BUCKETS[-1][1]:g}"


def evaluate_record(
    record: EpisodeRecord,
    gt_record: Optional[EpisodeRecord] = None,
    threshold: Optional[float] = None,
) -> MetricsReport:
    """Score one record against a ground-truth reference.

    With no reference the record judges itself, which is how the oracle's
    own corpus reproduces a perfect grasp row.  The grasp reference is
    read from the reference record at the evaluated record's first
    localization-success frame, so both sides are compared at the same
    moment of the task.
    """
    cfg = record.config
    thr = cfg.loc_threshold if threshold is None else threshold
    ref = gt_record if gt_record is not None else record

    s_loc, e_loc, f_loc = localization(record, thr)
    gt_vec = grasp_reference(ref, f_loc if f_loc is not None else ref.frames - 1)
    s_gra, e_gra = grasping(record, gt_vec, f_loc, s_loc)

    seg = move_segment(record)
    pts = [record.palm[i] for i in seg]
    completion = (f_loc + 1) if (s_gra and f_loc is not None) else None

    final_ref = grasp_reference(ref, ref.frames - 1)
    return MetricsReport(
        episode_id=cfg.episode_id,
        subcategory=cfg.subcategory,
        threshold=thr,
        s_loc=s_loc,
        e_loc=e_loc,
        f_loc=f_loc,
        s_gra=s_gra,
        e_gra=e_gra,
        q_smooth=q_smooth(pts),
        q_line=q_line(pts),
        r_time=r_time(record.frames, completion),
        rate_loose=per_frame_grasp_rate(record, final_ref, LOOSE),
        rate_medium=per_frame_grasp_rate(record, final_ref, MEDIUM),
        rate_strict=per_frame_grasp_rate(record, final_ref, STRICT),
        periodicity=PERIODICITY[cfg.family()],
        duration_bucket=duration_bucket(record.frames),
        length_bucket=length_bucket(record.target_path_length()),
    )


# ---------------------------------------------------------------------------
# Corpus aggregation


_MEAN_FIELDS = (
    "e_loc",
    "e_gra",
    "q_smooth",
    "q_line",
    "r_time",
    "rate_loose",
    "rate_medium",
    "rate_strict",
)


def aggregate(reports: Sequence[MetricsReport]) -> Dict[str, float]:
    """Corpus-level means; success fields become fractions.

    Continuous E_loc/E_gra aggregate as plain means.
    """
    if not reports:
        return {"count": 0}
    out: Dict[str, float] = {"count": len(reports)}
    out["s_loc"] = sum(1 for r in reports if r.s_loc) / len(reports)
    out["s_gra"] = sum(1 for r in reports if r.s_gra) / len(reports)
    for field in _MEAN_FIELDS:
        out[field] = sum(getattr(r, field) for r in reports) / len(reports)
    return out


def stratify(reports: Sequence[MetricsReport]) -> Dict[str, Dict[str, Dict[str, float]]]:
    """Group-by aggregates along each reporting dimension."""
    out: Dict[str, Dict[str, Dict[str, float]]] = {}
    for dim in ("periodicity", "duration_bucket", "length_bucket"):
        groups: Dict[str, List[MetricsReport]] = {}
        for r in reports:
            groups.setdefault(getattr(r, dim), []).append(r)
        out[dim] = {key: aggregate(group) for key, group in sorted(groups.items())}
    return out
