"""Parametric moving-target generators.

Eight trajectory families share one tiny protocol: ``position_at(t)`` /
``velocity_at(t)`` with t in seconds from episode start.  Generators are
pure and deterministic; repeated queries at the same t return bitwise
identical values.  Randomness lives entirely in the catalog sampling
layer, never here.

Closed-form families evaluate directly.  The pendulum integrates the
nonlinear equation theta'' = -(g/L) sin(theta) with fixed-substep RK4 and
caches per-frame checkpoints so arbitrary-time queries stay O(substeps
per frame).  Bouncing motion precomputes its analytic impact schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Type

from .geometry import GRAVITY, Vec3

_EPS = 1e-12


@dataclass(frozen=True)
class StraightLine:
    family = "straight_line"
    start: Vec3
    velocity: Vec3

    def position_at(self, t: float) -> Vec3:
        return self.start + self.velocity.scale(t)

    def velocity_at(self, t: float) -> Vec3:
        return self.velocity


@dataclass(frozen=True)
class SimpleHarmonic:
    """Sinusoidal oscillation of given amplitude along a fixed axis."""

    family = "simple_harmonic"
    center: Vec3
    axis: Vec3  # unit
    amplitude: float
    omega: float  # rad/s
    phase: float = 0.0

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def position_at(self, t: float) -> Vec3:
        s = self.amplitude * math.sin(self.omega * t + self.phase)
        return self.center + self.axis.scale(s)

    def velocity_at(self, t: float) -> Vec3:
        s = self.amplitude * self.omega * math.cos(self.omega * t + self.phase)
        return self.axis.scale(s)


@dataclass(frozen=True)
class CircularArc:
    """Constant angular rate motion on a circle spanned by the orthonormal
    pair (u1, u2)."""

    family = "circular_arc"
    center: Vec3
    u1: Vec3
    u2: Vec3
    radius: float
    omega: float  # signed rad/s
    phase: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.u1.norm() - 1.0) > 1e-9 or abs(self.u2.norm() - 1.0) > 1e-9:
            raise ValueError("u1/u2 must be unit vectors")
        if abs(self.u1.dot(self.u2)) > 1e-9:
            raise ValueError("u1/u2 must be orthogonal")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / abs(self.omega)

    def position_at(self, t: float) -> Vec3:
        a = self.phase + self.omega * t
        return (
            self.center
            + self.u1.scale(self.radius * math.cos(a))
            + self.u2.scale(self.radius * math.sin(a))
        )

    def velocity_at(self, t: float) -> Vec3:
        a = self.phase + self.omega * t
        rw = self.radius * self.omega
        return self.u1.scale(-rw * math.sin(a)) + self.u2.scale(rw * math.cos(a))


@dataclass(frozen=True)
class Projectile:
    """Ballistic free flight launched with speed / elevation / azimuth."""

    family = "projectile"
    start: Vec3
    speed: float
    elevation: float  # rad above horizontal
    azimuth: float = 0.0  # rad in the XZ plane, 0 = +X

    def _v0(self) -> Vec3:
        vh = self.speed * math.cos(self.elevation)
        return Vec3(
            vh * math.cos(self.azimuth),
            self.speed * math.sin(self.elevation),
            vh * math.sin(self.azimuth),
        )

    def position_at(self, t: float) -> Vec3:
        v = self._v0()
        return Vec3(
            self.start.x + v.x * t,
            self.start.y + v.y * t - 0.5 * GRAVITY * t * t,
            self.start.z + v.z * t,
        )

    def velocity_at(self, t: float) -> Vec3:
        v = self._v0()
        return Vec3(v.x, v.y - GRAVITY * t, v.z)


class Pendulum:
    """Nonlinear pendulum swinging in a vertical plane.

    State (theta, theta_dot) advances by classic RK4 with a fixed 1 ms
    substep; per-frame checkpoints (every 0.05 s) are cached up to
    ``horizon`` seconds at construction so position queries never
    re-integrate from zero.  theta is measured from the straight-down
    rest direction, positive toward ``swing_axis``.
    """

    family = "pendulum"

    SUBSTEP = 1e-3
    CHECKPOINT_DT = 0.05

    def __init__(
        self,
        pivot: Vec3,
        length: float,
        swing_axis: Vec3,
        theta0: float,
        theta_dot0: float = 0.0,
        horizon: float = 10.0,
    ) -> None:
        if length <= 0.0:
            raise ValueError("length must be positive")
        if abs(swing_axis.norm() - 1.0) > 1e-9 or abs(swing_axis.y) > 1e-9:
            raise ValueError("swing_axis must be a horizontal unit vector")
        self.pivot = pivot
        self.length = length
        self.swing_axis = swing_axis
        self.theta0 = theta0
        self.theta_dot0 = theta_dot0
        self.horizon = horizon
        self._checkpoints: List[Tuple[float, float]] = []
        self._build_checkpoints()

    def _accel(self, theta: float) -> float:
        return -(GRAVITY / self.length) * math.sin(theta)

    def _rk4(self, theta: float, theta_dot: float, h: float) -> Tuple[float, float]:
        k1t = theta_dot
        k1v = self._accel(theta)
        k2t = theta_dot + 0.5 * h * k1v
        k2v = self._accel(theta + 0.5 * h * k1t)
        k3t = theta_dot + 0.5 * h * k2v
        k3v = self._accel(theta + 0.5 * h * k2t)
        k4t = theta_dot + h * k3v
        k4v = self._accel(theta + h * k3t)
        return (
            theta + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
            theta_dot + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )

    def _build_checkpoints(self) -> None:
        per_frame = round(self.CHECKPOINT_DT / self.SUBSTEP)
        frames = int(math.ceil(self.horizon / self.CHECKPOINT_DT)) + 1
        th, om = self.theta0, self.theta_dot0
        self._checkpoints.append((th, om))
        for _ in range(frames):
            for _ in range(per_frame):
                th, om = self._rk4(th, om, self.SUBSTEP)
            self._checkpoints.append((th, om))

    def state_at(self, t: float) -> Tuple[float, float]:
        """(theta, theta_dot) at time t, t in [0, horizon]."""
        if t < 0.0 or t > self.horizon + self.CHECKPOINT_DT:
            raise ValueError(f"t={t} outside cached horizon {self.horizon}")
        idx = min(int(t / self.CHECKPOINT_DT), len(self._checkpoints) - 1)
        th, om = self._checkpoints[idx]
        rem = t - idx * self.CHECKPOINT_DT
        if rem <= 0.0:
            return th, om
        n = int(rem / self.SUBSTEP)
        for _ in range(n):
            th, om = self._rk4(th, om, self.SUBSTEP)
        tail = rem - n * self.SUBSTEP
        if tail > 1e-12:
            th, om = self._rk4(th, om, tail)
        return th, om

    def energy_at(self, t: float) -> float:
        """Mechanical energy per unit mass: 0.5 L^2 w^2 - g L cos(theta)."""
        th, om = self.state_at(t)
        return 0.5 * self.length * self.length * om * om - GRAVITY * self.length * math.cos(th)

    def position_at(self, t: float) -> Vec3:
        th, _ = self.state_at(t)
        u = self.swing_axis.scale(self.length * math.sin(th))
        return Vec3(
            self.pivot.x + u.x,
            self.pivot.y - self.length * math.cos(th),
            self.pivot.z + u.z,
        )

    def velocity_at(self, t: float) -> Vec3:
        th, om = self.state_at(t)
        lw = self.length * om
        u = self.swing_axis.scale(lw * math.cos(th))
        return Vec3(u.x, lw * math.sin(th), u.z)


def pendulum_period(length: float, theta_max: float) -> float:
    """Exact period of the swinging nonlinear pendulum (AGM evaluation of
    the complete elliptic integral)."""
    if not 0.0 < theta_max < math.pi:
        raise ValueError("theta_max must be in (0, pi) for a swinging pendulum")
    k = math.sin(0.5 * theta_max)
    a, b = 1.0, math.sqrt(1.0 - k * k)
    while abs(a - b) > 1e-15:
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    big_k = math.pi / (2.0 * a)
    return 4.0 * math.sqrt(length / GRAVITY) * big_k


@dataclass(frozen=True)
class InclinedRolling:
    """Point accelerating down an incline at g sin(alpha).

    downhill_h is the horizontal heading; the actual slope direction tilts
    it down by the incline angle.
    """

    family = "inclined_rolling"
    origin: Vec3
    downhill_h: Vec3  # horizontal unit heading
    incline: float  # rad
    speed0: float

    def __post_init__(self) -> None:
        if abs(self.downhill_h.norm() - 1.0) > 1e-9 or abs(self.downhill_h.y) > 1e-9:
            raise ValueError("downhill_h must be a horizontal unit vector")
        if not 0.0 < self.incline < 0.5 * math.pi:
            raise ValueError("incline must be in (0, pi/2)")

    def _slope_dir(self) -> Vec3:
        c = math.cos(self.incline)
        return Vec3(self.downhill_h.x * c, -math.sin(self.incline), self.downhill_h.z * c)

    def position_at(self, t: float) -> Vec3:
        s = self.speed0 * t + 0.5 * GRAVITY * math.sin(self.incline) * t * t
        return self.origin + self._slope_dir().scale(s)

    def velocity_at(self, t: float) -> Vec3:
        v = self.speed0 + GRAVITY * math.sin(self.incline) * t
        return self._slope_dir().scale(v)


class ImpactResponse:
    """Ballistic flight over a horizontal ground plane with restitution.

    Impact times are quadratic roots, so the whole bounce schedule is
    precomputed analytically up to ``horizon``.  When the rebound apex
    falls under a small height the motion degenerates to sliding along
    the ground at the surviving horizontal velocity (finite-arc cutoff of
    the Zeno accumulation).
    """

    family = "impact_response"

    MIN_APEX = 1e-3

    def __init__(
        self,
        start: Vec3,
        velocity: Vec3,
        ground_y: float,
        restitution: float,
        horizon: float = 10.0,
    ) -> None:
        if start.y < ground_y - 1e-9:
            raise ValueError("start below ground plane")
        if not 0.0 < restitution <= 1.0:
            raise ValueError("restitution must be in (0, 1]")
        self.start = start
        self.velocity = velocity
        self.ground_y = ground_y
        self.restitution = restitution
        self.horizon = horizon
        # (t_start, pos, vel, sliding)
        self.arcs: List[Tuple[float, Vec3, Vec3, bool]] = []
        self._build_arcs()

    def _impact_dt(self, y0: float, vy: float) -> float:
        # first positive root of y0 + vy t - g/2 t^2 = ground
        h = y0 - self.ground_y
        disc = vy * vy + 2.0 * GRAVITY * h
        return (vy + math.sqrt(max(disc, 0.0))) / GRAVITY

    def _build_arcs(self) -> None:
        t, pos, vel = 0.0, self.start, self.velocity
        while t < self.horizon:
            apex = max(vel.y, 0.0) ** 2 / (2.0 * GRAVITY) + (pos.y - self.ground_y)
            if apex < self.MIN_APEX:
                self.arcs.append((t, Vec3(pos.x, self.ground_y, pos.z), Vec3(vel.x, 0.0, vel.z), True))
                return
            self.arcs.append((t, pos, vel, False))
            dt_hit = self._impact_dt(pos.y, vel.y)
            vy_hit = vel.y - GRAVITY * dt_hit
            pos = Vec3(pos.x + vel.x * dt_hit, self.ground_y, pos.z + vel.z * dt_hit)
            vel = Vec3(vel.x, -self.restitution * vy_hit, vel.z)
            t += dt_hit
        # horizon reached mid-flight; final arc already stored

    def _arc_at(self, t: float) -> Tuple[float, Vec3, Vec3, bool]:
        lo, hi = 0, len(self.arcs) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.arcs[mid][0] <= t:
                lo = mid
            else:
                hi = mid - 1
        return self.arcs[lo]

    def position_at(self, t: float) -> Vec3:
        t0, pos, vel, sliding = self._arc_at(t)
        u = t - t0
        if sliding:
            return Vec3(pos.x + vel.x * u, self.ground_y, pos.z + vel.z * u)
        return Vec3(
            pos.x + vel.x * u,
            pos.y + vel.y * u - 0.5 * GRAVITY * u * u,
            pos.z + vel.z * u,
        )

    def velocity_at(self, t: float) -> Vec3:
        t0, _, vel, sliding = self._arc_at(t)
        if sliding:
            return Vec3(vel.x, 0.0, vel.z)
        return Vec3(vel.x, vel.y - GRAVITY * (t - t0), vel.z)


class Hybrid:
    """Sequential composition of family segments.

    Each segment runs for its stated duration in local time; successor
    segments are rigidly shifted so the chain stays position-continuous
    (C0 by construction).  Velocity continuity additionally holds when
    neighbouring segments are built tangent-matched, as the line/arc
    catalog compositions are.
    """

    family = "hybrid"

    def __init__(self, segments: Sequence[Tuple[object, float]]) -> None:
        if not segments:
            raise ValueError("hybrid needs at least one segment")
        self.segments: List[Tuple[object, float]] = [(m, float(d)) for m, d in segments]
        self._starts: List[float] = []
        self._offsets: List[Vec3] = []
        t = 0.0
        offset = Vec3(0.0, 0.0, 0.0)
        prev_end: Vec3 | None = None
        for motion, dur in self.segments:
            if dur <= 0.0:
                raise ValueError("segment duration must be positive")
            if prev_end is not None:
                offset = prev_end - motion.position_at(0.0)
            self._starts.append(t)
            self._offsets.append(offset)
            prev_end = motion.position_at(dur) + offset
            t += dur
        self.duration = t

    def _segment_at(self, t: float) -> Tuple[object, float, Vec3]:
        idx = len(self._starts) - 1
        for i, start in enumerate(self._starts):
            if t < start:
                idx = i - 1
                break
        idx = max(idx, 0)
        motion, dur = self.segments[idx]
        local = t - self._starts[idx]
        if idx == len(self.segments) - 1:
            local = min(local, dur) if t > self.duration else local
        return motion, local, self._offsets[idx]

    def position_at(self, t: float) -> Vec3:
        motion, local, offset = self._segment_at(t)
        return motion.position_at(local) + offset

    def velocity_at(self, t: float) -> Vec3:
        motion, local, _ = self._segment_at(t)
        return motion.velocity_at(local)


def compose_hybrid(segments: Sequence[Tuple[object, float]]) -> Hybrid:
    return Hybrid(segments)


# ---------------------------------------------------------------------------
# Serialization

_FAMILIES: Dict[str, Type] = {
    "straight_line": StraightLine,
    "simple_harmonic": SimpleHarmonic,
    "circular_arc": CircularArc,
    "projectile": Projectile,
    "pendulum": Pendulum,
    "inclined_rolling": InclinedRolling,
    "impact_response": ImpactResponse,
    "hybrid": Hybrid,
}


def _vec(v: Vec3) -> List[float]:
    return [v.x, v.y, v.z]


def motion_to_dict(motion) -> dict:
    fam = motion.family
    if fam == "straight_line":
        return {"family": fam, "start": _vec(motion.start), "velocity": _vec(motion.velocity)}
    if fam == "simple_harmonic":
        return {
            "family": fam,
            "center": _vec(motion.center),
            "axis": _vec(motion.axis),
            "amplitude": motion.amplitude,
            "omega": motion.omega,
            "phase": motion.phase,
        }
    if fam == "circular_arc":
        return {
            "family": fam,
            "center": _vec(motion.center),
            "u1": _vec(motion.u1),
            "u2": _vec(motion.u2),
            "radius": motion.radius,
            "omega": motion.omega,
            "phase": motion.phase,
        }
    if fam == "projectile":
        return {
            "family": fam,
            "start": _vec(motion.start),
            "speed": motion.speed,
            "elevation": motion.elevation,
            "azimuth": motion.azimuth,
        }
    if fam == "pendulum":
        return {
            "family": fam,
            "pivot": _vec(motion.pivot),
            "length": motion.length,
            "swing_axis": _vec(motion.swing_axis),
            "theta0": motion.theta0,
            "theta_dot0": motion.theta_dot0,
            "horizon": motion.horizon,
        }
    if fam == "inclined_rolling":
        return {
            "family": fam,
            "origin": _vec(motion.origin),
            "downhill_h": _vec(motion.downhill_h),
            "incline": motion.incline,
            "speed0": motion.speed0,
        }
    if fam == "impact_response":
        return {
            "family": fam,
            "start": _vec(motion.start),
            "velocity": _vec(motion.velocity),
            "ground_y": motion.ground_y,
            "restitution": motion.restitution,
            "horizon": motion.horizon,
        }
    if fam == "hybrid":
        return {
            "family": fam,
            "segments": [
                {"motion": motion_to_dict(m), "duration": d} for m, d in motion.segments
            ],
        }
    raise ValueError(f"unknown family: {fam}")


def motion_from_dict(d: dict):
    fam = d["family"]
    v = lambda key: Vec3(*d[key])  # noqa: E731
    if fam == "straight_line":
        return StraightLine(v("start"), v("velocity"))
    if fam == "simple_harmonic":
        return SimpleHarmonic(v("center"), v("axis"), d["amplitude"], d["omega"], d["phase"])
    if fam == "circular_arc":
        return CircularArc(v("center"), v("u1"), v("u2"), d["radius"], d["omega"], d["phase"])
    if fam == "projectile":
        return Projectile(v("start"), d["speed"], d["elevation"], d["azimuth"])
    if fam == "pendulum":
        return Pendulum(
            v("pivot"), d["length"], v("swing_axis"), d["theta0"], d["theta_dot0"], d["horizon"]
        )
    if fam == "inclined_rolling":
        return InclinedRolling(v("origin"), v("downhill_h"), d["incline"], d["speed0"])
    if fam == "impact_response":
        return ImpactResponse(v("start"), v("velocity"), d["ground_y"], d["restitution"], d["horizon"])
    if fam == "hybrid":
        return Hybrid([(motion_from_dict(s["motion"]), s["duration"]) for s in d["segments"]])
    raise ValueError(f"unknown family: {fam}")


# ---------------------------------------------------------------------------
# Fourier helpers


@dataclass(frozen=True)
class FourierSeries:
    period: float
    a0: float
    a: Tuple[float, ...]
    b: Tuple[float, ...]


def fourier_fit(samples: Sequence[float], period: float, harmonics: int) -> FourierSeries:
    """Discrete Fourier projection of one uniformly sampled period.

    Requires len(samples) >= 2*harmonics + 1 so the sampled trigonometric
    basis stays orthogonal; the RMS residual is then non-increasing in
    the harmonic count.
    """
    n = len(samples)
    if n < 2 * harmonics + 1:
        raise ValueError(f"need at least {2 * harmonics + 1} samples for K={harmonics}")
    if period <= 0.0:
        raise ValueError("period must be positive")
    a0 = sum(samples) / n
    a: List[float] = []
    b: List[float] = []
    for k in range(1, harmonics + 1):
        ca = 0.0
        cb = 0.0
        for j, x in enumerate(samples):
            ang = 2.0 * math.pi * k * j / n
            ca += x * math.cos(ang)
            cb += x * math.sin(ang)
        a.append(2.0 * ca / n)
        b.append(2.0 * cb / n)
    return FourierSeries(period, a0, tuple(a), tuple(b))


def fourier_eval(series: FourierSeries, t: float) -> float:
    w = 2.0 * math.pi / series.period
    out = series.a0
    for k, (ak, bk) in enumerate(zip(series.a, series.b), start=1):
        out += ak * math.cos(k * w * t) + bk * math.sin(k * w * t)
    return out


def fourier_residual(samples: Sequence[float], period: float, harmonics: int) -> float:
    """RMS reconstruction error of the K-harmonic fit on its own samples."""
    series = fourier_fit(samples, period, harmonics)
    n = len(samples)
    err = 0.0
    for j, x in enumerate(samples):
        r = x - fourier_eval(series, period * j / n)
        err += r * r
    return math.sqrt(err / n)
