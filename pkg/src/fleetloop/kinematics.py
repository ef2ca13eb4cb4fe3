"""Lane geometry, world <-> Frenet conversion and lane-frame kinematics.

Lanes are piecewise-linear centerlines. Frenet coordinates are ``(s, d)``:
arclength along the centerline and signed lateral offset, positive to the
left of the driving direction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DEFAULT_CAPTURE_DISTANCE = 20.0
MAX_ACCELERATION = 8.0


class OffLaneError(ValueError):
    """Pose is farther from the centerline than the capture distance."""


class LaneRangeError(ValueError):
    """Arclength outside ``[0, lane.length]``."""


def normalize_angle(angle: float) -> float:
    """Wrap an angle to ``(-pi, pi]``."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class WorldPose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True, slots=True)
class FrenetPose:
    s: float
    d: float

    def __add__(self, other: "FrenetPose") -> "FrenetPose":
        return FrenetPose(self.s + other.s, self.d + other.d)

    def __sub__(self, other: "FrenetPose") -> "FrenetPose":
        return FrenetPose(self.s - other.s, self.d - other.d)


ORIGIN = FrenetPose(0.0, 0.0)


@dataclass(frozen=True, eq=False)
class LaneGeometry:
    """Piecewise-linear lane centerline.

    ``points`` is an ``(n, 2)`` array of world coordinates in meters and
    ``arclength`` the cumulative distance at each point (starting at 0).
    """

    points: np.ndarray
    arclength: np.ndarray = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("lane needs at least two 2-D centerline points")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("consecutive centerline points must be distinct")
        pts.setflags(write=False)
        arc = np.concatenate(([0.0], np.cumsum(seg_len)))
        arc.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "arclength", arc)

    @classmethod
    def straight(cls, length: float = 1e6) -> "LaneGeometry":
        """Lane along the world x-axis starting at the origin."""
        return cls(np.array([[0.0, 0.0], [length, 0.0]]))

    @classmethod
    def from_csv(cls, path) -> "LaneGeometry":
        """Read a centerline CSV with header ``x,y``."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected header 'x,y'")
            pts = [(float(row["x"]), float(row["y"])) for row in reader]
        return cls(np.array(pts))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for x, y in self.points:
                writer.writerow([repr(float(x)), repr(float(y))])

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    def __eq__(self, other):
        if not isinstance(other, LaneGeometry):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class VehicleState:
    id: str
    pose: WorldPose
    v_lon: float = 0.0
    v_lat: float = 0.0
    a_lon: float = 0.0
    a_lat: float = 0.0
    timestamp: float = 0.0

    def __post_init__(self):
        for name in ("v_lon", "v_lat", "a_lon", "a_lat"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def _project(x: float, y: float, lane: LaneGeometry):
    """Nearest centerline point. Returns (segment index, fraction, distance)."""
    a = lane.points[:-1]
    seg = lane.points[1:] - a
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    rel = np.array([x, y]) - a
    t = np.clip(np.einsum("ij,ij->i", rel, seg) / seg_len2, 0.0, 1.0)
    foot = a + seg * t[:, None]
    dist = np.hypot(x - foot[:, 0], y - foot[:, 1])
    # argmin returns the first minimum: ties at corners go to the lower arclength
    i = int(np.argmin(dist))
    return i, float(t[i]), float(dist[i])


def to_frenet(
    pose: WorldPose,
    lane: LaneGeometry,
    capture_distance: float = DEFAULT_CAPTURE_DISTANCE,
) -> FrenetPose:
    """Project a world pose onto the lane centerline."""
    i, t, dist = _project(pose.x, pose.y, lane)
    if dist > capture_distance:
        raise OffLaneError(
            f"pose ({pose.x}, {pose.y}) is {dist:.3f} m from the centerline "
            f"(capture distance {capture_distance} m)"
        )
    p0, p1 = lane.points[i], lane.points[i + 1]
    seg_len = lane.arclength[i + 1] - lane.arclength[i]
    tx, ty = (p1 - p0) / seg_len
    rx, ry = pose.x - p0[0], pose.y - p0[1]
    s = float(lane.arclength[i] + t * seg_len)
    d = tx * ry - ty * rx
    return FrenetPose(s, float(d))


def lane_heading(s: float, lane: LaneGeometry) -> float:
    i = _segment_at(s, lane)
    dx, dy = lane.points[i + 1] - lane.points[i]
    return math.atan2(dy, dx)


def _segment_at(s: float, lane: LaneGeometry) -> int:
    if not 0.0 <= s <= lane.length:
        raise LaneRangeError(f"s={s} outside [0, {lane.length}]")
    i = int(np.searchsorted(lane.arclength, s, side="right")) - 1
    return min(max(i, 0), len(lane.points) - 2)


def from_frenet(fp: FrenetPose, lane: LaneGeometry, heading: float = 0.0) -> WorldPose:
    """World pose for lane coordinates; ``heading`` is relative to the lane."""
    i = _segment_at(fp.s, lane)
    p0, p1 = lane.points[i], lane.points[i + 1]
    seg_len = lane.arclength[i + 1] - lane.arclength[i]
    tx, ty = (p1 - p0) / seg_len
    along = fp.s - lane.arclength[i]
    x = p0[0] + tx * along - ty * fp.d
    y = p0[1] + ty * along + tx * fp.d
    return WorldPose(float(x), float(y), math.atan2(ty, tx) + heading)


def integrate(pos: float, vel: float, acc: float, dt: float) -> tuple[float, float]:
    """Exact constant-acceleration update of one coordinate."""
    return pos + vel * dt + 0.5 * acc * dt * dt, vel + acc * dt


def clamp_acceleration(a):
    return np.clip(a, -MAX_ACCELERATION, MAX_ACCELERATION)


def step_state(
    state: VehicleState,
    a_lon: float,
    a_lat: float,
    dt: float,
    lane: Optional[LaneGeometry] = None,
) -> VehicleState:
    """Advance a vehicle by ``dt`` under constant commanded acceleration.

    Integration happens in lane coordinates. Without a lane, the pose's
    world x/y are taken as lane coordinates of a straight x-axis lane.
    Accelerations are clamped to +/- ``MAX_ACCELERATION``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a_lon = float(clamp_acceleration(a_lon))
    a_lat = float(clamp_acceleration(a_lat))
    if lane is None:
        s, d = state.pose.x, state.pose.y
    else:
        fp = to_frenet(state.pose, lane)
        s, d = fp.s, fp.d
    s, v_lon = integrate(s, state.v_lon, a_lon, dt)
    d, v_lat = integrate(d, state.v_lat, a_lat, dt)
    if v_lon == 0.0 and v_lat == 0.0:
        rel_heading = state.pose.heading if lane is None else 0.0
    else:
        rel_heading = math.atan2(v_lat, v_lon)
    if lane is None:
        pose = WorldPose(s, d, rel_heading)
    else:
        pose = from_frenet(FrenetPose(s, d), lane, rel_heading)
    return replace(
        state,
        pose=pose,
        v_lon=v_lon,
        v_lat=v_lat,
        a_lon=a_lon,
        a_lat=a_lat,
        timestamp=state.timestamp + dt,
    )


def load_lane(path: Optional[str | Path]) -> LaneGeometry:
    return LaneGeometry.straight() if path is None else LaneGeometry.from_csv(path)


def polyline(points: Sequence[Sequence[float]]) -> LaneGeometry:
    return LaneGeometry(np.asarray(points, dtype=float))
