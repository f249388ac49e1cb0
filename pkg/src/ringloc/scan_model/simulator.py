"""Deterministic ray-casting LiDAR simulator over worlds of vertical prisms.

Worlds hold axis-aligned-or-rotated boxes and cylinders standing on an
optional ground plane at z = 0.  Every ray is intersected exactly with
every primitive, so the simulator doubles as an analytic oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .types import Pose2, Scan, SensorModel, sort_by_azimuth


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    sx: float
    sy: float
    height: float
    yaw: float = 0.0

    kind = "box"

    def __post_init__(self):
        if min(self.sx, self.sy, self.height) <= 0:
            raise ConfigError(f"box dimensions must be positive: {self}")

    def footprint_radius(self) -> float:
        return 0.5 * math.hypot(self.sx, self.sy)

    def to_line(self) -> str:
        return "box " + " ".join(repr(float(v)) for v in
                                 (self.cx, self.cy, self.sx, self.sy, self.height, self.yaw))


@dataclass(frozen=True)
class Cylinder:
    cx: float
    cy: float
    radius: float
    height: float

    kind = "cylinder"

    def __post_init__(self):
        if min(self.radius, self.height) <= 0:
            raise ConfigError(f"cylinder dimensions must be positive: {self}")

    def footprint_radius(self) -> float:
        return self.radius

    def to_line(self) -> str:
        return "cylinder " + " ".join(repr(float(v)) for v in
                                      (self.cx, self.cy, self.radius, self.height))


@dataclass(frozen=True)
class SyntheticWorld:
    landmarks: tuple = ()
    ground: bool = True
    bounds: tuple = (-50.0, -50.0, 50.0, 50.0)

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ConfigError("world bounds are degenerate")
        for lm in self.landmarks:
            r = lm.footprint_radius()
            if lm.cx - r < xmin or lm.cx + r > xmax or lm.cy - r < ymin or lm.cy + r > ymax:
                raise ConfigError(f"landmark outside world bounds: {lm}")

    def contains(self, x, y) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def merged(self, other: "SyntheticWorld") -> "SyntheticWorld":
        b = (min(self.bounds[0], other.bounds[0]), min(self.bounds[1], other.bounds[1]),
             max(self.bounds[2], other.bounds[2]), max(self.bounds[3], other.bounds[3]))
        return SyntheticWorld(self.landmarks + other.landmarks, self.ground or other.ground, b)

    def to_text(self) -> str:
        lines = ["# synthetic world: one primitive per line",
                 "bounds " + " ".join(repr(b) for b in self.bounds),
                 f"ground {'on' if self.ground else 'off'}"]
        lines += [lm.to_line() for lm in self.landmarks]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SyntheticWorld":
        """Parse the line-based world format written by :meth:`to_text`."""
        landmarks, ground, bounds = [], True, None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            kind, *vals = line.split()
            try:
                if kind == "ground":
                    if vals not in (["on"], ["off"]):
                        raise ValueError("expected 'on' or 'off'")
                    ground = vals[0] == "on"
                    continue
                nums = [float(v) for v in vals]
                if kind == "bounds" and len(nums) == 4:
                    bounds = tuple(nums)
                elif kind == "box" and len(nums) in (5, 6):
                    landmarks.append(Box(*nums))
                elif kind == "cylinder" and len(nums) == 4:
                    landmarks.append(Cylinder(*nums))
                else:
                    raise ValueError(f"cannot parse {kind!r} with {len(nums)} values")
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"world line {lineno}: {exc}") from None
        if bounds is None:
            raise ConfigError("world file lacks a 'bounds' line")
        return cls(tuple(landmarks), ground, bounds)


def azimuth_grid(sensor: SensorModel) -> np.ndarray:
    """Beam azimuths, offset half a step so no beam sits exactly on +-pi."""
    n = int(math.floor(2.0 * math.pi / sensor.azimuth_step + 1e-9))
    return -math.pi + (np.arange(n) + 0.5) * sensor.azimuth_step


def _vertical_interval(h0, tan_el, height):
    """Horizontal-distance interval over which the ray is within z in [0, height]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = (0.0 - h0) / tan_el
        s2 = (height - h0) / tan_el
    lo, hi = np.minimum(s1, s2), np.maximum(s1, s2)
    flat = tan_el == 0
    inside = (h0 >= 0) & (h0 <= height)
    lo = np.where(flat, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(flat, np.where(inside, np.inf, -np.inf), hi)
    return lo, hi


def _cylinder_interval(ox, oy, ux, uy, lm: Cylinder):
    dx, dy = ox - lm.cx, oy - lm.cy
    b = dx * ux + dy * uy
    c = dx * dx + dy * dy - lm.radius ** 2
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    lo = np.where(disc >= 0, -b - root, np.inf)
    hi = np.where(disc >= 0, -b + root, -np.inf)
    return lo, hi


def _box_interval(ox, oy, ux, uy, lm: Box):
    c, s = math.cos(lm.yaw), math.sin(lm.yaw)
    dx, dy = ox - lm.cx, oy - lm.cy
    o = (c * dx + s * dy, -s * dx + c * dy)
    u = (c * ux + s * uy, -s * ux + c * uy)
    lo = np.full(np.shape(ux), -np.inf)
    hi = np.full(np.shape(ux), np.inf)
    for oi, ui, half in ((o[0], u[0], lm.sx / 2), (o[1], u[1], lm.sy / 2)):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - oi) / ui
            t2 = (half - oi) / ui
        par = ui == 0
        inside = abs(oi) <= half
        a = np.where(par, -np.inf if inside else np.inf, np.minimum(t1, t2))
        b = np.where(par, np.inf if inside else -np.inf, np.maximum(t1, t2))
        lo, hi = np.maximum(lo, a), np.minimum(hi, b)
    return lo, hi


def cast_rays(world: SyntheticWorld, x, y, h0, headings, elevations) -> np.ndarray:
    """Horizontal distance to the first surface along each ray (inf on miss).

    ``headings`` and ``elevations`` are broadcast-compatible arrays of world
    azimuths and elevation angles; rays start at (x, y, h0).
    """
    headings, elevations = np.broadcast_arrays(np.asarray(headings, float),
                                               np.asarray(elevations, float))
    ux, uy = np.cos(headings), np.sin(headings)
    tan_el = np.tan(elevations)
    best = np.full(headings.shape, np.inf)
    if world.ground:
        with np.errstate(divide="ignore"):
            g = np.where(tan_el < 0, h0 / -tan_el, np.inf)
        best = np.minimum(best, g)
    for lm in world.landmarks:
        if isinstance(lm, Cylinder):
            lo, hi = _cylinder_interval(x, y, ux, uy, lm)
        else:
            lo, hi = _box_interval(x, y, ux, uy, lm)
        vlo, vhi = _vertical_interval(h0, tan_el, lm.height)
        enter, leave = np.maximum(lo, vlo), np.minimum(hi, vhi)
        hit = (enter <= leave) & (enter > 0)
        best = np.where(hit & (enter < best), enter, best)
    return best


def simulate_scan(world: SyntheticWorld, pose: Pose2, sensor: SensorModel, timestamp=None) -> Scan:
    """Ray-cast every (ring, azimuth) beam from ``pose``; points in the sensor frame."""
    if not world.contains(pose.x, pose.y):
        raise ConfigError(f"pose {pose} lies outside world bounds {world.bounds}")
    az = azimuth_grid(sensor)
    el = np.asarray(sensor.elevation_angles)[:, None]
    s = cast_rays(world, pose.x, pose.y, sensor.mount_height, az[None, :] + pose.yaw, el)
    cos_el = np.cos(el)
    rng = s / cos_el
    keep = np.isfinite(rng) & (rng >= sensor.min_range) & (rng <= sensor.max_range)
    rings = []
    for i in range(sensor.ring_count):
        k = keep[i]
        r, a = rng[i, k], az[k]
        pts = np.stack([r * cos_el[i, 0] * np.cos(a),
                        r * cos_el[i, 0] * np.sin(a),
                        r * math.sin(sensor.elevation_angles[i])], axis=1)
        rings.append(sort_by_azimuth(pts))
    return Scan(tuple(rings), sensor, timestamp)


def trajectory_poses(waypoints, step: float) -> list:
    """Poses at arclength 0, step, 2*step, ... strictly before the path end.

    Each pose faces along the segment it lies on; waypoint yaws are ignored.
    """
    pts = [(float(w.x), float(w.y)) if isinstance(w, Pose2) else (float(w[0]), float(w[1]))
           for w in waypoints]
    if len(pts) < 2:
        raise ConfigError("need at least two waypoints")
    if not step > 0:
        raise ConfigError("step must be positive")
    seg_len = []
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        d = math.hypot(x1 - x0, y1 - y0)
        if d == 0:
            raise ConfigError(f"coincident consecutive waypoints at ({x0}, {y0})")
        seg_len.append(d)
    total = sum(seg_len)
    count = math.ceil(total / step - 1e-9)
    poses, seg, seg_start = [], 0, 0.0
    for k in range(count):
        s = k * step
        while seg < len(seg_len) - 1 and s >= seg_start + seg_len[seg]:
            seg_start += seg_len[seg]
            seg += 1
        (x0, y0), (x1, y1) = pts[seg], pts[seg + 1]
        f = (s - seg_start) / seg_len[seg]
        poses.append(Pose2(x0 + f * (x1 - x0), y0 + f * (y1 - y0), math.atan2(y1 - y0, x1 - x0)))
    return poses


def noisy_odometry(poses, odom_noise, seed) -> list:
    """Relative motions between consecutive poses plus Gaussian noise.

    The first entry is the zero motion.
    """
    sigma_t, sigma_r = odom_noise
    rng = np.random.default_rng(seed)
    deltas = [Pose2()]
    for a, b in zip(poses, poses[1:]):
        true = a.between(b)
        n = rng.normal(0.0, 1.0, 3)
        deltas.append(Pose2(true.x + sigma_t * n[0], true.y + sigma_t * n[1],
                            true.yaw + sigma_r * n[2]))
    return deltas


def simulate_trajectory(world, waypoints, step, odom_noise, seed, sensor: SensorModel,
                        period=0.1) -> list:
    """Return (scan, true_pose, odom_delta) for every pose along the waypoint path."""
    poses = trajectory_poses(waypoints, step)
    deltas = noisy_odometry(poses, odom_noise, seed)
    return [(simulate_scan(world, p, sensor, timestamp=k * period), p, d)
            for k, (p, d) in enumerate(zip(poses, deltas))]


def dead_reckon(start: Pose2, deltas) -> list:
    poses = [start]
    for d in list(deltas)[1:]:
        poses.append(poses[-1].compose(d))
    return poses
