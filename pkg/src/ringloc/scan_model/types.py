"""Core geometric types: poses, rigid transforms, sensor model and scans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Map an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(a) == 0:
        w = math.remainder(float(a), TWO_PI)
        return math.pi if w <= -math.pi else w
    w = np.remainder(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(w <= -math.pi, math.pi, w)


@dataclass(frozen=True)
class Pose2:
    """Planar pose; yaw is normalized to (-pi, pi] on construction."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def compose(self, delta: "Pose2") -> "Pose2":
        """Apply a motion expressed in this pose's frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.yaw + delta.yaw,
        )

    def between(self, other: "Pose2") -> "Pose2":
        """Relative motion taking this pose to ``other``, in this pose's frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = other.x - self.x, other.y - self.y
        return Pose2(c * dx + s * dy, -s * dx + c * dy, other.yaw - self.yaw)

    def distance_to(self, other: "Pose2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])


def validate_rotation(rotation, atol=1e-9):
    """Raise ValueError unless ``rotation`` is a proper 3x3 rotation matrix."""
    r = np.asarray(rotation, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if not np.allclose(r.T @ r, np.eye(3), atol=atol, rtol=0.0):
        raise ValueError("rotation is not orthogonal")
    if abs(np.linalg.det(r) - 1.0) > atol:
        raise ValueError("rotation determinant is not +1")
    return r


@dataclass(frozen=True, eq=False)
class RigidTransform3:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = validate_rotation(self.rotation).copy()
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform3":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform3") -> "RigidTransform3":
        """Return self * other (apply ``other`` first)."""
        return RigidTransform3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform3":
        return RigidTransform3(self.rotation.T, -self.rotation.T @ self.translation)

    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def angle(self) -> float:
        """Total rotation angle in radians."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Spinning multi-beam LiDAR.

    ``elevation_angles`` are listed top ring first (strictly decreasing).
    ``mount_height`` is only used by the simulator to place the sensor
    above the ground plane.
    """

    elevation_angles: tuple
    azimuth_step: float = math.radians(1.0)
    min_range: float = 1.0
    max_range: float = 80.0
    mount_height: float = 1.8

    def __post_init__(self):
        el = tuple(float(a) for a in self.elevation_angles)
        object.__setattr__(self, "elevation_angles", el)
        if len(el) < 1:
            raise ConfigError("sensor needs at least one ring")
        if any(b >= a for a, b in zip(el, el[1:])):
            raise ConfigError("elevation angles must be strictly decreasing")
        if not self.azimuth_step > 0:
            raise ConfigError("azimuth_step must be positive")
        if not 0 <= self.min_range < self.max_range:
            raise ConfigError("need 0 <= min_range < max_range")

    @property
    def ring_count(self) -> int:
        return len(self.elevation_angles)

    @classmethod
    def uniform(cls, ring_count, top_deg, bottom_deg, **kw) -> "SensorModel":
        """Sensor with evenly spaced beams from ``top_deg`` down to ``bottom_deg``."""
        if ring_count == 1:
            angles = [math.radians(top_deg)]
        else:
            angles = np.radians(np.linspace(top_deg, bottom_deg, ring_count))
        return cls(tuple(angles), **kw)

    @classmethod
    def vlp16(cls, **kw) -> "SensorModel":
        return cls.uniform(16, 15.0, -15.0, **kw)

    def to_dict(self) -> dict:
        return {
            "elevation_angles": list(self.elevation_angles),
            "azimuth_step": self.azimuth_step,
            "min_range": self.min_range,
            "max_range": self.max_range,
            "mount_height": self.mount_height,
        }

    @classmethod
    def from_dict(cls, d) -> "SensorModel":
        return cls(tuple(d["elevation_angles"]), d["azimuth_step"], d["min_range"],
                   d["max_range"], d.get("mount_height", 1.8))


def _freeze(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float).reshape(-1, 3)
    a.setflags(write=False)
    return a


def sort_by_azimuth(points) -> np.ndarray:
    """Sort points by azimuth; ties broken by range, then input order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return pts.copy()
    az = np.arctan2(pts[:, 1], pts[:, 0])
    rng = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    order = np.lexsort((np.arange(len(pts)), rng, az))
    return pts[order]


@dataclass(frozen=True, eq=False)
class Scan:
    """One LiDAR frame: per-ring (K_i, 3) arrays sorted by azimuth."""

    rings: tuple
    sensor: SensorModel
    timestamp: float | None = None

    def __post_init__(self):
        if len(self.rings) != self.sensor.ring_count:
            raise ConfigError(
                f"scan has {len(self.rings)} rings, sensor declares {self.sensor.ring_count}"
            )
        object.__setattr__(self, "rings", tuple(_freeze(r) for r in self.rings))

    @property
    def ring_count(self) -> int:
        return len(self.rings)

    @property
    def point_count(self) -> int:
        return sum(len(r) for r in self.rings)

    def points(self) -> np.ndarray:
        """All points stacked ring by ring."""
        if self.point_count == 0:
            return np.zeros((0, 3))
        return np.concatenate(self.rings, axis=0)

    def same_as(self, other: "Scan", atol=0.0) -> bool:
        if self.ring_count != other.ring_count:
            return False
        for a, b in zip(self.rings, other.rings):
            if a.shape != b.shape:
                return False
            if atol == 0.0:
                if not np.array_equal(a, b):
                    return False
            elif not np.allclose(a, b, atol=atol, rtol=0.0):
                return False
        return True
