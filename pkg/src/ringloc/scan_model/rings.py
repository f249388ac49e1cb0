"""Ring partitioning and scan rotation."""

import math

import numpy as np

from .types import Scan, SensorModel, sort_by_azimuth


def elevation_of(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.arctan2(pts[:, 2], np.hypot(pts[:, 0], pts[:, 1]))


def ring_indices(points, sensor: SensorModel) -> np.ndarray:
    """Index of the ring whose elevation angle is nearest to each point.

    Equidistant points go to the lower index (the upper ring).
    """
    el = elevation_of(points)
    angles = np.asarray(sensor.elevation_angles)
    if len(el) == 0:
        return np.zeros(0, dtype=int)
    return np.argmin(np.abs(el[:, None] - angles[None, :]), axis=1)


def partition_rings(points, sensor: SensorModel) -> list:
    """Split a cloud into ``sensor.ring_count`` azimuth-sorted rings."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    idx = ring_indices(pts, sensor)
    return [sort_by_azimuth(pts[idx == i]) for i in range(sensor.ring_count)]


def rotate_points_z(points, yaw) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty_like(pts)
    out[:, 0] = c * pts[:, 0] - s * pts[:, 1]
    out[:, 1] = s * pts[:, 0] + c * pts[:, 1]
    out[:, 2] = pts[:, 2]
    return out


def rotate_scan(scan: Scan, yaw: float) -> Scan:
    """Rotate every point about the sensor z-axis, keeping ring membership."""
    if yaw == 0:
        return scan
    rings = [sort_by_azimuth(rotate_points_z(r, yaw)) for r in scan.rings]
    return Scan(tuple(rings), scan.sensor, scan.timestamp)
