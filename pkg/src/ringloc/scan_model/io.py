"""Scan ingestion: KITTI Velodyne ``.bin`` buffers and plain CSV point files."""

from pathlib import Path

import numpy as np

from ..errors import EmptyScanError, FormatError
from .rings import partition_rings
from .types import Scan, SensorModel

KITTI_RECORD = np.dtype("<f4")


def filter_points(points, sensor: SensorModel) -> np.ndarray:
    """Drop non-finite points and those outside the sensor's range gate."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    r = np.linalg.norm(pts, axis=1)
    return pts[(r >= sensor.min_range) & (r <= sensor.max_range)]


def scan_from_points(points, sensor: SensorModel, timestamp=None, allow_empty=False) -> Scan:
    pts = filter_points(points, sensor)
    if len(pts) == 0 and not allow_empty:
        raise EmptyScanError("no point survived range/finite filtering")
    return Scan(tuple(partition_rings(pts, sensor)), sensor, timestamp)


def load_scan_kitti(raw_bytes, sensor: SensorModel, timestamp=None) -> Scan:
    """Parse little-endian float32 (x, y, z, intensity) records."""
    raw = bytes(raw_bytes)
    if len(raw) % 16:
        raise FormatError(f"KITTI buffer length {len(raw)} is not a multiple of 16")
    records = np.frombuffer(raw, dtype=KITTI_RECORD).reshape(-1, 4)
    return scan_from_points(records[:, :3].astype(float), sensor, timestamp)


def kitti_bytes(points, intensity=0.0) -> bytes:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    rec = np.empty((len(pts), 4), dtype=KITTI_RECORD)
    rec[:, :3] = pts
    rec[:, 3] = intensity
    return rec.tobytes()


def write_scan_kitti(scan_or_points, path):
    pts = scan_or_points.points() if isinstance(scan_or_points, Scan) else scan_or_points
    Path(path).write_bytes(kitti_bytes(pts))


def read_points_csv(text) -> np.ndarray:
    """Parse ``x,y,z`` lines; ``#`` starts a comment."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in line.replace(",", " ").split()]
        if len(parts) < 3:
            raise FormatError(f"line {lineno}: expected x,y,z")
        try:
            rows.append([float(v) for v in parts[:3]])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, 3)


def load_scan_csv(text, sensor: SensorModel, timestamp=None) -> Scan:
    return scan_from_points(read_points_csv(text), sensor, timestamp)


def load_scan_file(path, sensor: SensorModel) -> Scan:
    """Dispatch on extension: ``.bin`` is KITTI, anything else CSV."""
    path = Path(path)
    if path.suffix == ".bin":
        return load_scan_kitti(path.read_bytes(), sensor)
    return load_scan_csv(path.read_text(), sensor)
