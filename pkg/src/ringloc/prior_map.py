"""Global prior map: keyframe poses, their fingerprints in a kd-tree, and the map cloud."""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .kdtree import KdTree
from .representation import HistogramConfig, build_representation
from .scan_model import Pose2
from .siamese_net import forward

MAGIC = b"LLMAP1"
VERSION = 1


@dataclass(frozen=True, eq=False)
class MapFrame:
    index: int
    pose: Pose2
    fingerprint: np.ndarray
    source: str = ""


def voxel_downsample(points, voxel) -> np.ndarray:
    """Replace the points of each occupied voxel by their centroid."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if voxel is None or voxel <= 0 or len(pts) == 0:
        return pts
    keys = np.floor(pts / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, pts)
    return sums / counts[:, None]


def scan_to_map(points, pose: Pose2) -> np.ndarray:
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty_like(pts)
    out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + pose.x
    out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + pose.y
    out[:, 2] = pts[:, 2]
    return out


class PriorMap:
    """Immutable map of keyframes; the kd-tree is rebuilt from the frames."""

    def __init__(self, frames, cloud=None, meta=None):
        self.frames = tuple(frames)
        if self.frames:
            dims = {f.fingerprint.shape for f in self.frames}
            if len(dims) != 1:
                raise DataError(f"fingerprint dimensions differ across frames: {sorted(dims)}")
        dim = self.frames[0].fingerprint.size if self.frames else 0
        self.fingerprints = np.array([f.fingerprint for f in self.frames],
                                     dtype=float).reshape(len(self.frames), dim)
        self.fingerprints.setflags(write=False)
        self.tree = KdTree(self.fingerprints)
        self.cloud = np.zeros((0, 3)) if cloud is None else np.asarray(cloud, dtype=float).reshape(-1, 3)
        self.cloud.setflags(write=False)
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.frames)

    @property
    def dim(self) -> int:
        return self.fingerprints.shape[1] if len(self.frames) else 0

    def poses(self) -> list:
        return [f.pose for f in self.frames]

    def bounds(self, margin=0.0):
        xy = np.array([[f.pose.x, f.pose.y] for f in self.frames])
        lo, hi = xy.min(axis=0) - margin, xy.max(axis=0) + margin
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def hist_config(self) -> HistogramConfig:
        h = self.meta.get("histogram")
        return HistogramConfig(**h) if h else HistogramConfig()


def fingerprint_scans(scans, params, hist: HistogramConfig) -> np.ndarray:
    """Fingerprints computed one scan at a time.

    Batched matrix products round differently from single ones, so frames
    are embedded exactly as an online query would be; a query identical to
    a keyframe then matches it at distance 0.
    """
    return np.array([forward(params, build_representation(s, hist)) for s in scans])


def build_map(scans, poses, params, hist: HistogramConfig = HistogramConfig(), sources=None,
              voxel=None, keep_cloud=True) -> PriorMap:
    """Fingerprint every keyframe and merge the scans into one map-frame cloud."""
    scans, poses = list(scans), list(poses)
    if not scans or len(scans) != len(poses):
        raise DataError("need a nonempty, aligned list of scans and poses")
    fps = fingerprint_scans(scans, params, hist)
    sources = list(sources) if sources is not None else [""] * len(scans)
    frames = [MapFrame(i, p, fps[i].copy(), str(sources[i])) for i, p in enumerate(poses)]
    cloud = None
    if keep_cloud:
        parts = [scan_to_map(s.points(), p) for s, p in zip(scans, poses)]
        cloud = voxel_downsample(np.concatenate(parts, axis=0), voxel)
    meta = {"histogram": {"bucket_count": hist.bucket_count, "d_min": hist.d_min,
                          "d_max": hist.d_max},
            "network": params.config.digest().hex(), "voxel": voxel}
    return PriorMap(frames, cloud, meta)


def nearest_fingerprint(prior: PriorMap, f, allowed=None):
    """(frame index, embedding distance) of the closest stored fingerprint."""
    if not len(prior):
        raise DataError("prior map is empty")
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape[0] != prior.dim:
        raise DataError(f"fingerprint dimension {f.shape[0]} does not match map dimension {prior.dim}")
    return prior.tree.query(f, allowed)


def map_bytes(prior: PriorMap) -> bytes:
    meta = json.dumps(dict(prior.meta, dim=prior.dim, frames=len(prior)), sort_keys=True,
                      separators=(",", ":")).encode()
    out = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta]
    for fr in prior.frames:
        src = fr.source.encode()
        out.append(struct.pack("<I3d", fr.index, fr.pose.x, fr.pose.y, fr.pose.yaw))
        out.append(np.ascontiguousarray(fr.fingerprint, dtype="<f8").tobytes())
        out.append(struct.pack("<H", len(src)) + src)
    out.append(struct.pack("<Q", len(prior.cloud)))
    out.append(np.ascontiguousarray(prior.cloud, dtype="<f8").tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def map_from_bytes(data: bytes) -> PriorMap:
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad map magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    if len(data) < len(MAGIC) + 10:
        raise FormatError("map file is truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise FormatError("map file is truncated")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    version, n = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise FormatError(f"unsupported map version {version}")
    meta = json.loads(take(n))
    dim, count = meta.pop("dim"), meta.pop("frames")
    frames = []
    for _ in range(count):
        idx, x, y, yaw = struct.unpack("<I3d", take(28))
        fp = np.frombuffer(take(8 * dim), dtype="<f8").astype(float)
        (slen,) = struct.unpack("<H", take(2))
        frames.append(MapFrame(idx, Pose2(x, y, yaw), fp, take(slen).decode()))
    (npts,) = struct.unpack("<Q", take(8))
    cloud = np.frombuffer(take(24 * npts), dtype="<f8").reshape(-1, 3).astype(float)
    if pos != len(body) or zlib.crc32(body) != crc:
        raise FormatError("map file is corrupted or truncated (checksum mismatch)")
    return PriorMap(frames, cloud, meta)


def save_map(prior: PriorMap, path):
    Path(path).write_bytes(map_bytes(prior))


def load_map(path) -> PriorMap:
    return map_from_bytes(Path(path).read_bytes())
