"""Rotation-invariant ring histograms of consecutive-point distances.

Each ring of a scan is reduced to a normalized histogram of the planar
distances between azimuth-neighbouring points (including the wrap-around
pair that closes the ring).  Stacking the per-ring histograms top ring first
yields an N x b image that does not change when the sensor spins in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError


@dataclass(frozen=True)
class HistogramConfig:
    bucket_count: int = 80
    d_min: float = 0.0
    d_max: float = 10.0

    def __post_init__(self):
        if int(self.bucket_count) != self.bucket_count or self.bucket_count < 1:
            raise ConfigError("bucket_count must be a positive integer")
        if not self.d_min < self.d_max:
            raise ConfigError("need d_min < d_max")

    @property
    def bucket_width(self) -> float:
        return (self.d_max - self.d_min) / self.bucket_count

    def edges(self) -> np.ndarray:
        """Lower bucket edges plus the closing ``d_max``."""
        e = self.d_min + np.arange(self.bucket_count + 1) * self.bucket_width
        e[-1] = self.d_max
        return e


@dataclass(frozen=True, eq=False)
class RangeHistogramImage:
    values: np.ndarray
    config: HistogramConfig

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.config.bucket_count:
            raise FormatError(f"histogram image has shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ring_count(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self) -> str:
        return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in self.values)

    @classmethod
    def from_csv(cls, text, config: HistogramConfig) -> "RangeHistogramImage":
        rows = [[float(x) for x in line.split(",")] for line in text.splitlines() if line.strip()]
        return cls(np.array(rows, dtype=float).reshape(len(rows), -1), config)


def consecutive_distances(ring) -> np.ndarray:
    """Planar distances between azimuth neighbours, wrap-around pair first.

    Element 0 is d(p_0, p_{K-1}); element k >= 1 is d(p_k, p_{k-1}).
    Rings with fewer than two points give an empty array.
    """
    pts = np.asarray(ring, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return np.zeros(0)
    xy = pts[:, :2]
    diff = xy - np.roll(xy, 1, axis=0)
    return np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)


def bucket_counts(values, config: HistogramConfig) -> np.ndarray:
    """Integer counts per bucket; half-open buckets, last one closed."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[(v >= config.d_min) & (v <= config.d_max)]
    idx = np.searchsorted(config.edges(), v, side="right") - 1
    idx = np.minimum(idx, config.bucket_count - 1)
    return np.bincount(idx, minlength=config.bucket_count)


def ring_histogram(distances, config: HistogramConfig, point_count=None) -> np.ndarray:
    """Bucket fractions normalized by the ring's point count.

    Under the wrap-around convention the point count equals the number of
    distances, which is the default denominator.
    """
    d = np.asarray(distances, dtype=float).ravel()
    n = len(d) if point_count is None else point_count
    if n == 0:
        return np.zeros(config.bucket_count)
    return bucket_counts(d, config) / n


def build_representation(scan, config: HistogramConfig = HistogramConfig()) -> RangeHistogramImage:
    rows = [ring_histogram(consecutive_distances(r), config, len(r)) for r in scan.rings]
    return RangeHistogramImage(np.array(rows).reshape(scan.ring_count, config.bucket_count), config)


def fast_histogram_baseline(scan, config: HistogramConfig = HistogramConfig()) -> np.ndarray:
    """Single normalized histogram of point ranges over the whole scan."""
    pts = scan.points()
    if len(pts) == 0:
        return np.zeros(config.bucket_count)
    ranges = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    return bucket_counts(ranges, config) / len(pts)
