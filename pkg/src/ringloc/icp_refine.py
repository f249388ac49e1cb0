"""Point-to-point ICP and registration error against the map cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, NoOverlapError
from .scan_model import Pose2, RigidTransform3


@dataclass(frozen=True)
class IcpConfig:
    """ICP limits.  ``max_distance`` is the first correspondence radius; each
    entry of ``refine_distances`` starts a further stage with that smaller
    radius from the previous result."""

    max_iterations: int = 30
    epsilon: float = 1e-6
    max_distance: float = 2.0
    min_correspondences: int = 10
    refine_distances: tuple = (0.5, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "refine_distances", tuple(float(v) for v in self.refine_distances))
        if self.max_iterations < 1 or self.min_correspondences < 1:
            raise ConfigError("iteration and correspondence limits must be >= 1")
        if not (self.epsilon > 0 and self.max_distance > 0):
            raise ConfigError("epsilon and max_distance must be positive")
        if any(not v > 0 for v in self.refine_distances):
            raise ConfigError("refine distances must be positive")

    def schedule(self) -> tuple:
        return (float(self.max_distance),) + self.refine_distances


@dataclass(frozen=True, eq=False)
class IcpResult:
    transform: RigidTransform3
    rmse: float
    iterations: int
    converged: bool
    stages: tuple = field(default_factory=tuple)

    @property
    def history(self) -> tuple:
        """Clipped RMS values of every stage, concatenated."""
        return tuple(v for st in self.stages for v in st)


def pose2_to_transform(p: Pose2) -> RigidTransform3:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return RigidTransform3(rot, np.array([p.x, p.y, 0.0]))


def transform_to_pose2(t: RigidTransform3) -> Pose2:
    return Pose2(float(t.translation[0]), float(t.translation[1]), t.yaw())


def kabsch(src, dst) -> RigidTransform3:
    """Least-squares rigid transform mapping ``src`` onto corresponding ``dst``."""
    a = np.asarray(src, dtype=float).reshape(-1, 3)
    b = np.asarray(dst, dtype=float).reshape(-1, 3)
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    if np.linalg.det(vt.T @ u.T) < 0:
        vt = vt.copy()
        vt[-1] *= -1.0
    rot = vt.T @ u.T
    return RigidTransform3(rot, cb - rot @ ca)


def _tree(target):
    if isinstance(target, cKDTree):
        return target
    pts = np.asarray(target, dtype=float).reshape(-1, 3)
    if not len(pts):
        raise NoOverlapError("target cloud is empty")
    return cKDTree(pts)


def _stage(src, tree, t, radius, cfg):
    """Run ICP at one correspondence radius; returns (transform, rmse, iterations, converged, history)."""
    r2 = radius * radius
    bound = radius * (1.0 + 1e-9) + 1e-12

    def match(t):
        moved = t.apply(src)
        # The bound prunes the search; points beyond it come back as inf.
        dist, idx = tree.query(moved, distance_upper_bound=bound)
        keep = dist <= radius
        if keep.sum() < cfg.min_correspondences:
            raise NoOverlapError(f"only {int(keep.sum())} correspondences within "
                                 f"{radius} m (need {cfg.min_correspondences})")
        clipped = math.sqrt(float(np.mean(np.minimum(dist * dist, r2))))
        inlier = math.sqrt(float(np.mean(dist[keep] ** 2)))
        return moved, idx, keep, clipped, inlier

    moved, idx, keep, clipped, inlier = match(t)
    history = [clipped]
    it = 0
    converged = False
    while it < cfg.max_iterations:
        it += 1
        t = kabsch(moved[keep], tree.data[idx[keep]]).compose(t)
        moved, idx, keep, clipped, inlier = match(t)
        history.append(clipped)
        if history[-2] - clipped < cfg.epsilon:
            converged = True
            break
    return t, inlier, it, converged, tuple(history)


def icp(source, target, init: RigidTransform3 | None = None, cfg: IcpConfig = IcpConfig()) -> IcpResult:
    """Align ``source`` to ``target`` starting from ``init``.

    Each iteration re-matches every moved source point to its nearest
    target point, keeps pairs within the stage radius and applies the
    closed-form alignment of the kept pairs.  A stage's history holds the
    RMS of residuals clipped at its radius over all source points, which
    cannot increase between iterations.  Later stages shrink the radius so
    that wrong matches left over from a coarse alignment are dropped.
    ``rmse`` is the RMS over the correspondences kept at the end.
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    if not len(src):
        raise NoOverlapError("source cloud is empty")
    tree = _tree(target)
    t = RigidTransform3.identity() if init is None else init
    stages, total, converged, rmse = [], 0, False, math.inf
    for radius in cfg.schedule():
        t, rmse, its, converged, hist = _stage(src, tree, t, radius, cfg)
        stages.append(hist)
        total += its
        if rmse <= cfg.epsilon:
            break
    return IcpResult(t, rmse, total, converged, tuple(stages))


def registration_rmse(source, target, transform: RigidTransform3) -> float:
    """RMS nearest-neighbour distance of the transformed source to the target."""
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    dist, _ = _tree(target).query(transform.apply(src))
    return math.sqrt(float(np.mean(dist * dist)))
