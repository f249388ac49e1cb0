"""Seeded desk-scale datasets built from the synthetic street worlds.

A *session* is a set of laps around the street loops of one or more
worlds.  Every lap samples the same stations along the loop, shifted
sideways within the lane and optionally driven in the opposite direction,
so two sessions revisit the same places from slightly different poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scan_model import (Pose2, SensorModel, simulate_scan, street_block_world,
                         trajectory_poses)


@dataclass(frozen=True)
class LapSpec:
    lateral: float = 0.0
    along: float = 0.0
    reverse: bool = False


@dataclass(frozen=True, eq=False)
class Session:
    poses: list
    scans: list
    world_index: list
    lap_index: list

    def __len__(self):
        return len(self.poses)


def offset_poses(poses, lateral=0.0, along=0.0, reverse=False) -> list:
    """Shift each pose sideways (left positive) and forward in its own frame."""
    out = []
    for p in poses:
        c, s = math.cos(p.yaw), math.sin(p.yaw)
        out.append(Pose2(p.x - lateral * s + along * c, p.y + lateral * c + along * s,
                         p.yaw + (math.pi if reverse else 0.0)))
    return out


def desk_worlds():
    """Two street blocks far enough apart that no place is shared."""
    return [street_block_world(11, (0.0, 0.0)), street_block_world(22, (400.0, 0.0))]


def random_laps(n, seed, lateral=0.8, along=0.0) -> list:
    """Laps with uniform sideways and forward jitter and a random direction."""
    rng = np.random.default_rng(seed)
    return [LapSpec(float(rng.uniform(-lateral, lateral)), float(rng.uniform(-along, along)),
                    bool(rng.integers(2)))
            for _ in range(n)]


def simulate_session(worlds, laps, step, sensor: SensorModel) -> Session:
    poses, scans, widx, lidx = [], [], [], []
    for w, (world, loop) in enumerate(worlds):
        stations = trajectory_poses(loop, step)
        for k, lap in enumerate(laps):
            for p in offset_poses(stations, lap.lateral, lap.along, lap.reverse):
                poses.append(p)
                scans.append(simulate_scan(world, p, sensor))
                widx.append(w)
                lidx.append(k)
    return Session(poses, scans, widx, lidx)


def desk_sensor() -> SensorModel:
    """16-beam sensor with 0.5 degree azimuth resolution."""
    return SensorModel.vlp16(azimuth_step=math.radians(0.5))


def compact_loop(seed=11, size=(12.0, 8.0)):
    """A short loop used for global-localization runs."""
    return street_block_world(seed, (0.0, 0.0), size=size)
