import math

import numpy as np
import pytest

from ringloc.scan_model import (Box, Cylinder, SensorModel, SyntheticWorld, simulate_scan,
                                street_block_world, trajectory_poses)


def random_cloud(rng, n, max_range=30.0, z_span=(-2.0, 6.0)):
    """Random points in an annulus around the sensor with moderate elevations."""
    r = rng.uniform(2.0, max_range, n)
    a = rng.uniform(-math.pi, math.pi, n)
    z = rng.uniform(*z_span, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a), z])


def oracle_counts(values, cfg):
    """Bucket counts by direct interval tests, one bucket at a time."""
    w = (cfg.d_max - cfg.d_min) / cfg.bucket_count
    counts = [0] * cfg.bucket_count
    for m in range(cfg.bucket_count):
        lo = cfg.d_min + m * w
        last = m == cfg.bucket_count - 1
        hi = cfg.d_max if last else cfg.d_min + (m + 1) * w
        for v in values:
            if lo <= v < hi or (last and v == hi):
                counts[m] += 1
    return counts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def coarse_sensor():
    return SensorModel.uniform(8, 10.0, -15.0, azimuth_step=math.radians(2.0))


@pytest.fixture(scope="session")
def street():
    world, loop = street_block_world(11, (0.0, 0.0))
    return world, loop


@pytest.fixture(scope="session")
def street_scans(street, coarse_sensor):
    """A handful of simulator scans from the street world."""
    world, loop = street
    poses = trajectory_poses(loop, 10.0)
    return poses, [simulate_scan(world, p, coarse_sensor) for p in poses]


@pytest.fixture(scope="session")
def pillar_world():
    return SyntheticWorld((Cylinder(5.0, 0.0, 0.5, 4.0), Box(-8.0, 3.0, 2.0, 6.0, 5.0, 0.3)),
                          ground=False, bounds=(-20.0, -20.0, 20.0, 20.0))
