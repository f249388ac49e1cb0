"""Geometric types, scan ingestion, ring partitioning and the LiDAR simulator."""

from .io import (filter_points, kitti_bytes, load_scan_csv, load_scan_file, load_scan_kitti,
                 read_points_csv, scan_from_points, write_scan_kitti)
from .rings import partition_rings, ring_indices, rotate_points_z, rotate_scan
from .simulator import (Box, Cylinder, SyntheticWorld, azimuth_grid, cast_rays, dead_reckon,
                        noisy_odometry, simulate_scan, simulate_trajectory, trajectory_poses)
from .types import (Pose2, RigidTransform3, Scan, SensorModel, sort_by_azimuth,
                    validate_rotation, wrap_angle)
from .worlds import block_loop, street_block_world

__all__ = [
    "Box", "Cylinder", "Pose2", "RigidTransform3", "Scan", "SensorModel", "SyntheticWorld",
    "azimuth_grid", "block_loop", "cast_rays", "dead_reckon", "filter_points", "kitti_bytes",
    "load_scan_csv", "load_scan_file", "load_scan_kitti", "noisy_odometry", "partition_rings",
    "read_points_csv", "ring_indices", "rotate_points_z", "rotate_scan", "scan_from_points",
    "simulate_scan", "simulate_trajectory", "sort_by_azimuth", "street_block_world",
    "trajectory_poses", "validate_rotation", "wrap_angle", "write_scan_kitti",
]
