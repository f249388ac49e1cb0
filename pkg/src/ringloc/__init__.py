"""LiDAR global localization from ring-histogram fingerprints."""

__version__ = "0.1.0"
