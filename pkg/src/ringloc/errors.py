"""Exception hierarchy shared by every stage of the pipeline."""


class RinglocError(Exception):
    """Base class for all package errors."""


class ConfigError(RinglocError):
    """Invalid configuration, world description or waypoint list."""


class DataError(RinglocError):
    """Malformed or unusable input data."""


class FormatError(DataError):
    """A file or byte buffer does not follow its declared layout."""


class EmptyScanError(DataError):
    """No point survived ingestion filtering."""


class NoOverlapError(DataError):
    """ICP found too few correspondences between source and target."""


class DivergenceError(RinglocError):
    """A numeric quantity became non-finite."""
