"""Exception types shared by every module of the toolkit."""


class RepGhostError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(RepGhostError, ValueError):
    """A tensor shape, channel count or layout does not fit the operation."""


class ConfigError(RepGhostError, ValueError):
    """Operator parameters or a network structure are malformed or unfusible."""


class ArchiveFormatError(RepGhostError, ValueError):
    """A weight archive has a bad magic tag, version or manifest."""


class ArchiveTruncatedError(RepGhostError, OSError):
    """A weight archive ends before the data its manifest declares."""
