"""Exception types shared across the toolkit."""


class GraspTuneError(Exception):
    """Base class for all toolkit errors."""


class PreconditionError(GraspTuneError, ValueError):
    """An argument violated a documented precondition."""


class ConfigError(GraspTuneError, ValueError):
    """A configuration value is missing, malformed, or out of range."""


class InsufficientTrajectoryError(GraspTuneError, ValueError):
    """A pose sequence is too short to extract the post-grasp deltas."""


class InsufficientPointsError(GraspTuneError, ValueError):
    """Fewer contact points than mixture components."""


class InvalidDepthError(GraspTuneError, ValueError):
    """Depth value is non-positive."""


class MissingPriorError(GraspTuneError, KeyError):
    """A file-backed prior table has no entry for the requested observation."""


class EmptyDatasetError(GraspTuneError, ValueError):
    """A training routine received no samples."""


class InsufficientEpisodesError(GraspTuneError, ValueError):
    """Fewer episodes than the requested elite count."""


class DimensionMismatchError(GraspTuneError, ValueError):
    """Vector dimensions do not line up."""


class RewardTimeoutError(GraspTuneError, RuntimeError):
    """The reward channel did not produce a reward in time."""


class LogFormatError(GraspTuneError, ValueError):
    """A session log file is corrupt; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number
