class SpikesError(Exception):
    """Base class for every error raised by the tracker library."""


class EmptyRegion(SpikesError):
    """A histogram was requested for a region without pixels."""


class EmptyModel(SpikesError):
    """No superpixel of the first frame qualified as foreground."""


class NoMatches(SpikesError):
    """Every model/query pair was rejected; no location can be voted."""


class SequenceLoadError(SpikesError):
    """A sequence directory is missing frames or has malformed groundtruth."""


class SpecError(SpikesError):
    """A synthetic scenario specification is invalid."""


class ConfigError(SpikesError):
    """A tracker configuration file or value is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class JobStoreError(SpikesError):
    """The job status store could not be reached."""
