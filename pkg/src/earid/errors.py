"""Exception types shared across the package."""


class EaridError(Exception):
    """Base class for errors raised by this package."""


class DatasetError(EaridError):
    """Problem with an on-disk dataset."""


class MissingSampleFileError(DatasetError):
    """A manifest entry points at a sample file that does not exist."""


class SampleSizeMismatchError(DatasetError):
    """A sample file's size disagrees with the manifest duration and rate."""


class DuplicateTrialError(DatasetError):
    """The manifest lists the same (subject, day, trial) more than once."""


class CohortStructureError(DatasetError):
    """A cohort does not have the required day/trial structure."""


class FeatureExtractionError(EaridError):
    """A segment or trial yielded no usable features."""


class ProtocolError(EaridError):
    """A split plan refers to data that is not available."""


class UndefinedMetricError(EaridError):
    """A requested rate has a zero denominator."""


class NotConvergedError(EaridError):
    """The SMO solver did not reach the KKT tolerance within its iteration cap."""

    def __init__(self, message, *, gap=None, n_iter=None):
        super().__init__(message)
        self.gap = gap
        self.n_iter = n_iter
