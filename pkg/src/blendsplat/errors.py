"""Exception types shared across the package."""


class BlendsplatError(Exception):
    """Base class for package errors."""


class InitError(BlendsplatError):
    """Bad arguments to model construction (shapes, counts, degrees)."""


class ShapeError(BlendsplatError):
    """Array input has the wrong shape or dtype."""


class UnsupportedDegree(BlendsplatError):
    """Spherical harmonics degree outside the supported 0..3 range."""


class FormatError(BlendsplatError):
    """Malformed file content (bad magic, truncation, version mismatch)."""


class LoadError(BlendsplatError):
    """Dataset or checkpoint could not be loaded (missing files, bad paths)."""


class NotAvailable(BlendsplatError):
    """Requested optional functionality is not provided by this build."""


class DegenerateModel(BlendsplatError):
    """Model collapsed (for example pruning removed every gaussian)."""


class TrainDivergence(BlendsplatError):
    """Training aborted on a non-finite loss; carries a snapshot path."""

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


class Busy(BlendsplatError):
    """Server-side queue is full; retry after in-flight work drains."""
