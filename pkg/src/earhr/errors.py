"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto process exit statuses (2 configuration, 3 data, 4 numeric).
"""


class EarHRError(Exception):
    exit_code = 1


class ConfigError(EarHRError, ValueError):
    """Invalid parameters or configuration document."""

    exit_code = 2


class DataError(EarHRError, ValueError):
    """Input data is missing, malformed or inconsistent."""

    exit_code = 3


class EmptyInputError(DataError):
    pass


class AlignmentError(DataError):
    pass


class ShapeError(DataError):
    pass


class FormatError(DataError):
    """Unreadable or corrupted file (checkpoint, CSV, WAV)."""


class UnknownSubjectError(EarHRError, LookupError):
    exit_code = 2


class InsufficientDataError(DataError):
    pass


class EstimationError(DataError):
    """No usable heart-rate peak could be found."""


class DivergenceError(EarHRError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
