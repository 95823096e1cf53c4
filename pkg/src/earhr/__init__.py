"""Heart-rate estimation from in-ear microphone audio."""

from .errors import (AlignmentError, ConfigError, DataError, DivergenceError, EarHRError,
                     EmptyInputError, EstimationError, FormatError, InsufficientDataError,
                     ShapeError, UnknownSubjectError)
from .hr import HrSeries, estimate_hr
from .timeseries import HR_WINDOW, SPECTROGRAM_WINDOW, TimeSeries, WindowSpec, align_streams, segment

__version__ = "0.1.0"
