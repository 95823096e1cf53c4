"""Signal containers, windowing and stream alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigError, DataError, EmptyInputError


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled signal, planar layout ``(channels, n_samples)``.

    A 1-D input is promoted to a single channel. The sample buffer is made
    read-only so instances can be shared freely.
    """

    samples: np.ndarray
    sample_rate_hz: float
    start_time_ms: int = 0

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DataError(f"samples must be 1-D or (channels, n), got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("samples contain non-finite values")
        if not self.sample_rate_hz > 0:
            raise ConfigError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time_ms", int(self.start_time_ms))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.n_samples

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def end_time_ms(self) -> float:
        """Time of the last sample (ms, not rounded)."""
        return self.start_time_ms + (self.n_samples - 1) * 1000.0 / self.sample_rate_hz

    @property
    def times_s(self) -> np.ndarray:
        """Sample times relative to ``start_time_ms``."""
        return np.arange(self.n_samples) / self.sample_rate_hz

    @property
    def mono(self) -> np.ndarray:
        """The single channel; raises when there is more than one."""
        if self.channels != 1:
            raise DataError(f"expected a single channel, got {self.channels}")
        return self.samples[0]

    def channel(self, i: int) -> "TimeSeries":
        return TimeSeries(self.samples[i], self.sample_rate_hz, self.start_time_ms)

    def with_samples(self, samples) -> "TimeSeries":
        """Same rate and start time, new data."""
        return TimeSeries(samples, self.sample_rate_hz, self.start_time_ms)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        """Samples ``[start, stop)`` with the start time moved accordingly."""
        start_ms = self.start_time_ms + round(start * 1000.0 / self.sample_rate_hz)
        return TimeSeries(self.samples[:, start:stop], self.sample_rate_hz, start_ms)


@dataclass(frozen=True)
class WindowSpec:
    length_s: float
    overlap_s: float = 0.0

    def __post_init__(self):
        if not self.length_s > 0:
            raise ConfigError(f"window length must be > 0, got {self.length_s}")
        if not 0 <= self.overlap_s < self.length_s:
            raise ConfigError(
                f"overlap must satisfy 0 <= overlap < length, got {self.overlap_s}"
            )

    @property
    def stride_s(self) -> float:
        return self.length_s - self.overlap_s

    def samples(self, sample_rate_hz: float) -> tuple[int, int]:
        """(window length, stride) in samples at the given rate."""
        return (
            int(round(self.length_s * sample_rate_hz)),
            int(round(self.stride_s * sample_rate_hz)),
        )

    def count(self, n_samples: int, sample_rate_hz: float) -> int:
        n, step = self.samples(sample_rate_hz)
        if n_samples < n:
            return 0
        return (n_samples - n) // step + 1


# Pipeline window layouts.
SPECTROGRAM_WINDOW = WindowSpec(2.0, 1.5)
HR_WINDOW = WindowSpec(10.0, 5.0)


@dataclass(frozen=True)
class Window:
    data: TimeSeries
    index: int = field(default=0)

    @property
    def start_time_ms(self) -> int:
        return self.data.start_time_ms


def segment(x: TimeSeries, spec: WindowSpec) -> list[Window]:
    """Cut ``x`` into fixed-length windows; a trailing partial window is dropped."""
    n, step = spec.samples(x.sample_rate_hz)
    count = spec.count(x.n_samples, x.sample_rate_hz)
    if count == 0:
        raise EmptyInputError(
            f"signal of {x.duration_s:.3f}s is shorter than one {spec.length_s}s window"
        )
    return [Window(x.slice(i * step, i * step + n), i) for i in range(count)]


def window_matrix(x: np.ndarray, n: int, step: int) -> np.ndarray:
    """Strided view ``(n_windows, ..., n)`` over the last axis of ``x``."""
    view = np.lib.stride_tricks.sliding_window_view(x, n, axis=-1)
    return view[..., ::step, :]


# Hysteresis between "trim" and "keep" so whole-millisecond rounding of the
# new start time cannot trigger another trim on a second pass.
_ALIGN_MARGIN_MS = 2.0
# Start times are whole milliseconds; trimming one stream's head moves its
# end time by up to half a millisecond.
_ROUNDING_SLACK_MS = 1.5


def _overhang_trim(overhang_ms: float, period_ms: float, tol_ms: float) -> int:
    """Samples to drop so an edge sticking out by ``overhang_ms`` ends up inside ``tol_ms``."""
    if overhang_ms <= tol_ms:
        return 0
    return math.ceil((overhang_ms - tol_ms + _ALIGN_MARGIN_MS) / period_ms)


def align_streams(audio: TimeSeries, ecg: TimeSeries) -> tuple[TimeSeries, TimeSeries]:
    """Trim both streams to their common time interval.

    Edges that differ by no more than one period of the coarser stream count
    as aligned. The residual start/end offset is therefore bounded by one ECG
    sample period, and applying the function twice changes nothing.
    """
    t0 = max(audio.start_time_ms, ecg.start_time_ms)
    t1 = min(audio.end_time_ms, ecg.end_time_ms)
    if t1 <= t0:
        raise AlignmentError(
            f"time ranges do not overlap: audio [{audio.start_time_ms}, "
            f"{audio.end_time_ms:.0f}] ms, ecg [{ecg.start_time_ms}, {ecg.end_time_ms:.0f}] ms"
        )
    tol = 1000.0 / min(audio.sample_rate_hz, ecg.sample_rate_hz)
    edges = (
        abs(audio.start_time_ms - ecg.start_time_ms),
        abs(audio.end_time_ms - ecg.end_time_ms),
    )
    if max(edges) <= tol + _ROUNDING_SLACK_MS:
        return audio, ecg
    out = []
    for x in (audio, ecg):
        period = 1000.0 / x.sample_rate_hz
        head = _overhang_trim(t0 - x.start_time_ms, period, tol)
        tail = _overhang_trim(x.end_time_ms - t1, period, tol)
        if head + tail >= x.n_samples:
            raise AlignmentError("common interval is shorter than one sample")
        out.append(x.slice(head, x.n_samples - tail))
    return out[0], out[1]
