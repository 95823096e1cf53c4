"""DSP primitives shared by the estimators.

All functions take and return :class:`~earhr.timeseries.TimeSeries` values and
operate channel by channel unless stated otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy import signal as ss

from .errors import ConfigError
from .timeseries import TimeSeries


@dataclass(frozen=True)
class BandpassSpec:
    """Butterworth band-pass design.

    ``order`` is the prototype order handed to the designer (so 4 gives a
    fourth-order roll-off on each band edge); it must be even.
    """

    low_hz: float
    high_hz: float
    order: int = 4

    def validate(self, sample_rate_hz: float):
        nyq = sample_rate_hz / 2.0
        if not 0 < self.low_hz < self.high_hz:
            raise ConfigError(f"need 0 < low < high, got {self.low_hz}, {self.high_hz}")
        if self.high_hz >= nyq:
            raise ConfigError(
                f"band edge {self.high_hz} Hz is at or above Nyquist ({nyq} Hz)"
            )
        if self.order < 2 or self.order % 2:
            raise ConfigError(f"order must be a positive even integer, got {self.order}")

    def sos(self, sample_rate_hz: float) -> np.ndarray:
        self.validate(sample_rate_hz)
        return ss.butter(
            self.order, [self.low_hz, self.high_hz], btype="bandpass",
            fs=sample_rate_hz, output="sos",
        )

    def poles(self, sample_rate_hz: float) -> np.ndarray:
        _, p, _ = ss.sos2zpk(self.sos(sample_rate_hz))
        return p


AUDIO_BAND = BandpassSpec(0.5, 50.0, 4)
ECG_BAND = BandpassSpec(10.0, 50.0, 4)


class Peak(NamedTuple):
    index: int
    time_s: float
    height: float


def butter_bandpass(x: TimeSeries, spec: BandpassSpec) -> TimeSeries:
    """Zero-phase (forward-backward) Butterworth band-pass."""
    sos = spec.sos(x.sample_rate_hz)
    # Mirror (even) padding: an odd extension adds a step of 2*x[-1] at the edge,
    # which rings for seconds through the low band edge when the input carries
    # strong out-of-band content.
    padlen = min(3 * (2 * len(sos) + 1), x.n_samples - 1)
    y = ss.sosfiltfilt(sos, x.samples, axis=-1, padlen=padlen, padtype="even")
    return x.with_samples(y)


def lowpass(x: TimeSeries, cutoff_hz: float, order: int = 4) -> TimeSeries:
    """Zero-phase Butterworth low-pass."""
    if not 0 < cutoff_hz < x.sample_rate_hz / 2:
        raise ConfigError(f"cutoff {cutoff_hz} Hz outside (0, Nyquist)")
    sos = ss.butter(order, cutoff_hz, btype="lowpass", fs=x.sample_rate_hz, output="sos")
    return x.with_samples(ss.sosfiltfilt(sos, x.samples, axis=-1))


def resample(x: TimeSeries, target_hz: float) -> TimeSeries:
    """Polyphase rational resampling with a Kaiser-windowed sinc anti-alias filter."""
    if not target_hz > 0:
        raise ConfigError(f"target rate must be > 0, got {target_hz}")
    ratio = Fraction(target_hz / x.sample_rate_hz).limit_denominator(10000)
    up, down = ratio.numerator, ratio.denominator
    if up == down:
        return x
    y = ss.resample_poly(x.samples, up, down, axis=-1, window=("kaiser", 5.0), padtype="line")
    return TimeSeries(y, target_hz, x.start_time_ms)


def hilbert_envelope(x: TimeSeries) -> TimeSeries:
    """Magnitude of the analytic signal."""
    return x.with_samples(np.abs(ss.hilbert(x.samples, axis=-1)))


def gaussian_smooth(x: TimeSeries, sigma_s: float = 0.04) -> TimeSeries:
    """Convolve with a unit-area Gaussian truncated at four standard deviations.

    Edges are reflected, which keeps constants constant and preserves the mean.
    """
    if not sigma_s > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma_s}")
    sigma = sigma_s * x.sample_rate_hz
    y = ndimage.gaussian_filter1d(x.samples, sigma, axis=-1, mode="reflect", truncate=4.0)
    return x.with_samples(y)


def magnitude_spectrum(x: TimeSeries, n_fft: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One-sided amplitude spectrum of a single channel.

    Scaled so a sinusoid of amplitude ``A`` on a bin centre reads ``A``.
    ``n_fft`` larger than the signal zero-pads (finer grid, same resolution);
    by default bins are spaced ``rate / len``.
    """
    v = x.mono
    n = len(v) if n_fft is None else max(int(n_fft), len(v))
    mag = np.abs(np.fft.rfft(v, n=n)) * (2.0 / len(v))
    mag[0] /= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / x.sample_rate_hz)
    return freqs, mag


def detect_peaks(
    x: TimeSeries, min_distance_s: float = 0.25, min_prominence_frac: float = 0.1
) -> list[Peak]:
    """Local maxima with relative prominence and a minimum spacing.

    Prominence is a fraction of the window's dynamic range (max - min), so
    the result is invariant to positive rescaling. Among peaks closer than
    ``min_distance_s`` the tallest wins.
    """
    v = x.mono
    span = float(v.max() - v.min()) if len(v) else 0.0
    if span <= 0:
        return []
    distance = max(1, math.ceil(min_distance_s * x.sample_rate_hz - 1e-9))
    idx, _ = ss.find_peaks(v, distance=distance, prominence=min_prominence_frac * span)
    return [Peak(int(i), i / x.sample_rate_hz, float(v[i])) for i in idx]


def moving_average(xs, k: int = 5) -> np.ndarray:
    """Trailing mean over the last ``min(k, i + 1)`` values.

    NaN entries (missing estimates) are skipped rather than propagated.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        return xs.copy()
    padded = np.concatenate([np.full(k - 1, np.nan), xs])
    view = np.lib.stride_tricks.sliding_window_view(padded, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(view, axis=1)
