"""Windowed heart-rate estimation from a cleaned heart signal."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import dsp
from .errors import EmptyInputError, FormatError
from .timeseries import HR_WINDOW, TimeSeries, WindowSpec, segment

HR_MIN_BPM = 40.0
HR_MAX_BPM = 200.0


@dataclass(frozen=True)
class HrSeries:
    """Timestamped BPM estimates, one per analysis window.

    ``bpm`` holds the smoothed output; ``raw_bpm`` the per-window values
    before the trailing moving average. ``confidence`` 0 marks a failed
    window whose value was carried over (NaN when nothing could be carried).
    """

    start_ms: np.ndarray
    bpm: np.ndarray
    confidence: np.ndarray
    raw_bpm: np.ndarray | None = None

    def __post_init__(self):
        start = np.asarray(self.start_ms, dtype=np.int64)
        bpm = np.asarray(self.bpm, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if not (start.shape == bpm.shape == conf.shape) or start.ndim != 1:
            raise FormatError("start_ms, bpm and confidence must be equal-length 1-D arrays")
        if np.any(np.diff(start) <= 0):
            raise FormatError("window starts must be strictly increasing")
        raw = bpm if self.raw_bpm is None else np.asarray(self.raw_bpm, dtype=np.float64)
        object.__setattr__(self, "start_ms", start)
        object.__setattr__(self, "bpm", bpm)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "raw_bpm", raw)

    def __len__(self):
        return len(self.bpm)

    @property
    def valid(self) -> np.ndarray:
        return (self.confidence > 0) & np.isfinite(self.bpm)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start_ms", "bpm", "confidence"])
        for s, b, c in zip(self.start_ms, self.bpm, self.confidence):
            w.writerow([int(s), repr(float(b)), repr(float(c))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "HrSeries":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["start_ms", "bpm", "confidence"]:
            raise FormatError("HR CSV must start with header start_ms,bpm,confidence")
        try:
            data = [(int(r[0]), float(r[1]), float(r[2])) for r in rows[1:] if r]
        except (ValueError, IndexError) as e:
            raise FormatError(f"malformed HR CSV row: {e}") from None
        if not data:
            return cls(np.zeros(0), np.zeros(0), np.zeros(0))
        s, b, c = map(np.array, zip(*data))
        return cls(s, b, c)


def interval_confidence(intervals: np.ndarray, tolerance: float = 0.2) -> float:
    """Share of inter-peak intervals within +-20 % of their median."""
    if len(intervals) == 0:
        return 0.0
    med = np.median(intervals)
    return float(np.mean(np.abs(intervals - med) <= tolerance * med))


def window_rate(x: TimeSeries, sigma_s: float = 0.04, min_distance_s: float = 0.25,
                min_prominence_frac: float = 0.1) -> tuple[float, float]:
    """(BPM, confidence) of one window from its smoothed envelope peaks.

    Returns ``(nan, 0.0)`` when fewer than two peaks are found.
    """
    env = dsp.gaussian_smooth(dsp.hilbert_envelope(x), sigma_s)
    peaks = dsp.detect_peaks(env, min_distance_s, min_prominence_frac)
    if len(peaks) < 2:
        return float("nan"), 0.0
    t = np.array([p.time_s for p in peaks])
    intervals = np.diff(t)
    return 60.0 / float(np.mean(intervals)), interval_confidence(intervals)


def assemble(starts_ms, raw_bpm, raw_conf, ma_window: int = 5) -> HrSeries:
    """Carry failed windows forward, then apply the trailing moving average."""
    raw_bpm = np.asarray(raw_bpm, dtype=np.float64)
    conf = np.asarray(raw_conf, dtype=np.float64).copy()
    carried = raw_bpm.copy()
    last = np.nan
    for i in range(len(carried)):
        if np.isfinite(carried[i]) and conf[i] > 0:
            last = carried[i]
        else:
            carried[i] = last
            conf[i] = 0.0
    smooth = dsp.moving_average(carried, ma_window)
    return HrSeries(np.asarray(starts_ms), smooth, conf, raw_bpm=carried)


def estimate_hr(clean: TimeSeries, spec: WindowSpec = HR_WINDOW, sigma_s: float = 0.04,
                min_distance_s: float = 0.25, min_prominence_frac: float = 0.1,
                ma_window: int = 5) -> HrSeries:
    """HR series from a single-channel cleaned heart signal (10 s windows, 5 s stride)."""
    clean.mono  # single channel only
    if clean.duration_s < spec.length_s:
        raise EmptyInputError(f"need at least {spec.length_s}s of signal, got {clean.duration_s:.2f}s")
    windows = segment(clean, spec)
    starts, bpm, conf = [], [], []
    for w in windows:
        b, c = window_rate(w.data, sigma_s, min_distance_s, min_prominence_frac)
        starts.append(w.start_time_ms)
        bpm.append(b)
        conf.append(c)
    return assemble(starts, bpm, conf, ma_window)
