"""Signal-processing HR estimators: envelope-spectrum baseline, wavelet
artefact removal and the temporally constrained spectrum search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pywt
from scipy import ndimage

from . import dsp
from .errors import ConfigError, EstimationError
from .timeseries import TimeSeries


@dataclass(frozen=True)
class HrBand:
    min_bpm: float = 40.0
    max_bpm: float = 200.0
    search_halfwidth_bpm: float = 10.0

    def __post_init__(self):
        if not self.min_bpm < self.max_bpm:
            raise ConfigError("min_bpm must be below max_bpm")
        if not self.search_halfwidth_bpm > 0:
            raise ConfigError("search half-width must be > 0")


@dataclass(frozen=True)
class DwtSpec:
    wavelet: str = "db4"
    levels: int = 6
    variance_factor: float = 1.5
    spread: int = 1

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if not self.variance_factor > 0:
            raise ConfigError("variance_factor must be > 0")
        if self.spread < 0:
            raise ConfigError("spread must be >= 0")


class SpectralHr(NamedTuple):
    bpm: float
    confidence: float


# Zero-padded FFT length for envelope spectra: a 0.01 Hz grid for 10 s windows.
_SPECTRUM_GRID_HZ = 0.01
# Peak-to-median ratio at which confidence saturates at 1.
_CONFIDENT_RATIO = 10.0
# Confidence of an estimate that exists but is weak or pinned to the search
# edge. Zero is reserved for windows with no estimate at all.
LOW_CONFIDENCE = 0.01


def envelope_spectrum(x: TimeSeries) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude spectrum of the Hilbert envelope, channel-averaged, DC removed."""
    env = dsp.hilbert_envelope(x).samples.mean(axis=0)
    env = env - env.mean()
    n_fft = max(len(env), int(round(x.sample_rate_hz / _SPECTRUM_GRID_HZ)))
    return dsp.magnitude_spectrum(TimeSeries(env, x.sample_rate_hz), n_fft=n_fft)


def _peak_confidence(mag: np.ndarray, k: int) -> float:
    med = float(np.median(mag))
    if mag[k] <= 0:
        return 0.0
    if med <= 0:
        return 1.0
    ratio = mag[k] / med
    return float(np.clip((ratio - 2.0) / (_CONFIDENT_RATIO - 2.0), LOW_CONFIDENCE, 1.0))


def _is_local_max(mag: np.ndarray, k: int) -> bool:
    left = mag[k - 1] if k > 0 else -np.inf
    right = mag[k + 1] if k + 1 < len(mag) else -np.inf
    return mag[k] >= left and mag[k] >= right and mag[k] > 0


def _band_indices(freqs: np.ndarray, lo_bpm: float, hi_bpm: float) -> np.ndarray:
    return np.flatnonzero((freqs * 60.0 >= lo_bpm) & (freqs * 60.0 <= hi_bpm))


def spectral_peak(freqs: np.ndarray, mag: np.ndarray, lo_bpm: float, hi_bpm: float) -> SpectralHr:
    """Largest spectral value between two rates.

    Confidence compares the peak with the median in-band magnitude and is
    ``LOW_CONFIDENCE`` when the maximum sits on the band edge without being a
    true local maximum of the full spectrum.
    """
    if lo_bpm > hi_bpm:
        raise ConfigError(f"empty search band [{lo_bpm}, {hi_bpm}] BPM")
    sel = _band_indices(freqs, lo_bpm, hi_bpm)
    if len(sel) == 0:
        # band narrower than the grid spacing: nothing to measure
        return SpectralHr(0.5 * (lo_bpm + hi_bpm), 0.0)
    k = sel[np.argmax(mag[sel])]
    conf = _peak_confidence(mag[sel], int(np.argmax(mag[sel])))
    if not _is_local_max(mag, k):
        conf = LOW_CONFIDENCE
    return SpectralHr(float(freqs[k] * 60.0), conf)


def harmonic_score(freqs: np.ndarray, mag: np.ndarray, n_harmonics: int = 3) -> np.ndarray:
    """Sum of spectrum magnitudes at ``f, 2f, ..., n*f`` for every grid frequency."""
    score = mag.copy()
    for h in range(2, n_harmonics + 1):
        score += np.interp(h * freqs, freqs, mag, right=0.0)
    return score


# Spectral peaks below this fraction of the in-band maximum are not candidates.
_CANDIDATE_FLOOR = 0.2


def baseline_hr(x: TimeSeries, band: HrBand = HrBand(), n_harmonics: int = 3) -> SpectralHr:
    """Dominant envelope-spectrum rate inside the physiological band.

    The candidates are the in-band spectral peaks holding at least a fifth
    of the largest one; they are ranked by a short harmonic sum so that a
    strong S1/S2 overtone does not outrank the beat fundamental. Raises
    :class:`EstimationError` when the band holds no spectral peak at all
    (e.g. a silent window).
    """
    freqs, mag = envelope_spectrum(x)
    sel = _band_indices(freqs, band.min_bpm, band.max_bpm)
    if len(sel) == 0:
        raise ConfigError(f"window too short to resolve [{band.min_bpm}, {band.max_bpm}] BPM")
    peaks = np.array([i for i in sel if _is_local_max(mag, i)], dtype=int)
    if len(peaks) == 0:
        raise EstimationError("no spectral peak in the heart-rate band")
    peaks = peaks[mag[peaks] >= _CANDIDATE_FLOOR * mag[peaks].max()]
    score = harmonic_score(freqs, mag, n_harmonics)
    k = peaks[np.argmax(score[peaks])]
    conf = _peak_confidence(score[sel], int(np.searchsorted(sel, k)))
    return SpectralHr(float(freqs[k] * 60.0), conf)


def _zero_outliers(c: np.ndarray, factor: float, spread: int):
    sd = c.std()
    # a flat level (e.g. the approximation of a constant) has nothing to remove
    if sd <= 1e-12 * (np.abs(c).max() + 1e-300):
        return
    bad = np.abs(c - c.mean()) > factor * sd
    if spread and bad.any():
        bad = ndimage.binary_dilation(bad, iterations=spread)
    c[bad] = 0.0


def dwt_denoise(x: TimeSeries, spec: DwtSpec = DwtSpec()) -> TimeSeries:
    """Zero wavelet coefficients that sit far from their level mean.

    Per level, coefficients with ``|c - mean| > variance_factor * sd`` are
    treated as artefact transients and removed together with ``spread``
    neighbours on each side. The approximation is thresholded as well,
    since footstep energy reaches below the coarsest detail band. The
    inverse transform is cropped to the input length.
    """
    n = x.n_samples
    if spec.levels < 1 or spec.levels > math.floor(math.log2(max(n, 1))):
        raise ConfigError(f"{spec.levels} levels do not fit a window of {n} samples")
    wavelet = pywt.Wavelet(spec.wavelet)
    if pywt.dwt_max_level(n, wavelet.dec_len) < spec.levels:
        raise ConfigError(f"window of {n} samples too short for {spec.levels} {spec.wavelet} levels")
    out = []
    for ch in x.samples:
        coeffs = pywt.wavedec(np.array(ch), wavelet, level=spec.levels)
        for c in coeffs:
            _zero_outliers(c, spec.variance_factor, spec.spread)
        out.append(pywt.waverec(coeffs, wavelet)[:n])
    return x.with_samples(np.array(out))


def spectrum_search_hr(x: TimeSeries, prev_bpm: float, band: HrBand = HrBand()) -> SpectralHr:
    """Envelope-spectrum peak restricted to ``prev +- halfwidth`` within the band."""
    lo = max(band.min_bpm, prev_bpm - band.search_halfwidth_bpm)
    hi = min(band.max_bpm, prev_bpm + band.search_halfwidth_bpm)
    if lo > hi:
        raise ConfigError(f"search window around {prev_bpm} BPM misses [{band.min_bpm}, {band.max_bpm}]")
    freqs, mag = envelope_spectrum(x)
    return spectral_peak(freqs, mag, lo, hi)
