"""Log-mel spectrograms, Griffin-Lim inversion and overlap-average stitching.

A 2 s window at 1 kHz with a 32-sample hop gives 63 centred frames; the
window is reflect-padded on the right so that exactly ``n_frames`` (64)
frames come out, matching the square input of the denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, EmptyInputError, ShapeError
from .timeseries import TimeSeries, Window, WindowSpec, window_matrix

LOG_FLOOR_EPS = 1e-10


@dataclass(frozen=True)
class StftConfig:
    win_length: int = 256
    hop: int = 32
    fft_bins: int = 1024
    n_mels: int = 64
    n_frames: int = 64
    sample_rate_hz: float = 1000.0
    mel_fmin_hz: float = 0.0
    mel_fmax_hz: float = 500.0
    window_s: float = 2.0
    power: float = 2.0

    def __post_init__(self):
        if self.win_length > self.fft_bins:
            raise ConfigError("win_length must not exceed fft_bins")
        if not 0 < self.hop <= self.win_length:
            raise ConfigError("hop must be in (0, win_length]")
        if self.n_mels > self.fft_bins // 2 + 1:
            raise ConfigError("n_mels must not exceed fft_bins/2 + 1")
        if not 0 <= self.mel_fmin_hz < self.mel_fmax_hz <= self.sample_rate_hz / 2:
            raise ConfigError("mel range must lie inside [0, Nyquist]")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.sample_rate_hz))

    @property
    def padded_length(self) -> int:
        return (self.n_frames - 1) * self.hop + self.win_length

    @property
    def pad(self) -> tuple[int, int]:
        left = self.win_length // 2
        right = self.padded_length - self.window_samples - left
        if right < 0 or max(left, right) >= self.window_samples:
            raise ConfigError("frame count incompatible with window length")
        return left, right


DEFAULT_STFT = StftConfig()


@dataclass(frozen=True)
class LogMelSpectrogram:
    """Stack of ``(channels, T, F)`` log-mel matrices.

    ``norm_constant`` is 1.0 until :func:`normalize` has been applied.
    """

    values: np.ndarray
    norm_constant: float = 1.0
    log_floor_eps: float = LOG_FLOOR_EPS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[np.newaxis]
        if v.ndim != 3:
            raise ShapeError(f"expected (channels, T, F), got shape {v.shape}")
        if not self.norm_constant > 0:
            raise ConfigError("norm_constant must be > 0")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def normalized(self) -> bool:
        return self.norm_constant != 1.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _mel_cache(cfg: StftConfig):
    fb = _build_filterbank(cfg)
    fb.setflags(write=False)
    pinv = np.linalg.pinv(fb)
    pinv.setflags(write=False)
    return fb, pinv


def mel_band_edges(cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """``n_mels + 2`` triangle corner frequencies (Hz), equally spaced in mel."""
    m = np.linspace(hz_to_mel(cfg.mel_fmin_hz), hz_to_mel(cfg.mel_fmax_hz), cfg.n_mels + 2)
    return mel_to_hz(m)


def _build_filterbank(cfg: StftConfig) -> np.ndarray:
    freqs = np.fft.rfftfreq(cfg.fft_bins, d=1.0 / cfg.sample_rate_hz)
    edges = mel_band_edges(cfg)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    tri = np.maximum(0.0, np.minimum(up, down))
    # unit area in Hz
    return tri * (2.0 / (hi - lo))


def mel_filterbank(cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Triangular, area-normalised filters, shape ``(n_mels, fft_bins // 2 + 1)``."""
    return _mel_cache(cfg)[0]


def _analysis_window(cfg: StftConfig) -> np.ndarray:
    # periodic Hann, the usual choice for STFT analysis
    return np.hanning(cfg.win_length + 1)[:-1]


@lru_cache(maxsize=8)
def _ola_norm(cfg: StftConfig, n_frames: int) -> np.ndarray:
    w2 = _analysis_window(cfg) ** 2
    norm = np.zeros((n_frames - 1) * cfg.hop + cfg.win_length)
    for t in range(n_frames):
        norm[t * cfg.hop : t * cfg.hop + cfg.win_length] += w2
    norm = 1.0 / np.maximum(norm, 1e-12)
    norm.setflags(write=False)
    return norm


def stft(x: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Complex STFT of an already padded signal, shape ``(..., frames, bins)``.

    Each ``win_length`` frame is Hann-weighted and zero-padded to ``fft_bins``.
    Single-precision input gives a single-precision result.
    """
    w = _analysis_window(cfg).astype(x.dtype, copy=False)
    frames = window_matrix(x, cfg.win_length, cfg.hop) * w
    return sfft.rfft(frames, n=cfg.fft_bins, axis=-1)


def istft(spec: np.ndarray, length: int, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Least-squares inverse of :func:`stft` (weighted overlap-add)."""
    n_frames = spec.shape[-2]
    frames = sfft.irfft(spec, n=cfg.fft_bins, axis=-1)[..., : cfg.win_length]
    frames = frames * _analysis_window(cfg).astype(frames.dtype, copy=False)
    covered = (n_frames - 1) * cfg.hop + cfg.win_length
    if cfg.win_length % cfg.hop == 0:
        r = cfg.win_length // cfg.hop
        blocks = frames.reshape(frames.shape[:-1] + (r, cfg.hop))
        acc = np.zeros(frames.shape[:-2] + (n_frames + r - 1, cfg.hop), dtype=frames.dtype)
        for j in range(r):
            acc[..., j : j + n_frames, :] += blocks[..., j, :]
        acc = acc.reshape(frames.shape[:-2] + (-1,))
    else:
        acc = np.zeros(frames.shape[:-2] + (covered,), dtype=frames.dtype)
        for t in range(n_frames):
            acc[..., t * cfg.hop : t * cfg.hop + cfg.win_length] += frames[..., t, :]
    acc = acc * _ola_norm(cfg, n_frames).astype(acc.dtype, copy=False)
    out = np.zeros(frames.shape[:-2] + (length,), dtype=frames.dtype)
    m = min(length, covered)
    out[..., :m] = acc[..., :m]
    return out


def spectral_norm(spec: np.ndarray, axis_bins: int = -1) -> float:
    """Frobenius norm of a one-sided spectrum counted over both halves (Parseval)."""
    a = np.abs(np.asarray(spec, dtype=np.complex128)) ** 2
    total = 2.0 * a.sum() - a.take(0, axis=axis_bins).sum()
    if spec.shape[axis_bins] % 2 == 1:
        total -= a.take(-1, axis=axis_bins).sum()
    return float(np.sqrt(total))


def _pad_window(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    left, right = cfg.pad
    return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left, right)], mode="reflect")


def mel_power(x: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Mel-band power ``(..., T, F)`` of 2 s windows given as ``(..., samples)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != cfg.window_samples:
        raise ShapeError(
            f"window must have {cfg.window_samples} samples, got {x.shape[-1]}"
        )
    spec = stft(_pad_window(x, cfg), cfg)
    p = np.abs(spec) ** cfg.power
    return p @ mel_filterbank(cfg).T


def logmel_array(x: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Vectorised log-mel: ``log(p + eps) - log(eps)`` for ``(..., samples)`` input."""
    return np.log(mel_power(x, cfg) + LOG_FLOOR_EPS) - np.log(LOG_FLOOR_EPS)


def logmel(w: Window | TimeSeries, cfg: StftConfig = DEFAULT_STFT) -> LogMelSpectrogram:
    """Log-mel spectrogram of one window, one ``T x F`` matrix per channel."""
    ts = w.data if isinstance(w, Window) else w
    if ts.sample_rate_hz != cfg.sample_rate_hz:
        raise ShapeError(
            f"window sampled at {ts.sample_rate_hz} Hz, expected {cfg.sample_rate_hz} Hz"
        )
    return LogMelSpectrogram(logmel_array(ts.samples, cfg))


def normalize(s: LogMelSpectrogram, c: float) -> LogMelSpectrogram:
    """Divide by a fixed constant and clip into [0, 1]."""
    if not c > 0:
        raise ConfigError(f"normalisation constant must be > 0, got {c}")
    base = s.values * s.norm_constant
    return LogMelSpectrogram(np.clip(base / c, 0.0, 1.0), float(c), s.log_floor_eps)


def denormalize(s: LogMelSpectrogram) -> LogMelSpectrogram:
    return LogMelSpectrogram(s.values * s.norm_constant, 1.0, s.log_floor_eps)


def mel_to_linear_magnitude(logmel_values: np.ndarray, cfg: StftConfig = DEFAULT_STFT,
                            eps: float = LOG_FLOOR_EPS) -> np.ndarray:
    """Undo the log, then map mel power back to a linear magnitude spectrogram."""
    power_mel = np.maximum(np.exp(logmel_values + np.log(eps)) - eps, 0.0)
    lin = np.maximum(power_mel @ _mel_cache(cfg)[1].T, 0.0)
    return lin ** (1.0 / cfg.power)


def griffin_lim(magnitude: np.ndarray, cfg: StftConfig = DEFAULT_STFT, iters: int = 32,
                residuals: list | None = None) -> np.ndarray:
    """Griffin-Lim phase retrieval on the padded frame grid.

    ``magnitude`` has shape ``(..., frames, bins)``; iterations start from
    zero phase and run in single precision. Returns signals of
    ``cfg.padded_length`` samples. When ``residuals`` is a list, the
    inconsistency ``|| |STFT(x_k)| - M ||`` of every iterate is appended.
    """
    if iters < 1:
        raise ConfigError("need at least one Griffin-Lim iteration")
    mag = np.asarray(magnitude, dtype=np.float32)
    spec = mag.astype(np.complex64)
    length = cfg.padded_length
    for _ in range(iters):
        x = istft(spec, length, cfg)
        rebuilt = stft(x, cfg)
        amp = np.abs(rebuilt)
        if residuals is not None:
            residuals.append(spectral_norm(amp - mag))
        spec = rebuilt * (mag / np.maximum(amp, 1e-30))
    return istft(spec, length, cfg).astype(np.float64)


def griffin_lim_invert(s: LogMelSpectrogram, cfg: StftConfig = DEFAULT_STFT,
                       iters: int = 32, residuals: list | None = None) -> TimeSeries:
    """Waveform (``cfg.window_samples`` long) from a single-channel log-mel spectrogram."""
    if s.channels != 1:
        raise ShapeError(f"expected one channel, got {s.channels}")
    x = invert_batch(s.values * s.norm_constant, cfg, iters, residuals=residuals, eps=s.log_floor_eps)
    return TimeSeries(x[0], cfg.sample_rate_hz)


def invert_batch(values: np.ndarray, cfg: StftConfig = DEFAULT_STFT, iters: int = 32,
                 residuals: list | None = None, eps: float = LOG_FLOOR_EPS) -> np.ndarray:
    """Invert de-normalised log-mel matrices ``(n, T, F)`` to ``(n, samples)`` waveforms."""
    mag = mel_to_linear_magnitude(np.asarray(values, dtype=np.float64), cfg, eps)
    padded = griffin_lim(mag, cfg, iters, residuals=residuals)
    left = cfg.pad[0]
    return padded[..., left : left + cfg.window_samples]


STITCH_TAPERS = ("none", "hann")


def _taper(kind: str, n: int) -> np.ndarray:
    if kind == "none":
        return np.ones(n)
    if kind == "hann":
        # strictly positive so a sample covered by one window keeps its value
        return np.hanning(n + 2)[1:-1]
    raise ConfigError(f"unknown stitch taper {kind!r}; choose from {STITCH_TAPERS}")


def stitch(windows, spec: WindowSpec, align_sign: bool = True, taper: str = "none") -> TimeSeries:
    """Overlap-average consecutive windows laid out at ``spec``'s stride.

    Phase retrieval cannot tell ``x`` from ``-x``, so with ``align_sign`` each
    incoming window is flipped when it anti-correlates (per channel) with
    what has been accumulated over their overlap. Otherwise neighbouring
    reconstructions can cancel each other. ``taper="hann"`` turns the plain
    mean into a Hann-weighted mean, which down-weights window edges.
    """
    windows = list(windows)
    if not windows:
        raise EmptyInputError("nothing to stitch")
    first = windows[0]
    rate = first.sample_rate_hz
    n = first.n_samples
    _, step = spec.samples(rate)
    wts = _taper(taper, n)
    total = (len(windows) - 1) * step + n
    acc = np.zeros((first.channels, total))
    weight = np.zeros(total)
    for i, w in enumerate(windows):
        if w.n_samples != n or w.channels != first.channels:
            raise ShapeError("all windows must share length and channel count")
        sl = slice(i * step, i * step + n)
        x = w.samples * wts
        if align_sign and i and step < n:
            ov = weight[sl] > 0
            flip = np.einsum("cn,cn->c", acc[:, sl][:, ov], x[:, ov]) < 0
            x = np.where(flip[:, None], -x, x)
        acc[:, sl] += x
        weight[sl] += wts
    return TimeSeries(acc / weight, rate, first.start_time_ms)


def with_config(cfg: StftConfig = DEFAULT_STFT, **kw) -> StftConfig:
    return replace(cfg, **kw)
