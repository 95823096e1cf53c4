"""End-to-end processing: preprocessing, the three HR methods and the latency bench."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import denoise_sp, dsp, hr, spectro
from .config import PipelineConfig
from .errors import ConfigError, EarHRError, EmptyInputError, EstimationError
from .hr import HrSeries
from .timeseries import TimeSeries, segment, window_matrix
from .training import PairSet
from .unet import DenoiserModel


class StageError(EarHRError):
    """Wraps a failure with the name of the pipeline stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageError:
                raise
            except EarHRError as e:
                raise StageError(name, e) from e
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


def preprocess_audio(audio: TimeSeries, cfg: PipelineConfig = PipelineConfig()) -> TimeSeries:
    """Resample to the working rate, then band-pass to the heart-sound band."""
    return dsp.butter_bandpass(dsp.resample(audio, cfg.target_rate_hz), cfg.audio_band)


def preprocess_ecg(ecg: TimeSeries, cfg: PipelineConfig = PipelineConfig()) -> TimeSeries:
    """Band-pass at the native rate, then upsample to the working rate."""
    return dsp.resample(dsp.butter_bandpass(ecg, cfg.ecg_band), cfg.target_rate_hz)


def logmel_windows(x: TimeSeries, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Un-normalised log-mels of every 2 s window: ``(n_windows, channels, T, F)``."""
    n, step = cfg.spec_window.samples(x.sample_rate_hz)
    if x.n_samples < n:
        raise EmptyInputError(f"signal shorter than one {cfg.spec_window_s}s window")
    frames = window_matrix(x.samples, n, step)  # (C, W, n)
    return np.moveaxis(spectro.logmel_array(frames, cfg.stft), 0, 1)


def norm_constant(*arrays) -> float:
    """Largest log-mel value across the given arrays (the shared scaling constant)."""
    c = max(float(np.max(a)) for a in arrays if np.size(a))
    if not c > 0:
        raise ConfigError("cannot derive a normalisation constant from all-zero spectrograms")
    return c


def pair_arrays(audio_p: TimeSeries, ecg_p: TimeSeries,
                cfg: PipelineConfig = PipelineConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Matching un-normalised audio and ECG log-mel windows of a preprocessed run."""
    n = min(audio_p.n_samples, ecg_p.n_samples)
    a = logmel_windows(audio_p.slice(0, n), cfg)
    e = logmel_windows(ecg_p.slice(0, n), cfg)
    return a, e


def make_pairs(runs, c: float | None = None) -> PairSet:
    """PairSet from ``(subject, audio_logmels, ecg_logmels)`` triples, scaled by ``c``."""
    runs = list(runs)
    if not runs:
        raise ConfigError("no runs to build pairs from")
    if c is None:
        c = norm_constant(*[r[1] for r in runs], *[r[2] for r in runs])
    xs, ys, subj = [], [], []
    for s, a, e in runs:
        xs.append(np.clip(a / c, 0.0, 1.0))
        ys.append(np.clip(e / c, 0.0, 1.0))
        subj.append(np.full(len(a), s))
    return PairSet(np.concatenate(xs), np.concatenate(ys), np.concatenate(subj), c)


# --- the three methods --------------------------------------------------------

def baseline_series(audio_p: TimeSeries, cfg: PipelineConfig = PipelineConfig()) -> HrSeries:
    """Envelope-spectrum peak per 10 s window."""
    starts, bpm, conf = [], [], []
    for w in segment(audio_p, cfg.hr_window):
        try:
            est = denoise_sp.baseline_hr(w.data, cfg.band)
        except EstimationError:
            est = denoise_sp.SpectralHr(float("nan"), 0.0)
        starts.append(w.start_time_ms)
        bpm.append(est.bpm)
        conf.append(est.confidence)
    return hr.assemble(starts, bpm, conf, cfg.ma_window)


def reference_bpm(reference: TimeSeries | None, audio_p: TimeSeries,
                  cfg: PipelineConfig = PipelineConfig()) -> float:
    """Starting HR for the search chain: the stationary reference, else the first window."""
    src = reference if reference is not None else segment(audio_p, cfg.hr_window)[0].data
    return denoise_sp.baseline_hr(src, cfg.band).bpm


def sp_series(audio_p: TimeSeries, reference_p: TimeSeries | None = None,
              cfg: PipelineConfig = PipelineConfig()) -> HrSeries:
    """Wavelet artefact removal, then a spectrum search around the previous HR.

    Low-confidence windows are reported but keep the previous HR as the
    search centre.
    """
    prev = reference_bpm(reference_p, audio_p, cfg)
    starts, bpm, conf = [], [], []
    for w in segment(audio_p, cfg.hr_window):
        est = denoise_sp.spectrum_search_hr(denoise_sp.dwt_denoise(w.data, cfg.dwt), prev, cfg.band)
        if est.confidence > denoise_sp.LOW_CONFIDENCE:
            prev = est.bpm
        starts.append(w.start_time_ms)
        bpm.append(est.bpm)
        conf.append(est.confidence)
    return hr.assemble(starts, bpm, conf, cfg.ma_window)


def series_from_clean(clean: TimeSeries, cfg: PipelineConfig = PipelineConfig()) -> HrSeries:
    return hr.estimate_hr(clean, cfg.hr_window, cfg.smooth_sigma_s, cfg.peak_min_distance_s,
                          cfg.peak_min_prominence, cfg.ma_window)


def denoise_windows(model: DenoiserModel, logmels: np.ndarray) -> np.ndarray:
    """Normalise, run the network and de-normalise: ``(n, 2, T, F) -> (n, T, F)``."""
    c = model.norm_constant
    y = model.predict(np.clip(logmels / c, 0.0, 1.0))
    return y[:, 0].astype(np.float64) * c


def reconstruct(denoised: np.ndarray, start_time_ms: int,
                cfg: PipelineConfig = PipelineConfig()) -> TimeSeries:
    """Griffin-Lim every window and overlap-average them into one waveform."""
    wav = spectro.invert_batch(denoised, cfg.stft, cfg.gl_iters)
    stitched = spectro.stitch([TimeSeries(w, cfg.target_rate_hz) for w in wav], cfg.spec_window,
                              taper=cfg.stitch_taper)
    return TimeSeries(stitched.samples, stitched.sample_rate_hz, start_time_ms)


def dl_series(audio_p: TimeSeries, model: DenoiserModel | None,
              cfg: PipelineConfig = PipelineConfig(), intermediates: dict | None = None) -> HrSeries:
    if model is None:
        raise ConfigError("method 'dl' needs a trained checkpoint")
    lm = logmel_windows(audio_p, cfg)
    den = denoise_windows(model, lm)
    clean = reconstruct(den, audio_p.start_time_ms, cfg)
    if intermediates is not None:
        intermediates.update(logmel=lm, denoised=den, reconstructed=clean)
    return series_from_clean(clean, cfg)


def gt_series(ecg_p: TimeSeries, cfg: PipelineConfig = PipelineConfig()) -> HrSeries:
    """Reference HR: the same windowed peak-interval estimator on the filtered ECG."""
    return series_from_clean(ecg_p, cfg)


@dataclass
class PipelineResult:
    hr: HrSeries
    intermediates: dict = field(default_factory=dict)


def run_pipeline(cfg: PipelineConfig, audio: TimeSeries, model: DenoiserModel | None = None,
                 reference: TimeSeries | None = None, dump_dir=None) -> PipelineResult:
    """Raw audio in, HR series out, with stage intermediates kept for inspection."""
    if cfg.method == "dl" and model is None:
        raise ConfigError("method 'dl' needs a trained checkpoint")
    inter: dict = {}
    audio_p = _stage("preprocess")(preprocess_audio)(audio, cfg)
    inter["preprocessed"] = audio_p
    if cfg.method == "baseline":
        series = _stage("baseline")(baseline_series)(audio_p, cfg)
    elif cfg.method == "sp":
        ref_p = None if reference is None else _stage("preprocess")(preprocess_audio)(reference, cfg)
        series = _stage("sp")(sp_series)(audio_p, ref_p, cfg)
    else:
        series = _stage("dl")(dl_series)(audio_p, model, cfg, inter)
    if dump_dir is not None:
        dump_intermediates(dump_dir, inter)
    return PipelineResult(series, inter)


def dump_intermediates(dump_dir, inter: dict):
    d = Path(dump_dir)
    d.mkdir(parents=True, exist_ok=True)
    for k, v in inter.items():
        if isinstance(v, TimeSeries):
            np.savez(d / f"{k}.npz", samples=v.samples, sample_rate_hz=v.sample_rate_hz,
                     start_time_ms=v.start_time_ms)
        else:
            np.save(d / f"{k}.npy", v)


# --- latency ------------------------------------------------------------------

BENCH_STAGES = ("Preprocessing", "Denoising", "Reconstruction", "HR extraction")


@dataclass
class BenchReport:
    """Median wall times in ms. Per-2 s-window stages are also given per 10 s window."""

    per_2s_window_ms: dict
    per_10s_window_ms: dict
    total_per_10s_ms: float
    repetitions: int
    windows_per_10s: int

    def to_dict(self) -> dict:
        return {
            "per_2s_window_ms": self.per_2s_window_ms,
            "per_10s_window_ms": self.per_10s_window_ms,
            "total_per_10s_window_ms": self.total_per_10s_ms,
            "repetitions": self.repetitions,
            "spectrogram_windows_per_10s": self.windows_per_10s,
        }


def bench(cfg: PipelineConfig, audio: TimeSeries, model: DenoiserModel,
          repetitions: int = 30, warmup: int = 2) -> BenchReport:
    """Time each stage of the dl path on the first 10 s of ``audio``.

    The 10 s window is cut into its 2 s spectrogram windows; preprocessing
    and denoising are timed over all of them, reconstruction and HR
    extraction over the whole 10 s window. The total is measured end to end.
    """
    if repetitions < 1:
        raise ConfigError("need at least one repetition")
    n10 = int(round(cfg.hr_window_s * audio.sample_rate_hz))
    if audio.n_samples < n10:
        raise ConfigError(f"bench needs at least {cfg.hr_window_s}s of audio")
    clip = audio.slice(0, n10)
    times = {s: [] for s in BENCH_STAGES}
    totals = []
    n_win = None
    for rep in range(warmup + repetitions):
        t0 = time.perf_counter()
        p = preprocess_audio(clip, cfg)
        lm = logmel_windows(p, cfg)
        t1 = time.perf_counter()
        den = denoise_windows(model, lm)
        t2 = time.perf_counter()
        clean = reconstruct(den, p.start_time_ms, cfg)
        t3 = time.perf_counter()
        hr.window_rate(clean, cfg.smooth_sigma_s, cfg.peak_min_distance_s, cfg.peak_min_prominence)
        t4 = time.perf_counter()
        n_win = len(lm)
        if rep >= warmup:
            for s, dt in zip(BENCH_STAGES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
                times[s].append(dt * 1e3)
            totals.append((t4 - t0) * 1e3)
    per10 = {s: float(np.median(v)) for s, v in times.items()}
    per2 = {s: per10[s] / n_win for s in BENCH_STAGES[:2]}
    return BenchReport(per2, per10, float(np.median(totals)), repetitions, n_win)
