"""On-disk recordings: ``subject_<id>/<activity>/`` run directories.

Each run holds ``audio.wav`` (2-channel PCM), ``ecg.csv``
(``timestamp_ms,value``), optionally ``truth.csv`` (``beat_time_s``),
``reference.wav`` (stationary clip used to seed the spectrum search) and
``meta.json`` (audio start time and free-form metadata).
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DataError, FormatError, ShapeError
from .timeseries import TimeSeries, align_streams

ECG_NOMINAL_HZ = 130.0
# Synthetic audio peaks well above 1 with strong artefacts; this maps it into PCM range.
DEFAULT_FULL_SCALE = 32.0
_RUN_DIR = re.compile(r"subject_(?P<subject>[^/\\]+)$")


@dataclass
class Run:
    subject: str
    activity: str
    path: Path
    audio: TimeSeries
    ecg: TimeSeries
    reference: TimeSeries | None = None
    beat_times_s: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def write_wav(path, x: TimeSeries, full_scale: float = DEFAULT_FULL_SCALE):
    """32-bit PCM; samples are divided by ``full_scale`` and must then fit [-1, 1]."""
    y = x.samples / full_scale
    if np.max(np.abs(y), initial=0.0) > 1.0:
        raise DataError(f"signal exceeds full scale {full_scale}")
    pcm = np.round(y.T * (2**31 - 1)).astype("<i4")
    rate = int(round(x.sample_rate_hz))
    if rate != x.sample_rate_hz:
        raise FormatError(f"WAV needs an integer sample rate, got {x.sample_rate_hz}")
    wavfile.write(str(path), rate, pcm)


def read_wav(path, start_time_ms: int = 0) -> TimeSeries:
    """Decode 16/24/32-bit integer or float PCM into [-1, 1]."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError) as e:
        raise FormatError(f"{path}: {e}") from None
    if data.dtype == np.int16:
        y = data / 32768.0
    elif data.dtype == np.int32:  # 24-bit files are left-aligned into int32 by scipy
        y = data / 2147483648.0
    elif data.dtype == np.uint8:
        y = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        y = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype}")
    y = np.atleast_2d(y.T) if y.ndim == 2 else y[np.newaxis]
    return TimeSeries(y, float(rate), start_time_ms)


def write_ecg_csv(path, ecg: TimeSeries):
    t = ecg.start_time_ms + np.arange(ecg.n_samples) * 1000.0 / ecg.sample_rate_hz
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestamp_ms", "value"])
        for ti, v in zip(t, ecg.mono):
            w.writerow([f"{ti:.3f}", repr(float(v))])


def read_ecg_csv(path, nominal_hz: float = ECG_NOMINAL_HZ) -> TimeSeries:
    """ECG rows into a series at the nominal rate, starting at the first timestamp."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["timestamp_ms", "value"]:
        raise FormatError(f"{path}: header must be 'timestamp_ms,value'")
    t, v = [], []
    for i, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        try:
            ti, vi = float(r[0]), float(r[1])
        except (ValueError, IndexError):
            raise FormatError(f"{path}: row {i} is malformed: {r!r}") from None
        if t and ti <= t[-1]:
            raise FormatError(f"{path}: row {i} timestamp {ti} is not after {t[-1]}")
        t.append(ti)
        v.append(vi)
    if len(t) < 2:
        raise FormatError(f"{path}: need at least two ECG samples")
    period = float(np.median(np.diff(t)))
    if abs(period - 1000.0 / nominal_hz) > 0.05 * 1000.0 / nominal_hz:
        raise DataError(
            f"{path}: ECG sample spacing {period:.3f} ms does not match {nominal_hz} Hz"
        )
    return TimeSeries(np.array(v), nominal_hz, int(round(t[0])))


def write_truth(path, beat_times_s):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["beat_time_s"])
        for b in beat_times_s:
            w.writerow([repr(float(b))])


def read_truth(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["beat_time_s"]:
        raise FormatError(f"{path}: header must be 'beat_time_s'")
    try:
        return np.array([float(r[0]) for r in rows[1:] if r])
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_run(run_dir, audio: TimeSeries, ecg: TimeSeries, beat_times_s=None,
              reference: TimeSeries | None = None, meta: dict | None = None,
              full_scale: float = DEFAULT_FULL_SCALE) -> Path:
    d = Path(run_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / "audio.wav", audio, full_scale)
    write_ecg_csv(d / "ecg.csv", ecg)
    if beat_times_s is not None:
        write_truth(d / "truth.csv", beat_times_s)
    info = {"audio_start_ms": int(audio.start_time_ms), "audio_rate_hz": audio.sample_rate_hz,
            "full_scale": full_scale, **(meta or {})}
    if reference is not None:
        write_wav(d / "reference.wav", reference, full_scale)
        info["reference_start_ms"] = int(reference.start_time_ms)
    (d / "meta.json").write_text(json.dumps(info, indent=2))
    return d


def _subject_activity(d: Path) -> tuple[str, str]:
    m = _RUN_DIR.match(d.parent.name)
    return (m.group("subject") if m else d.parent.name), d.name


def ingest(run_dir, channels: int = 2, align: bool = True) -> Run:
    """Load one run directory and trim audio and ECG to their common span."""
    d = Path(run_dir)
    for name in ("audio.wav", "ecg.csv"):
        if not (d / name).is_file():
            raise DataError(f"{d}: missing {name}")
    meta = {}
    if (d / "meta.json").is_file():
        try:
            meta = json.loads((d / "meta.json").read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"{d / 'meta.json'}: {e}") from None
    ecg = read_ecg_csv(d / "ecg.csv")
    audio = read_wav(d / "audio.wav", int(meta.get("audio_start_ms", ecg.start_time_ms)))
    if "audio_rate_hz" in meta and float(meta["audio_rate_hz"]) != audio.sample_rate_hz:
        raise DataError(
            f"{d}: WAV header says {audio.sample_rate_hz} Hz, metadata says {meta['audio_rate_hz']} Hz"
        )
    if audio.channels != channels:
        raise ShapeError(f"{d / 'audio.wav'}: expected {channels} channels, got {audio.channels}")
    reference = None
    if (d / "reference.wav").is_file():
        reference = read_wav(d / "reference.wav", int(meta.get("reference_start_ms", 0)))
    truth = read_truth(d / "truth.csv") if (d / "truth.csv").is_file() else None
    if align:
        audio, ecg = align_streams(audio, ecg)
    subject, activity = _subject_activity(d)
    return Run(subject, activity, d, audio, ecg, reference, truth, meta)


def discover(root) -> list[Path]:
    """All run directories ``subject_*/<activity>/`` under ``root``, sorted."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    runs = sorted(p.parent for p in root.glob("subject_*/*/audio.wav"))
    if not runs:
        raise DataError(f"no runs found under {root}")
    return runs
