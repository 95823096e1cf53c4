"""Synthetic in-ear recordings with known beat times.

Each beat contributes two Gaussian-windowed tone bursts to the audio (S1 at
the beat, S2 a systolic interval later) and one R spike with small P and T
waves to the ECG. Motion artefacts are added on top: periodic foot strikes
(short in-band impacts) or irregular jaw-motion
bursts for speech. Everything is driven by a single seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dataset
from .errors import ConfigError
from .timeseries import HR_WINDOW, TimeSeries, WindowSpec

AUDIO_RATE_HZ = 1000.0
ECG_RATE_HZ = 130.0

ACTIVITIES = ("stationary", "walking", "running", "speaking")

# (mean, sd, min, max) of per-run HR in BPM by activity
HR_DISTRIBUTIONS = {
    "stationary": (70.0, 12.0, 45.0, 114.0),
    "walking": (86.0, 14.0, 51.0, 129.0),
    "running": (109.0, 23.0, 50.0, 187.0),
    "speaking": (76.0, 12.0, 51.0, 124.0),
}

# (mean, sd, min, max) cadence in Hz
CADENCE_DISTRIBUTIONS = {
    "walking": (1.8, 0.12, 1.5, 2.1),
    "running": (2.6, 0.15, 2.3, 3.0),
}

DEFAULT_ARTEFACT_RATIO = {"walking": 5.0, "running": 15.0, "speaking": 8.0}


@dataclass(frozen=True)
class HrProfile:
    """Piecewise-linear heart rate through ``(time_s, bpm)`` knots."""

    knots_s: tuple = (0.0,)
    bpm: tuple = (70.0,)

    def __post_init__(self):
        if len(self.knots_s) != len(self.bpm) or not self.bpm:
            raise ConfigError("knots and bpm values must have the same non-zero length")
        if np.any(np.diff(self.knots_s) <= 0):
            raise ConfigError("HR profile knots must be strictly increasing")
        if min(self.bpm) < 40 or max(self.bpm) > 200:
            raise ConfigError("HR profile must stay within [40, 200] BPM")

    @classmethod
    def constant(cls, bpm: float) -> "HrProfile":
        return cls((0.0,), (float(bpm),))

    @classmethod
    def ramp(cls, start_bpm: float, end_bpm: float, duration_s: float) -> "HrProfile":
        return cls((0.0, float(duration_s)), (float(start_bpm), float(end_bpm)))

    def at(self, t):
        return np.interp(t, self.knots_s, self.bpm)


@dataclass(frozen=True)
class Footsteps:
    cadence_hz: float = 1.8
    amplitude_ratio: float = 5.0

    def __post_init__(self):
        if not 1.2 <= self.cadence_hz <= 3.0:
            raise ConfigError(f"cadence {self.cadence_hz} Hz outside [1.2, 3.0]")
        if self.amplitude_ratio < 0:
            raise ConfigError("amplitude_ratio must be >= 0")


@dataclass(frozen=True)
class Speech:
    burst_rate_hz: float = 1.5
    amplitude_ratio: float = 8.0

    def __post_init__(self):
        if self.burst_rate_hz <= 0 or self.amplitude_ratio < 0:
            raise ConfigError("speech burst rate must be > 0 and amplitude_ratio >= 0")


@dataclass(frozen=True)
class SynthScenario:
    """Recording recipe.

    ``s1s2_gap_s`` is the S1-S2 interval at 60 BPM; it scales with the RR
    interval so S2 stays at a fixed fraction of the cycle.
    """

    duration_s: float = 60.0
    hr_profile: HrProfile = field(default_factory=HrProfile)
    s1_freq_hz: float = 25.0
    s2_freq_hz: float = 45.0
    s1s2_gap_s: float = 0.3
    s2_gain: float = 0.5
    burst_sigma_s: float = 0.05
    gap_jitter_s: float = 0.01
    artefact: Footsteps | Speech | None = None
    snr_db: float = 20.0
    channel_gain_db: float = 2.0
    channel_delay_s: float = 0.005
    start_time_ms: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration must be > 0")


@dataclass
class SynthTruth:
    beat_times_s: np.ndarray
    hr_profile: HrProfile
    duration_s: float

    def window_hr(self, spec: WindowSpec = HR_WINDOW) -> tuple[np.ndarray, np.ndarray]:
        """Per-window HR from the mean inter-beat interval inside each window.

        Returns window start times (s) and BPM (NaN where fewer than two beats).
        """
        n = int(np.floor((self.duration_s - spec.length_s) / spec.stride_s + 1e-9)) + 1
        starts = np.arange(max(n, 0)) * spec.stride_s
        bpm = np.full(len(starts), np.nan)
        for i, s in enumerate(starts):
            b = self.beat_times_s[(self.beat_times_s >= s) & (self.beat_times_s < s + spec.length_s)]
            if len(b) >= 2:
                bpm[i] = 60.0 / np.mean(np.diff(b))
        return starts, bpm


def beat_times(profile: HrProfile, duration_s: float, dt: float = 1e-3) -> np.ndarray:
    """Times where the integrated cardiac phase crosses an integer (first beat at 0)."""
    t = np.arange(0.0, duration_s + dt, dt)
    phase = np.concatenate([[0.0], np.cumsum(profile.at(t[:-1]) / 60.0 * dt)])
    k = np.arange(0, int(np.floor(phase[-1])) + 1)
    beats = np.interp(k, phase, t)
    # integration round-off can put a beat a hair before the end; drop it
    return beats[beats < duration_s - 1e-6]


def _bursts(t: np.ndarray, centres: np.ndarray, sigma: float, freq: float) -> np.ndarray:
    out = np.zeros_like(t)
    half = int(np.ceil(5 * sigma / (t[1] - t[0])))
    dt = t[1] - t[0]
    for c in centres:
        j = int(round(c / dt))
        lo, hi = max(0, j - half), min(len(t), j + half + 1)
        if lo >= hi:
            continue
        tau = t[lo:hi] - c
        out[lo:hi] += np.exp(-0.5 * (tau / sigma) ** 2) * np.cos(2 * np.pi * freq * tau)
    return out


def heart_sounds(t: np.ndarray, beats: np.ndarray, sc: SynthScenario,
                 rng: np.random.Generator) -> np.ndarray:
    """Clean S1/S2 waveform for the given beat times."""
    rr = 60.0 / sc.hr_profile.at(beats)
    gap = sc.s1s2_gap_s * rr + rng.uniform(-sc.gap_jitter_s, sc.gap_jitter_s, len(beats))
    s1 = _bursts(t, beats, sc.burst_sigma_s, sc.s1_freq_hz)
    s2 = _bursts(t, beats + gap, sc.burst_sigma_s, sc.s2_freq_hz)
    return s1 + sc.s2_gain * s2


def _thud(tau: np.ndarray) -> np.ndarray:
    """Single heel strike: a 20 Hz ring decaying over 15 ms, starting at ``tau = 0``."""
    t = np.maximum(tau, 0.0)
    return np.where(tau >= 0, np.exp(-t / 0.015) * np.sin(2 * np.pi * 20.0 * t), 0.0)


def footstep_artefact(t: np.ndarray, art: Footsteps, rng: np.random.Generator) -> np.ndarray:
    period = 1.0 / art.cadence_hz
    steps = np.arange(rng.uniform(0, period), t[-1] + period, period)
    steps = steps + rng.normal(0, 0.01, len(steps))
    amps = art.amplitude_ratio * rng.uniform(0.85, 1.15, len(steps))
    out = np.zeros_like(t)
    dt = t[1] - t[0]
    half = int(0.3 / dt)
    for s, a in zip(steps, amps):
        j = int(round(s / dt))
        lo, hi = max(0, j - half), min(len(t), j + half)
        if lo < hi:
            out[lo:hi] += a * _thud(t[lo:hi] - s)
    return out


def speech_artefact(t: np.ndarray, art: Speech, rng: np.random.Generator) -> np.ndarray:
    """Irregular low-frequency bursts from jaw motion."""
    dt = t[1] - t[0]
    out = np.zeros_like(t)
    n_bursts = rng.poisson(art.burst_rate_hz * (t[-1] + dt))
    for _ in range(n_bursts):
        c = rng.uniform(0, t[-1])
        dur = rng.uniform(0.2, 0.6)
        f = rng.uniform(1.0, 4.0)
        tau = t - c
        env = np.exp(-0.5 * (tau / (dur / 4)) ** 2)
        chirp = np.sin(2 * np.pi * f * tau + rng.uniform(0, 2 * np.pi))
        chirp += 0.4 * np.sin(2 * np.pi * rng.uniform(8, 30) * tau + rng.uniform(0, 2 * np.pi))
        out += art.amplitude_ratio * rng.uniform(0.5, 1.0) * env * chirp
    return out


def ecg_waveform(t: np.ndarray, beats: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """R spikes (with P/T waves and slow baseline wander) in millivolts."""
    out = np.zeros_like(t)
    dt = t[1] - t[0]
    half = int(np.ceil(0.5 / dt))
    for b in beats:
        j = int(round(b / dt))
        lo, hi = max(0, j - half), min(len(t), j + half + 1)
        if lo >= hi:
            continue
        tau = t[lo:hi] - b
        out[lo:hi] += (
            1.0 * np.exp(-0.5 * (tau / 0.008) ** 2)
            - 0.15 * np.exp(-0.5 * ((tau - 0.025) / 0.01) ** 2)
            + 0.12 * np.exp(-0.5 * ((tau + 0.16) / 0.03) ** 2)
            + 0.25 * np.exp(-0.5 * ((tau - 0.28) / 0.05) ** 2)
        )
    out += 0.1 * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    out += rng.normal(0, 0.01, len(t))
    return out


def generate(sc: SynthScenario) -> tuple[TimeSeries, TimeSeries, SynthTruth]:
    """Paired 2-channel audio (1 kHz), ECG (130 Hz) and ground truth."""
    rng = np.random.default_rng(sc.seed)
    beats = beat_times(sc.hr_profile, sc.duration_s)
    n = int(round(sc.duration_s * AUDIO_RATE_HZ))
    t = np.arange(n) / AUDIO_RATE_HZ

    hs = heart_sounds(t, beats, sc, rng)
    hs_power = np.mean(hs ** 2) if np.any(hs) else 1.0

    delay = int(round(rng.uniform(0, sc.channel_delay_s) * AUDIO_RATE_HZ))
    gains_db = rng.uniform(-sc.channel_gain_db, sc.channel_gain_db, 2) / 2
    gains = 10.0 ** (gains_db / 20.0)
    ch = np.stack([gains[0] * hs, gains[1] * np.roll(hs, delay)])
    if delay:
        ch[1, :delay] = 0.0

    if isinstance(sc.artefact, Footsteps):
        art = footstep_artefact(t, sc.artefact, rng)
        ch = ch + np.stack([art, 0.9 * art])
    elif isinstance(sc.artefact, Speech):
        art = speech_artefact(t, sc.artefact, rng)
        ch = ch + np.stack([art, 0.95 * art])

    noise_sd = np.sqrt(hs_power / 10.0 ** (sc.snr_db / 10.0))
    ch = ch + rng.normal(0.0, noise_sd, ch.shape)

    n_ecg = int(np.floor(sc.duration_s * ECG_RATE_HZ))
    t_ecg = np.arange(n_ecg) / ECG_RATE_HZ
    ecg = ecg_waveform(t_ecg, beats, rng)

    audio_ts = TimeSeries(ch, AUDIO_RATE_HZ, sc.start_time_ms)
    ecg_ts = TimeSeries(ecg, ECG_RATE_HZ, sc.start_time_ms)
    return audio_ts, ecg_ts, SynthTruth(beats, sc.hr_profile, sc.duration_s)


def draw_hr(activity: str, rng: np.random.Generator) -> float:
    mean, sd, lo, hi = HR_DISTRIBUTIONS[activity]
    return float(np.clip(rng.normal(mean, sd), lo, hi))


def activity_scenario(activity: str, rng: np.random.Generator, duration_s: float = 120.0,
                      start_time_ms: int = 0) -> SynthScenario:
    """Scenario for one protocol activity with a randomly drawn HR baseline."""
    if activity not in HR_DISTRIBUTIONS:
        raise ConfigError(f"unknown activity {activity!r}")
    hr = draw_hr(activity, rng)
    drift = rng.uniform(-5, 5)
    end = float(np.clip(hr + drift, 40, 200))
    profile = HrProfile.ramp(hr, end, duration_s)
    artefact = None
    if activity in CADENCE_DISTRIBUTIONS:
        mean, sd, lo, hi = CADENCE_DISTRIBUTIONS[activity]
        cadence = float(np.clip(rng.normal(mean, sd), lo, hi))
        artefact = Footsteps(cadence, DEFAULT_ARTEFACT_RATIO[activity])
    elif activity == "speaking":
        artefact = Speech(1.5, DEFAULT_ARTEFACT_RATIO["speaking"])
    return SynthScenario(
        duration_s=duration_s, hr_profile=profile, artefact=artefact,
        start_time_ms=start_time_ms, seed=int(rng.integers(2**31)),
    )


def reference_scenario(sc: SynthScenario, duration_s: float = 30.0) -> SynthScenario:
    """Stationary clip at the run's starting HR, recorded just before the run."""
    return SynthScenario(
        duration_s=duration_s, hr_profile=HrProfile.constant(float(sc.hr_profile.at(0.0))),
        start_time_ms=sc.start_time_ms - int(duration_s * 1000), seed=sc.seed + 1,
    )


def training_scenarios(n_runs: int = 24, duration_s: float = 60.0, seed: int = 123,
                       hr_range=(45.0, 190.0)) -> list[SynthScenario]:
    """Varied recordings for fitting the denoiser.

    Each run ramps from a uniform starting HR by up to +-30 BPM. Half carry
    footsteps at a random cadence and ratio in [3, 20], 15 % carry speech,
    the rest are clean. Covering the whole HR range matters more than run
    length: the network only learns the rates it has seen.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    lo, hi = hr_range
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_runs):
        hr0 = rng.uniform(lo, hi)
        hr1 = float(np.clip(hr0 + rng.uniform(-30, 30), lo, hi))
        art, u = None, rng.uniform()
        if u < 0.5:
            art = Footsteps(rng.uniform(1.2, 3.0), rng.uniform(3, 20))
        elif u < 0.65:
            art = Speech(1.5, rng.uniform(3, 10))
        out.append(SynthScenario(duration_s=duration_s, hr_profile=HrProfile.ramp(hr0, hr1, duration_s),
                                 artefact=art, seed=int(rng.integers(1 << 30))))
    return out


def scenario_to_dict(sc: SynthScenario) -> dict:
    d = asdict(sc)
    d["artefact"] = None if sc.artefact is None else {
        "kind": type(sc.artefact).__name__.lower(), **asdict(sc.artefact)}
    return d


def generate_corpus(root, n_subjects: int = 4, activities=ACTIVITIES, duration_s: float = 120.0,
                    seed: int = 0, reference_s: float = 30.0) -> list[Path]:
    """Write a dataset tree ``subject_<id>/<activity>/`` and return the run directories."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    runs = []
    for subj in range(1, n_subjects + 1):
        for activity in activities:
            start_ms = 1_600_000_000_000 + int(rng.integers(0, 10**9))
            sc = activity_scenario(activity, rng, duration_s, start_ms)
            run_dir = root / f"subject_{subj:02d}" / activity
            audio, ecg, truth = generate(sc)
            ref = None
            if reference_s > 0:
                ref, _, _ = generate(reference_scenario(sc, reference_s))
            dataset.write_run(run_dir, audio, ecg, truth.beat_times_s, reference=ref,
                              meta={"scenario": scenario_to_dict(sc)})
            runs.append(run_dir)
    (root / "corpus.json").write_text(json.dumps(
        {"n_subjects": n_subjects, "activities": list(activities),
         "duration_s": duration_s, "seed": seed}, indent=2))
    return runs
