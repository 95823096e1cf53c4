"""Flat ``key = value`` pipeline configuration.

Every tunable of the processing chain has one key here; the typed
sub-configurations used by the individual modules are derived from it.
Precedence when combining sources is CLI > file > default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .denoise_sp import DwtSpec, HrBand
from .dsp import BandpassSpec
from .errors import ConfigError
from .spectro import STITCH_TAPERS, StftConfig
from .timeseries import WindowSpec
from .training import TrainConfig
from .unet import UNetConfig

METHODS = ("baseline", "sp", "dl")


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "dl"
    target_rate_hz: float = 1000.0
    audio_band_low_hz: float = 0.5
    audio_band_high_hz: float = 50.0
    audio_band_order: int = 4
    ecg_band_low_hz: float = 10.0
    ecg_band_high_hz: float = 50.0
    ecg_band_order: int = 4
    ecg_rate_hz: float = 130.0
    spec_window_s: float = 2.0
    spec_overlap_s: float = 1.5
    stft_win_length: int = 256
    stft_hop: int = 32
    stft_fft_bins: int = 1024
    stft_n_mels: int = 64
    stft_n_frames: int = 64
    mel_fmin_hz: float = 0.0
    mel_fmax_hz: float = 500.0
    gl_iters: int = 32
    stitch_taper: str = "hann"
    unet_depth: int = 4
    unet_base_filters: int = 16
    unet_dropout: float = 0.1
    train_epochs: int = 100
    train_lr: float = 0.001
    train_batch_size: int = 64
    train_seed: int = 0
    train_stride_s: float = 0.5
    dwt_wavelet: str = "db4"
    dwt_levels: int = 6
    dwt_variance_factor: float = 1.5
    dwt_spread: int = 1
    hr_min_bpm: float = 40.0
    hr_max_bpm: float = 200.0
    search_halfwidth_bpm: float = 10.0
    hr_window_s: float = 10.0
    hr_overlap_s: float = 5.0
    smooth_sigma_s: float = 0.04
    peak_min_distance_s: float = 0.25
    peak_min_prominence: float = 0.1
    ma_window: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.gl_iters < 1:
            raise ConfigError("gl_iters must be >= 1")
        if self.stitch_taper not in STITCH_TAPERS:
            raise ConfigError(f"stitch_taper must be one of {STITCH_TAPERS}")
        if not 0 < self.train_stride_s <= self.spec_window_s:
            raise ConfigError("train_stride_s must lie in (0, spec_window_s]")
        if self.ma_window < 1:
            raise ConfigError("ma_window must be >= 1")
        # build every derived config once so bad values fail at parse time
        self.audio_band.validate(self.target_rate_hz)
        self.ecg_band.validate(self.ecg_rate_hz)
        self.stft, self.unet, self.train, self.dwt, self.band
        self.spec_window, self.hr_window

    @property
    def audio_band(self) -> BandpassSpec:
        return BandpassSpec(self.audio_band_low_hz, self.audio_band_high_hz, self.audio_band_order)

    @property
    def ecg_band(self) -> BandpassSpec:
        return BandpassSpec(self.ecg_band_low_hz, self.ecg_band_high_hz, self.ecg_band_order)

    @property
    def stft(self) -> StftConfig:
        return StftConfig(
            win_length=self.stft_win_length, hop=self.stft_hop, fft_bins=self.stft_fft_bins,
            n_mels=self.stft_n_mels, n_frames=self.stft_n_frames,
            sample_rate_hz=self.target_rate_hz, mel_fmin_hz=self.mel_fmin_hz,
            mel_fmax_hz=self.mel_fmax_hz, window_s=self.spec_window_s,
        )

    @property
    def unet(self) -> UNetConfig:
        if self.stft_n_mels != self.stft_n_frames:
            raise ConfigError("the denoiser needs square spectrograms (n_mels == n_frames)")
        return UNetConfig(depth=self.unet_depth, base_filters=self.unet_base_filters,
                          dropout_rate=self.unet_dropout, input_size=self.stft_n_mels)

    @property
    def train(self) -> TrainConfig:
        return TrainConfig(epochs=self.train_epochs, lr=self.train_lr,
                           batch_size=self.train_batch_size, seed=self.train_seed)

    @property
    def dwt(self) -> DwtSpec:
        return DwtSpec(self.dwt_wavelet, self.dwt_levels, self.dwt_variance_factor, self.dwt_spread)

    @property
    def band(self) -> HrBand:
        return HrBand(self.hr_min_bpm, self.hr_max_bpm, self.search_halfwidth_bpm)

    @property
    def spec_window(self) -> WindowSpec:
        return WindowSpec(self.spec_window_s, self.spec_overlap_s)

    @property
    def hr_window(self) -> WindowSpec:
        return WindowSpec(self.hr_window_s, self.hr_overlap_s)

    # --- serialisation ---------------------------------------------------

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        """Typed config from string or native values; unknown keys are errors."""
        base = base or cls()
        types = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
        unknown = sorted(set(mapping) - set(types))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = {}
        for k, v in mapping.items():
            try:
                values[k] = _coerce(v, types[k])
            except ValueError:
                raise ConfigError(f"{k}: cannot read {v!r} as {types[k].__name__}") from None
        return replace(base, **values)

    @classmethod
    def parse(cls, text: str, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        mapping = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            k, v = (p.strip() for p in line.split("=", 1))
            if k in mapping:
                raise ConfigError(f"line {lineno}: duplicate key {k!r}")
            mapping[k] = v
        return cls.from_mapping(mapping, base)

    def serialize(self) -> str:
        return "".join(f"{k} = {getattr(self, k)}\n" for k in self.keys())


def _coerce(v, t):
    if isinstance(v, t) and not (t is int and isinstance(v, bool)):
        return v
    s = str(v).strip()
    if t is int:
        return int(s)
    if t is float:
        return float(s)
    return s
