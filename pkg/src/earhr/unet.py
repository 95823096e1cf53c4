"""U-Net spectrogram denoiser (2-channel audio log-mel in, ECG log-mel out)."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ShapeError
from .spectro import LogMelSpectrogram


@dataclass(frozen=True)
class UNetConfig:
    """Architecture knobs.

    Each encoder level doubles the feature maps; ``input_size`` must be
    divisible by ``2**depth`` so every pooling step halves exactly.
    """

    depth: int = 4
    base_filters: int = 16
    kernel: int = 3
    dropout_rate: float = 0.1
    in_channels: int = 2
    out_channels: int = 1
    input_size: int = 64

    def __post_init__(self):
        if self.depth < 1 or self.base_filters < 1:
            raise ConfigError("depth and base_filters must be >= 1")
        if self.kernel % 2 != 1:
            raise ConfigError("kernel must be odd")
        if self.input_size % (2 ** self.depth):
            raise ConfigError(
                f"input size {self.input_size} is not divisible by 2**{self.depth}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")

    def filters(self, level: int) -> int:
        return self.base_filters * 2 ** level


class ConvBlock(nn.Sequential):
    """(conv -> ReLU -> batchnorm) twice."""

    def __init__(self, c_in: int, c_out: int, k: int):
        layers = []
        for c in (c_in, c_out):
            layers += [nn.Conv2d(c, c_out, k, padding=k // 2), nn.ReLU(), nn.BatchNorm2d(c_out)]
        super().__init__(*layers)


class UNet(nn.Module):
    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.cfg = cfg
        k = cfg.kernel
        self.down = nn.ModuleList()
        c_prev = cfg.in_channels
        for level in range(cfg.depth):
            self.down.append(ConvBlock(c_prev, cfg.filters(level), k))
            c_prev = cfg.filters(level)
        self.pool = nn.MaxPool2d(2, 2)
        self.drop = nn.Dropout(cfg.dropout_rate)
        self.bottleneck = ConvBlock(c_prev, cfg.filters(cfg.depth), k)
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for level in reversed(range(cfg.depth)):
            self.up.append(nn.ConvTranspose2d(cfg.filters(level + 1), cfg.filters(level), 2, stride=2))
            self.dec.append(ConvBlock(2 * cfg.filters(level), cfg.filters(level), k))
        self.head = nn.Conv2d(cfg.base_filters, cfg.out_channels, 1)

    def forward(self, x: torch.Tensor, skip_mask=None) -> torch.Tensor:
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = self.drop(self.pool(x))
        x = self.bottleneck(x)
        for i, (up, block) in enumerate(zip(self.up, self.dec)):
            s = skips.pop()
            if skip_mask is not None and not skip_mask[i]:
                s = torch.zeros_like(s)
            x = block(torch.cat([up(x), s], dim=1))
        return self.head(x)


def init_weights(net: nn.Module, seed: int):
    """Kaiming-uniform (fan-in) conv weights and zero biases from a fixed seed."""
    g = torch.Generator().manual_seed(seed)
    for m in net.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            # transposed convs store (in, out, kh, kw); fan-in is what feeds one output
            if isinstance(m, nn.ConvTranspose2d):
                fan_in = m.weight.shape[0] * m.weight.shape[2] * m.weight.shape[3]
            else:
                fan_in = m.weight[0].numel()
            bound = float(np.sqrt(6.0 / fan_in))
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=g)
                m.bias.zero_()


@dataclass
class TrainingMeta:
    epochs: int = 0
    loss_history: list = field(default_factory=list)


class DenoiserModel:
    """A U-Net plus the normalisation constant its inputs were scaled with.

    Treat instances as immutable once trained: training returns a new model.
    """

    def __init__(self, config: UNetConfig = UNetConfig(), norm_constant: float = 1.0,
                 seed: int = 0, net: UNet | None = None, meta: TrainingMeta | None = None):
        if not norm_constant > 0:
            raise ConfigError("norm_constant must be > 0")
        self.config = config
        self.norm_constant = float(norm_constant)
        if net is None:
            net = UNet(config)
            init_weights(net, seed)
        self.net = net
        self.meta = meta or TrainingMeta()
        self.net.eval()

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(self.config, self.norm_constant, net=copy.deepcopy(self.net),
                             meta=copy.deepcopy(self.meta))

    def weights(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.net.state_dict().items()}

    def check_finite(self):
        for k, v in self.net.state_dict().items():
            if v.is_floating_point() and not torch.isfinite(v).all():
                raise ConfigError(f"non-finite weights in {k}")

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Inference on normalised inputs ``(n, in_ch, S, S)`` -> ``(n, out_ch, S, S)``."""
        x = np.asarray(x, dtype=np.float32)
        s = self.config.input_size
        if x.ndim != 4 or x.shape[1:] != (self.config.in_channels, s, s):
            raise ShapeError(
                f"expected (n, {self.config.in_channels}, {s}, {s}), got {x.shape}"
            )
        self.net.eval()
        out = []
        with torch.no_grad():
            for i in range(0, len(x), batch_size):
                out.append(self.net(torch.from_numpy(x[i : i + batch_size])).numpy())
        if not out:
            return np.zeros((0, self.config.out_channels, s, s), np.float32)
        return np.concatenate(out)


def forward(m: DenoiserModel, x: LogMelSpectrogram) -> LogMelSpectrogram:
    """Denoise one normalised 2-channel log-mel window into a 1-channel one."""
    s = m.config.input_size
    if x.shape != (m.config.in_channels, s, s):
        raise ShapeError(f"expected ({m.config.in_channels}, {s}, {s}), got {x.shape}")
    y = m.predict(x.values[np.newaxis])[0]
    return LogMelSpectrogram(y.astype(np.float64), m.norm_constant, x.log_floor_eps)


def mse_loss(y, y_hat) -> float:
    """Mean squared difference over all time-frequency cells."""
    a = y.values if isinstance(y, LogMelSpectrogram) else np.asarray(y, dtype=np.float64)
    b = y_hat.values if isinstance(y_hat, LogMelSpectrogram) else np.asarray(y_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 3 and a.shape[0] != 1:
        raise ShapeError("mse_loss compares single-channel spectrograms")
    return float(np.mean((a - b) ** 2))
