"""Adam/MSE training, autoencoder pretraining and leave-one-subject-out splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F

from .errors import ConfigError, DivergenceError, ShapeError, UnknownSubjectError
from .spectro import LogMelSpectrogram
from .unet import DenoiserModel


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings.

    ``max_steps`` and ``target_loss`` are optional early stops (checked per
    step and per epoch respectively); neither is set by default.
    """

    epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    seed: int = 0
    max_steps: int | None = None
    target_loss: float | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class PairSet:
    """Normalised training pairs with a subject tag per window.

    ``x`` is ``(n, 2, S, S)`` audio, ``y`` is ``(n, 1, S, S)`` ECG, both
    scaled by the same ``norm_constant``.
    """

    x: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    norm_constant: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.float32)
        self.subjects = np.asarray(self.subjects)
        if self.subjects.ndim == 0:
            self.subjects = np.full(len(self.x), self.subjects)
        if not (len(self.x) == len(self.y) == len(self.subjects)):
            raise ShapeError("x, y and subjects must have equal length")
        if len(self.x) and (self.x.ndim != 4 or self.y.ndim != 4):
            raise ShapeError("x and y must be (n, channels, S, S)")
        if not self.norm_constant > 0:
            raise ConfigError("norm_constant must be > 0")

    def __len__(self):
        return len(self.x)

    def subset(self, mask) -> "PairSet":
        return PairSet(self.x[mask], self.y[mask], self.subjects[mask], self.norm_constant)

    @classmethod
    def concat(cls, sets) -> "PairSet":
        sets = list(sets)
        if not sets:
            raise ConfigError("nothing to concatenate")
        c = sets[0].norm_constant
        if any(s.norm_constant != c for s in sets):
            raise ConfigError("pair sets normalised with different constants")
        return cls(np.concatenate([s.x for s in sets]), np.concatenate([s.y for s in sets]),
                   np.concatenate([s.subjects for s in sets]), c)


def train(model: DenoiserModel, data: PairSet, cfg: TrainConfig = TrainConfig(),
          val: PairSet | None = None, log: list | None = None) -> DenoiserModel:
    """Minimise MSE with Adam over shuffled mini-batches; returns a new model.

    The input model is left untouched. Per-epoch mean training loss is
    appended to the returned model's ``meta.loss_history``; when ``log`` is a
    list, ``(epoch, split, mse)`` rows are appended for train and (if given)
    validation data.
    """
    if len(data) == 0:
        raise ConfigError("training set is empty")
    if data.x.shape[1:] != (model.config.in_channels,) + (model.config.input_size,) * 2:
        raise ShapeError(f"inputs of shape {data.x.shape[1:]} do not fit the model")
    out = model.copy()
    out.norm_constant = data.norm_constant
    net = out.net
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    x = torch.from_numpy(data.x)
    y = torch.from_numpy(data.y)
    n = len(data)
    steps = 0
    for epoch in range(cfg.epochs):
        net.train()
        order = torch.randperm(n, generator=gen)
        total = 0.0
        seen = 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            opt.zero_grad()
            loss = F.mse_loss(net(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss in epoch {out.meta.epochs + 1}",
                                      epoch=out.meta.epochs + 1)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
        epoch_loss = total / seen
        out.meta.epochs += 1
        out.meta.loss_history.append(epoch_loss)
        if log is not None:
            log.append((out.meta.epochs, "train", epoch_loss))
            if val is not None and len(val):
                log.append((out.meta.epochs, "val", evaluate_loss(out, val)))
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
        if cfg.target_loss is not None and epoch_loss < cfg.target_loss:
            break
    net.eval()
    return out


def evaluate_loss(model: DenoiserModel, data: PairSet) -> float:
    """Inference-mode MSE over a pair set."""
    if len(data) == 0:
        raise ConfigError("evaluation set is empty")
    pred = model.predict(data.x)
    return float(np.mean((pred.astype(np.float64) - data.y) ** 2))


def autoencoder_pairs(corpus, norm_constant: float = 1.0) -> PairSet:
    """Single-channel spectrograms duplicated into 2 input channels, label = input."""
    arr = []
    for s in corpus:
        v = s.values if isinstance(s, LogMelSpectrogram) else np.asarray(s)
        if v.ndim == 2:
            v = v[np.newaxis]
        if v.shape[0] != 1:
            raise ShapeError("pretraining spectrograms must be single-channel")
        arr.append(v)
    if not arr:
        raise ConfigError("pretraining corpus is empty")
    y = np.stack(arr)
    return PairSet(np.repeat(y, 2, axis=1), y, np.full(len(y), "pretrain"), norm_constant)


def pretrain(model: DenoiserModel, corpus, cfg: TrainConfig = TrainConfig(),
             norm_constant: float | None = None) -> DenoiserModel:
    """Autoencoder training on heart-sound spectrograms; the result seeds :func:`train`."""
    c = model.norm_constant if norm_constant is None else norm_constant
    return train(model, autoencoder_pairs(corpus, c), cfg)


def loso_split(data: PairSet, held_out) -> tuple[PairSet, PairSet]:
    """Hold one subject out: its windows form the test set, all others the training set."""
    subjects = set(np.unique(data.subjects).tolist())
    if held_out not in subjects:
        raise UnknownSubjectError(f"subject {held_out!r} not in dataset ({sorted(subjects)})")
    mask = data.subjects == held_out
    train_set, test_set = data.subset(~mask), data.subset(mask)
    if len(train_set) == 0:
        raise ConfigError(f"holding out {held_out!r} leaves no training data")
    return train_set, test_set
