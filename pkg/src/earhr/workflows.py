"""Dataset-level workflows: training sets, per-run evaluation and the LOSO harness.

These sit between the single-recording pipeline and the command line so
both the CLI and scripted experiments share one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation, pipeline, synth
from .config import PipelineConfig
from .dataset import Run
from .errors import ConfigError
from .evaluation import EvalReport
from .training import PairSet, autoencoder_pairs, loso_split, train
from .unet import DenoiserModel


def training_config(cfg: PipelineConfig) -> PipelineConfig:
    """Copy of ``cfg`` whose spectrogram windows advance by the training stride."""
    overlap = cfg.spec_window_s - cfg.train_stride_s
    return replace(cfg, spec_overlap_s=overlap)


def run_logmels(run: Run, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Un-normalised ``(audio, ecg)`` log-mel windows of one run at the training stride."""
    a = pipeline.preprocess_audio(run.audio, cfg)
    e = pipeline.preprocess_ecg(run.ecg, cfg)
    return pipeline.pair_arrays(a, e, training_config(cfg))


def build_pairs(runs, cfg: PipelineConfig, c: float | None = None) -> PairSet:
    """Training pairs from ingested runs, tagged with their subject."""
    runs = list(runs)
    if not runs:
        raise ConfigError("no runs to build training pairs from")
    triples = [(r.subject, *run_logmels(r, cfg)) for r in runs]
    return pipeline.make_pairs(triples, c)


def synthetic_pairs(scenarios, cfg: PipelineConfig, n_subjects: int = 4,
                    c: float | None = None) -> PairSet:
    """Training pairs straight from synthetic scenarios, without touching disk.

    Runs are tagged ``s0 .. s{n_subjects-1}`` round robin.
    """
    triples = []
    for i, sc in enumerate(scenarios):
        audio, ecg, _ = synth.generate(sc)
        a = pipeline.preprocess_audio(audio, cfg)
        e = pipeline.preprocess_ecg(ecg, cfg)
        triples.append((f"s{i % n_subjects}", *pipeline.pair_arrays(a, e, training_config(cfg))))
    return pipeline.make_pairs(triples, c)


def pretrain_pairs(runs, cfg: PipelineConfig, c: float | None = None) -> PairSet:
    """Autoencoder pairs from artefact-free heart sounds.

    Uses each run's stationary reference clip when present, and the audio of
    ``stationary`` runs, one spectrogram per channel and window.
    """
    tcfg = training_config(cfg)
    mels = []
    for r in runs:
        sources = [r.reference] if r.reference is not None else []
        if r.activity == "stationary":
            sources.append(r.audio)
        for s in sources:
            lm = pipeline.logmel_windows(pipeline.preprocess_audio(s, cfg), tcfg)
            mels.extend(lm.reshape(-1, 1, *lm.shape[2:]))
    if not mels:
        raise ConfigError("no stationary audio to pretrain on")
    if c is None:
        c = pipeline.norm_constant(*mels)
    return autoencoder_pairs([np.clip(m / c, 0.0, 1.0) for m in mels], c)


def new_model(cfg: PipelineConfig, norm_constant: float = 1.0) -> DenoiserModel:
    return DenoiserModel(cfg.unet, norm_constant, seed=cfg.train_seed)


def fit(runs, cfg: PipelineConfig, init: DenoiserModel | None = None,
        log: list | None = None) -> DenoiserModel:
    """Train a denoiser on ingested runs, optionally starting from ``init``."""
    data = build_pairs(runs, cfg)
    model = init if init is not None else new_model(cfg, data.norm_constant)
    return train(model, data, cfg.train, log=log)


def estimate_run(run: Run, cfg: PipelineConfig, model: DenoiserModel | None = None):
    return pipeline.run_pipeline(cfg, run.audio, model, run.reference).hr


def reference_series(run: Run, cfg: PipelineConfig):
    return pipeline.gt_series(pipeline.preprocess_ecg(run.ecg, cfg), cfg)


def evaluate_run(run: Run, cfg: PipelineConfig, model: DenoiserModel | None = None) -> EvalReport:
    """Estimate HR from the run's audio and score it against its ECG."""
    est = estimate_run(run, cfg, model)
    return evaluation.report(reference_series(run, cfg), est, run.subject, run.activity)


@dataclass
class Fold:
    held_out: str
    train_subjects: list
    test_subjects: list
    n_train_pairs: int
    n_test_pairs: int
    reports: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)

    @property
    def mae_bpm(self) -> float:
        return float(np.mean(np.concatenate([np.abs(r.residuals) for r in self.reports])))

    def to_dict(self) -> dict:
        return {"held_out": self.held_out, "train_subjects": self.train_subjects,
                "test_subjects": self.test_subjects, "n_train_pairs": self.n_train_pairs,
                "n_test_pairs": self.n_test_pairs, "mae_bpm": self.mae_bpm,
                "loss_history": self.loss_history, "runs": [r.to_dict() for r in self.reports]}


def loso(runs, cfg: PipelineConfig, init: DenoiserModel | None = None,
         subjects=None, progress=None) -> list[Fold]:
    """Leave-one-subject-out: train on all other subjects, score the held-out one.

    The normalisation constant is taken from the training partition of each
    fold so nothing about the held-out subject leaks into the model.
    ``progress(fold_index, subject)`` is called before each fold trains.
    """
    runs = list(runs)
    all_subjects = sorted({r.subject for r in runs})
    if len(all_subjects) < 2:
        raise ConfigError("LOSO needs at least two subjects")
    logmels = {id(r): run_logmels(r, cfg) for r in runs}
    tagged = PairSet.concat([
        PairSet(*_stack(logmels[id(r)]), r.subject) for r in runs
    ])
    folds = []
    for k, held in enumerate(subjects or all_subjects):
        train_raw, test_raw = loso_split(tagged, held)
        if progress is not None:
            progress(k, held)
        c = pipeline.norm_constant(train_raw.x, train_raw.y)
        train_set = _rescale(train_raw, c)
        model = init.copy() if init is not None else new_model(cfg, c)
        model = train(model, train_set, cfg.train)
        test_runs = [r for r in runs if r.subject == held]
        fold = Fold(held, sorted(set(train_raw.subjects.tolist())), [held],
                    len(train_raw), len(test_raw), loss_history=list(model.meta.loss_history))
        fold.reports = [evaluate_run(r, replace(cfg, method="dl"), model) for r in test_runs]
        folds.append(fold)
    return folds


def _stack(pair):
    a, e = pair
    return a.astype(np.float32), e.astype(np.float32)


def _rescale(raw: PairSet, c: float) -> PairSet:
    return PairSet(np.clip(raw.x / c, 0.0, 1.0), np.clip(raw.y / c, 0.0, 1.0), raw.subjects, c)
