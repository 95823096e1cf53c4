"""Command line front end.

Usage: ``earhr [--config FILE] VERB [args] [--<config-key> VALUE ...]``.
Any configuration key may be given as a flag (``--hr_window_s 8`` or
``--hr-window-s 8``); values from the command line win over the config
file, which wins over the built-in defaults.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, pipeline, synth, workflows
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig
from .errors import ConfigError, DataError, EarHRError
from .evaluation import write_reports
from .training import train


# --- config handling ----------------------------------------------------------

def split_overrides(extra: list[str]) -> dict:
    """``['--key', 'v', '--other=w']`` into ``{'key': 'v', 'other': 'w'}``."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"flag --{key} needs a value")
            val = extra[i + 1]
            i += 1
        key = key.replace("-", "_")
        if key in out:
            raise ConfigError(f"--{key} given twice")
        out[key] = val
        i += 1
    return out


def load_config(path, overrides: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        cfg = PipelineConfig.parse(text, cfg)
    return PipelineConfig.from_mapping(overrides, cfg)


def _model(path):
    if path is None:
        return None
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from None
    return load_checkpoint(data)


def _write_model(path, model):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(save_checkpoint(model))


def _write_loss_log(path, history):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(history, 1):
            w.writerow([i, repr(float(v))])


def _runs(path, subjects=None):
    p = Path(path)
    dirs = [p] if (p / "audio.wav").is_file() else dataset.discover(p)
    runs = [dataset.ingest(d) for d in dirs]
    if subjects:
        runs = [r for r in runs if r.subject in subjects]
        if not runs:
            raise DataError(f"no runs for subjects {subjects}")
    return runs


def _echo(obj):
    print(json.dumps(obj, indent=2))


# --- verbs ----------------------------------------------------------------------

def cmd_synth(args, cfg):
    acts = args.activities.split(",") if args.activities else synth.ACTIVITIES
    runs = synth.generate_corpus(args.out, args.subjects, acts, args.duration, args.seed,
                                 args.reference)
    print(f"wrote {len(runs)} runs under {args.out}")


def cmd_ingest_check(args, cfg):
    rows = []
    for r in _runs(args.path):
        a, e = r.audio.duration_s, r.ecg.duration_s
        rows.append({"run": str(r.path), "subject": r.subject, "activity": r.activity,
                     "audio_s": a, "ecg_s": e, "audio_rate_hz": r.audio.sample_rate_hz,
                     "channels": r.audio.channels, "has_truth": r.beat_times_s is not None})
    _echo(rows)


def cmd_spectrogram_dump(args, cfg):
    """One window's T x F matrices as CSV (rows are frames), plus every window as .npy."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in _runs(args.path):
        a = pipeline.logmel_windows(pipeline.preprocess_audio(r.audio, cfg), cfg)
        e = pipeline.logmel_windows(pipeline.preprocess_ecg(r.ecg, cfg), cfg)
        if not 0 <= args.window < min(len(a), len(e)):
            raise ConfigError(f"--window must lie in [0, {min(len(a), len(e))})")
        stem = f"{r.subject}_{r.activity}"
        for k in range(a.shape[1]):
            np.savetxt(out / f"{stem}_w{args.window}_audio{k}.csv", a[args.window, k],
                       delimiter=",", fmt="%.6g")
        np.savetxt(out / f"{stem}_w{args.window}_ecg.csv", e[args.window, 0], delimiter=",", fmt="%.6g")
        if args.all:
            np.save(out / f"{stem}_audio.npy", a)
            np.save(out / f"{stem}_ecg.npy", e)
        print(f"{stem}: {len(a)} windows of {a.shape[2]}x{a.shape[3]}, wrote window {args.window}")


def cmd_pretrain(args, cfg):
    data = workflows.pretrain_pairs(_runs(args.data), cfg)
    model = train(workflows.new_model(cfg, data.norm_constant), data, cfg.train)
    _write_model(args.out, model)
    if args.loss_log:
        _write_loss_log(args.loss_log, model.meta.loss_history)
    print(f"pretrained on {len(data)} spectrograms, final loss {model.meta.loss_history[-1]:.6g}")


def cmd_train(args, cfg):
    runs = _runs(args.data, args.subjects)
    model = workflows.fit(runs, cfg, init=_model(args.init))
    _write_model(args.out, model)
    if args.loss_log:
        _write_loss_log(args.loss_log, model.meta.loss_history)
    hist = model.meta.loss_history
    print(f"trained {len(hist)} epochs, final loss {hist[-1] if hist else float('nan'):.6g}")


def cmd_loso(args, cfg):
    runs = _runs(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    folds = workflows.loso(runs, cfg, init=_model(args.init),
                           progress=lambda k, s: print(f"fold {k + 1}: holding out {s}",
                                                       file=sys.stderr))
    for f in folds:
        write_reports(out / f"fold_{f.held_out}", f.reports)
        _write_loss_log(out / f"fold_{f.held_out}" / "loss.csv", f.loss_history)
    summary = {"folds": [f.to_dict() for f in folds],
               "mean_mae_bpm": float(np.mean([f.mae_bpm for f in folds]))}
    (out / "loso.json").write_text(json.dumps(summary, indent=2))
    for f in folds:
        print(f"{f.held_out}: MAE {f.mae_bpm:.2f} BPM")


def cmd_estimate(args, cfg):
    p = Path(args.input)
    if p.is_dir():
        run = dataset.ingest(p)
        audio, reference = run.audio, run.reference
    else:
        audio = dataset.read_wav(p)
        reference = dataset.read_wav(args.reference) if args.reference else None
    res = pipeline.run_pipeline(cfg, audio, _model(args.checkpoint), reference, args.dump_dir)
    text = res.hr.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args, cfg):
    model = _model(args.checkpoint)
    reports = [workflows.evaluate_run(r, cfg, model) for r in _runs(args.data, args.subjects)]
    s = write_reports(args.out, reports)
    print(f"{cfg.method}: MAE {s.mae_bpm:.2f} BPM, MAPE {s.mape_pct:.2f} %, "
          f"bias {s.ba_bias_bpm:.2f}, LoA ±{s.ba_loa_bpm:.2f} over {s.n_windows} windows")


def cmd_bench(args, cfg):
    p = Path(args.input)
    audio = dataset.ingest(p).audio if p.is_dir() else dataset.read_wav(p)
    model = _model(args.checkpoint)
    if model is None:
        raise ConfigError("bench times the dl path and needs --checkpoint")
    rep = pipeline.bench(cfg, audio, model, args.repetitions)
    _echo(rep.to_dict())


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="earhr", description=__doc__.split("\n\n")[0],
                                 epilog="Any config key can be passed as --<key> VALUE.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", help="flat key = value config file")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset tree")
    p.add_argument("out")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activities", help="comma separated, default all")
    p.add_argument("--reference", type=float, default=30.0,
                   help="length of the stationary reference clip in s (0 disables)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest-check", help="validate a run directory or dataset root")
    p.add_argument("path")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("spectrogram", help="spectrogram tools")
    ss = p.add_subparsers(dest="action", required=True)
    d = ss.add_parser("dump", help="write a window's audio and ECG log-mel matrices as CSV")
    d.add_argument("path")
    d.add_argument("--out", required=True)
    d.add_argument("--window", type=int, default=0, help="window index (2 s windows, 0.5 s stride)")
    d.add_argument("--all", action="store_true", help="also save every window as .npy")
    d.set_defaults(func=cmd_spectrogram_dump)

    p = sub.add_parser("pretrain", help="autoencoder pretraining on stationary heart sounds")
    p.add_argument("data")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-log", help="CSV of per-epoch loss")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train the denoiser on audio/ECG pairs")
    p.add_argument("data")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--init", help="checkpoint to start from (e.g. a pretrained one)")
    p.add_argument("--subjects", nargs="+", help="restrict to these subject ids")
    p.add_argument("--loss-log", help="CSV of per-epoch loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("loso", help="leave-one-subject-out training and evaluation")
    p.add_argument("data")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--init", help="checkpoint every fold starts from")
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("estimate", help="HR series from a WAV file or run directory")
    p.add_argument("input")
    p.add_argument("--checkpoint")
    p.add_argument("--reference", help="stationary reference WAV for --method sp")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--dump-dir", help="save stage intermediates here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="score a method against ECG over a dataset")
    p.add_argument("data")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--checkpoint")
    p.add_argument("--subjects", nargs="+")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="per-stage latency of the dl path")
    p.add_argument("input", help="WAV file or run directory")
    p.add_argument("--checkpoint")
    p.add_argument("--repetitions", type=int, default=30)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    try:
        cfg = load_config(args.config, split_overrides(extra))
        args.func(args, cfg)
    except EarHRError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
