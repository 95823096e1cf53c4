"""Train a small spectrogram denoiser on synthetic data and track a heart-rate ramp.

Training pairs are (noisy in-ear log-mel, clean ECG log-mel) windows. The
network learns to keep the heartbeat rhythm and drop footstep energy. The
trained model then tracks a 60 -> 120 BPM ramp recorded while walking.

    python demos/02_train_and_track.py [--runs 24] [--epochs 30] [--save model.bin]

The defaults are the acceptance recipe and take about 5 minutes on one CPU
core. With 12 runs and 10 epochs the network is still undertrained: its
output loses the beats and the dl estimate collapses to low rates.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from earhr import evaluation, pipeline, synth, workflows
from earhr.checkpoint import save_checkpoint
from earhr.config import PipelineConfig
from earhr.training import TrainConfig, train
from earhr.unet import DenoiserModel, UNetConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--runs", type=int, default=24)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--base-filters", type=int, default=8)
    ap.add_argument("--save", help="write the trained checkpoint here")
    args = ap.parse_args()

    cfg = PipelineConfig(train_stride_s=1.0)
    data = workflows.synthetic_pairs(synth.training_scenarios(args.runs, 60.0, seed=123), cfg)
    print(f"{len(data)} training pairs from {args.runs} runs, norm constant {data.norm_constant:.2f}")

    t0 = time.perf_counter()
    log = []
    model = train(DenoiserModel(UNetConfig(base_filters=args.base_filters), data.norm_constant),
                  data, TrainConfig(epochs=args.epochs, batch_size=32), log=log)
    print(f"trained {args.epochs} epochs in {time.perf_counter() - t0:.0f} s; loss per epoch:")
    print("  " + " ".join(f"{v:.4f}" for _, _, v in log))
    if args.save:
        Path(args.save).write_bytes(save_checkpoint(model))
        print(f"checkpoint written to {args.save}")

    sc = synth.SynthScenario(duration_s=120, hr_profile=synth.HrProfile.ramp(60, 120, 120),
                             artefact=synth.Footsteps(1.6, 5), seed=21)
    audio, ecg, _ = synth.generate(sc)
    ref, _, _ = synth.generate(synth.reference_scenario(sc))
    gt = pipeline.gt_series(pipeline.preprocess_ecg(ecg))
    print(f"\n{'t [s]':>6} {'ECG':>6} {'dl':>6} {'sp':>6} {'baseline':>9}")
    est = {m: pipeline.run_pipeline(PipelineConfig(method=m), audio, model, ref).hr
           for m in ("dl", "sp", "baseline")}
    for i in range(len(gt)):
        print(f"{gt.start_ms[i] / 1000:6.0f} {gt.bpm[i]:6.1f} " +
              " ".join(f"{est[m].bpm[i]:6.1f}" for m in ("dl", "sp")) + f" {est['baseline'].bpm[i]:9.1f}")
    for m, s in est.items():
        r = evaluation.report(gt, s)
        print(f"{m:>8}: MAE {r.mae_bpm:5.2f} BPM, max |error| {np.max(np.abs(r.residuals)):5.2f} BPM")


if __name__ == "__main__":
    main()
