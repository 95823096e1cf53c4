"""Generate a small synthetic study and score the signal-processing methods on it.

Drives the same command-line verbs a user would run on recorded data:
``synth`` writes the dataset tree, ``evaluate`` scores a method against
the ECG and writes plot-ready reports. The per-activity table and a few
ECDF read-outs are printed at the end.

    python demos/03_evaluate_corpus.py [--out /tmp/earhr-demo] [--subjects 3]
"""

import argparse
import csv
import json
import tempfile
from pathlib import Path

import numpy as np

from earhr import cli, evaluation


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", help="working directory (default: a temporary one)")
    ap.add_argument("--subjects", type=int, default=3)
    ap.add_argument("--duration", type=float, default=60.0)
    args = ap.parse_args()
    root = Path(args.out or tempfile.mkdtemp(prefix="earhr-demo-"))

    data = root / "data"
    cli.main(["synth", str(data), "--subjects", str(args.subjects), "--duration", str(args.duration)])
    for method in ("baseline", "sp"):
        if cli.main(["evaluate", str(data), "--method", method, "--out", str(root / method)]) != 0:
            raise SystemExit(f"evaluate {method} failed")

    for method in ("baseline", "sp"):
        rep = json.loads((root / method / "report.json").read_text())
        print(f"\n{method}: MAE {rep['mae_bpm']:.2f} ± {rep['mae_sd_across_windows']:.2f} BPM "
              f"(± {rep['mae_sd_across_subjects']:.2f} across subjects), "
              f"Bland-Altman bias {rep['ba_bias_bpm']:+.2f}, LoA ±{rep['ba_loa_bpm']:.2f}")
        with open(root / method / "heatmap.csv") as f:
            rows = list(csv.reader(f))
        print("  MAPE [%] by subject and activity:")
        print("   " + "".join(f"{c:>12}" for c in rows[0]))
        for r in rows[1:]:
            print("   " + f"{r[0]:>12}" + "".join(f"{float(c):12.1f}" if c else f"{'-':>12}" for c in r[1:]))
        with open(root / method / "residuals.csv") as f:
            err = np.abs([float(r["residual_bpm"]) for r in csv.DictReader(f)])
        pts = evaluation.ecdf(err)
        print("  share of windows within 2 / 5 / 10 BPM: " +
              " / ".join(f"{np.mean(err <= t):.0%}" for t in (2, 5, 10)) +
              f"; 90th percentile error {evaluation.ecdf_quantile(pts, 0.9):.1f} BPM")
    print(f"\nreports under {root}")


if __name__ == "__main__":
    main()
