"""Agreement metrics between estimated and reference HR series."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import dsp
from .errors import EmptyInputError, InsufficientDataError
from .hr import HrSeries, estimate_hr
from .timeseries import HR_WINDOW, TimeSeries, WindowSpec


def gt_hr_from_ecg(ecg: TimeSeries, band: dsp.BandpassSpec = dsp.ECG_BAND,
                   target_rate_hz: float = 1000.0, spec: WindowSpec = HR_WINDOW,
                   ma_window: int = 5) -> HrSeries:
    """Reference HR: band-pass the raw ECG, upsample, then the windowed peak-interval HR."""
    clean = dsp.resample(dsp.butter_bandpass(ecg, band), target_rate_hz)
    return estimate_hr(clean, spec, ma_window=ma_window)


class Paired(NamedTuple):
    truth: np.ndarray
    calc: np.ndarray
    start_ms: np.ndarray
    excluded: int


def _as_series(x) -> HrSeries:
    if isinstance(x, HrSeries):
        return x
    v = np.asarray(x, dtype=np.float64)
    return HrSeries(np.arange(len(v)) * 5000, v, np.ones(len(v)))


def pair(truth, calc) -> Paired:
    """Windows present in both series (by start time) where both are valid.

    Plain sequences are accepted and treated as fully valid series on a
    common 5 s grid.
    """
    t, c = _as_series(truth), _as_series(calc)
    common, it, ic = np.intersect1d(t.start_ms, c.start_ms, return_indices=True)
    ok = t.valid[it] & c.valid[ic]
    return Paired(t.bpm[it][ok], c.bpm[ic][ok], common[ok], int(np.sum(~ok)))


def mae(truth, calc) -> float:
    p = pair(truth, calc)
    if len(p.truth) == 0:
        raise EmptyInputError("no overlapping valid windows")
    return float(np.mean(np.abs(p.calc - p.truth)))


def mape(truth, calc) -> float:
    """Mean absolute percentage error; windows with non-positive truth are dropped."""
    return _mape_counted(truth, calc)[0]


def _mape_counted(truth, calc) -> tuple[float, int]:
    p = pair(truth, calc)
    pos = p.truth > 0
    if not np.any(pos):
        raise EmptyInputError("no overlapping valid windows with positive truth")
    err = 100.0 * np.abs(p.calc[pos] - p.truth[pos]) / p.truth[pos]
    return float(np.mean(err)), int(np.sum(~pos))


class BlandAltman(NamedTuple):
    bias: float
    loa: float
    points: np.ndarray  # (n, 2): truth, calc - truth

    @property
    def limits(self) -> tuple[float, float]:
        return self.bias - self.loa, self.bias + self.loa


def bland_altman(truth, calc) -> BlandAltman:
    """Residual-vs-truth agreement: bias and 1.96 sample-sd limits."""
    p = pair(truth, calc)
    if len(p.truth) < 2:
        raise InsufficientDataError(f"need at least 2 paired windows, got {len(p.truth)}")
    d = p.calc - p.truth
    return BlandAltman(float(np.mean(d)), float(1.96 * np.std(d, ddof=1)),
                       np.column_stack([p.truth, d]))


def ecdf(errors) -> np.ndarray:
    """Step points ``(value, k/n)``; ties collapse into one step."""
    e = np.sort(np.asarray(errors, dtype=np.float64))
    if e.size == 0:
        return np.zeros((0, 2))
    vals, counts = np.unique(e, return_counts=True)
    return np.column_stack([vals, np.cumsum(counts) / e.size])


def ecdf_quantile(points: np.ndarray, q: float) -> float:
    """Smallest value whose ECDF reaches ``q`` (inverse of the step function)."""
    k = np.searchsorted(points[:, 1], q - 1e-12, side="left")
    return float(points[min(k, len(points) - 1), 0])


@dataclass
class EvalReport:
    residuals: np.ndarray
    truth: np.ndarray
    mae_bpm: float
    mape_pct: float
    ba_bias_bpm: float
    ba_loa_bpm: float
    ecdf: np.ndarray
    excluded_windows: int = 0
    subject: str = ""
    activity: str = ""

    def to_dict(self) -> dict:
        """JSON-ready; undefined metrics (e.g. a fully excluded run) become ``None``."""
        num = lambda v: None if v is None or math.isnan(v) else float(v)
        sd = float(np.std(np.abs(self.residuals))) if len(self.residuals) else None
        return {
            "subject": self.subject, "activity": self.activity,
            "mae_bpm": num(self.mae_bpm), "mape_pct": num(self.mape_pct), "abs_error_sd_bpm": sd,
            "ba_bias_bpm": num(self.ba_bias_bpm), "ba_loa_bpm": num(self.ba_loa_bpm),
            "n_windows": int(len(self.residuals)), "excluded_windows": self.excluded_windows,
        }


def report(truth, calc, subject: str = "", activity: str = "") -> EvalReport:
    """Per-run metrics. A run whose windows all failed yields an empty report
    that only counts its excluded windows."""
    p = pair(truth, calc)
    if len(p.truth) == 0:
        if p.excluded == 0:
            raise EmptyInputError("no overlapping windows")
        nan = float("nan")
        return EvalReport(np.zeros(0), np.zeros(0), nan, nan, nan, nan, np.zeros((0, 2)),
                          p.excluded, subject, activity)
    d = p.calc - p.truth
    if len(d) >= 2:
        ba = bland_altman(truth, calc)
        bias, loa = ba.bias, ba.loa
    else:
        bias, loa = float(d[0]), float("nan")
    return EvalReport(d, p.truth, mae(truth, calc), mape(truth, calc), bias, loa,
                      ecdf(np.abs(d)), p.excluded, subject, activity)


@dataclass
class Table:
    """MAPE per (subject, activity); absent cells are NaN."""

    subjects: list
    activities: list
    values: np.ndarray

    def cell(self, subject, activity) -> float:
        return float(self.values[self.subjects.index(subject), self.activities.index(activity)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject", *self.activities])
        for s, row in zip(self.subjects, self.values):
            w.writerow([s, *("" if math.isnan(v) else repr(float(v)) for v in row)])
        return buf.getvalue()


def aggregate(reports, activities=None) -> Table:
    reports = list(reports)
    subjects = sorted({r.subject for r in reports})
    acts = list(activities) if activities is not None else sorted({r.activity for r in reports})
    vals = np.full((len(subjects), len(acts)), np.nan)
    for r in reports:
        if r.activity in acts:
            vals[subjects.index(r.subject), acts.index(r.activity)] = r.mape_pct
    return Table(subjects, acts, vals)


@dataclass
class Summary:
    """Pooled metrics with both spreads: across windows and across subjects."""

    mae_bpm: float
    mae_sd_windows: float
    mae_sd_subjects: float
    mape_pct: float
    mape_sd_windows: float
    mape_sd_subjects: float
    ba_bias_bpm: float
    ba_loa_bpm: float
    n_windows: int
    excluded_windows: int
    per_run: list = field(default_factory=list)


def summarize(reports) -> Summary:
    reports = list(reports)
    if not reports:
        raise EmptyInputError("no reports to summarise")
    if not any(len(r.residuals) for r in reports):
        raise EmptyInputError("every window of every run was excluded")
    d = np.concatenate([r.residuals for r in reports])
    t = np.concatenate([r.truth for r in reports])
    ae = np.abs(d)
    pe = 100.0 * ae / t
    subj = sorted({r.subject for r in reports if len(r.residuals)})
    per_subj_mae = [np.mean(np.concatenate([np.abs(r.residuals) for r in reports if r.subject == s]))
                    for s in subj]
    per_subj_mape = [np.mean(np.concatenate([100 * np.abs(r.residuals) / r.truth
                                             for r in reports if r.subject == s])) for s in subj]
    loa = float(1.96 * np.std(d, ddof=1)) if len(d) >= 2 else float("nan")
    return Summary(float(ae.mean()), float(ae.std()), float(np.std(per_subj_mae)),
                   float(pe.mean()), float(pe.std()), float(np.std(per_subj_mape)),
                   float(d.mean()), loa, int(len(d)), sum(r.excluded_windows for r in reports),
                   [r.to_dict() for r in reports])


def write_reports(out_dir, reports, activities=None):
    """``report.json``, ``residuals.csv``, ``ba_points.csv``, ``ecdf.csv``, ``heatmap.csv``."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    s = summarize(reports)
    (d / "report.json").write_text(json.dumps({
        "mae_bpm": s.mae_bpm, "mae_sd_across_windows": s.mae_sd_windows,
        "mae_sd_across_subjects": s.mae_sd_subjects, "mape_pct": s.mape_pct,
        "mape_sd_across_windows": s.mape_sd_windows, "mape_sd_across_subjects": s.mape_sd_subjects,
        "ba_bias_bpm": s.ba_bias_bpm, "ba_loa_bpm": s.ba_loa_bpm, "n_windows": s.n_windows,
        "excluded_windows": s.excluded_windows, "runs": s.per_run,
    }, indent=2))
    with open(d / "residuals.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject", "activity", "bpm_true", "residual_bpm"])
        for r in reports:
            for t, res in zip(r.truth, r.residuals):
                w.writerow([r.subject, r.activity, repr(float(t)), repr(float(res))])
    with open(d / "ba_points.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bpm_true", "difference_bpm"])
        for r in reports:
            for t, res in zip(r.truth, r.residuals):
                w.writerow([repr(float(t)), repr(float(res))])
    all_abs = np.concatenate([np.abs(r.residuals) for r in reports])
    with open(d / "ecdf.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["abs_error_bpm", "fraction"])
        for v, q in ecdf(all_abs):
            w.writerow([repr(float(v)), repr(float(q))])
    (d / "heatmap.csv").write_text(aggregate(reports, activities).to_csv())
    return s


def pearson_r(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise InsufficientDataError("need two equal-length sequences of at least 2 values")
    return float(np.corrcoef(a, b)[0, 1])
