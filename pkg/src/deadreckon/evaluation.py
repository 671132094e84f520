"""Accuracy metrics for (estimate, truth) pairs.

Estimated poses are joined to dense truth by nearest timestamp, then scored:
per-slot position error (geodesic), its empirical CDF, the overall traveled
distance error, and the bad segments where the per-slot error stays at or
above a threshold. A separate helper quantifies how the cumulative distance
error grows with slot count: when per-slot errors are independent draws, the
variance of the running sum is linear in time, so the diagnostic fits a line
through the origin and reports the fit quality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .estimator import EstimatedPose, PoseMode
from .geo import GeoPoint, geodesic_distance


class AlignmentError(ValueError):
    """Estimate and truth series cannot be joined in time."""


@dataclass(frozen=True)
class BadSegment:
    """A maximal run of slots whose error stays at or above the threshold."""

    start_index: int
    slot_count: int
    length_m: float


@dataclass(frozen=True)
class EvalReport:
    per_slot_errors: np.ndarray
    mean_slot_error: float
    overall_distance_error_m: float
    overall_distance_error_pct: float
    cdf: list[tuple[float, float]]
    bad_segments: list[BadSegment]

    def summary(self) -> dict:
        return {
            "slots": int(len(self.per_slot_errors)),
            "mean_slot_error_m": self.mean_slot_error,
            "max_slot_error_m": float(np.max(self.per_slot_errors)),
            "p90_slot_error_m": error_quantile(self.cdf, 0.9),
            "overall_distance_error_m": self.overall_distance_error_m,
            "overall_distance_error_pct": self.overall_distance_error_pct,
            "bad_segments": len(self.bad_segments),
            "bad_segment_total_m": sum(s.length_m for s in self.bad_segments),
        }


def clip_to_coverage(poses: Sequence[EstimatedPose], truth_t: np.ndarray,
                     tolerance_s: float) -> list[EstimatedPose]:
    """Drop poses outside the truth series' time coverage.

    A trace whose duration is not a slot multiple ends with a pose slightly
    past the last truth sample; such edge poses are not scoreable and are
    removed before metric computation.
    """
    t0 = float(truth_t[0]) - tolerance_s
    t1 = float(truth_t[-1]) + tolerance_s
    return [p for p in poses if t0 <= p.t <= t1]


def align_truth(poses: Sequence[EstimatedPose], truth_t: np.ndarray,
                tolerance_s: float) -> np.ndarray:
    """Index of the truth sample nearest each pose time.

    Raises AlignmentError if any pose has no truth sample within tolerance.
    """
    truth_t = np.asarray(truth_t, dtype=float)
    idx = np.empty(len(poses), dtype=int)
    for k, pose in enumerate(poses):
        i = int(np.searchsorted(truth_t, pose.t))
        best, best_dt = None, tolerance_s
        for j in (i - 1, i):
            if 0 <= j < len(truth_t) and abs(truth_t[j] - pose.t) <= best_dt:
                best, best_dt = j, abs(truth_t[j] - pose.t)
        if best is None:
            raise AlignmentError(
                f"no truth sample within {tolerance_s} s of pose at t={pose.t}"
            )
        idx[k] = best
    return idx


def per_slot_error(poses: Sequence[EstimatedPose], truth: dict,
                   tolerance_s: float = 1.0) -> np.ndarray:
    """Geodesic distance between each pose and the truth position, meters."""
    idx = align_truth(poses, truth["t"], tolerance_s)
    return np.array([
        geodesic_distance(
            pose.position,
            GeoPoint(float(truth["lat"][i]), float(truth["lon"][i])),
        )
        for pose, i in zip(poses, idx)
    ])


def error_cdf(errors: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF as sorted (error, fraction) pairs; last fraction is 1."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("cannot build a CDF from no errors")
    ordered = np.sort(errors)
    n = len(ordered)
    return [(float(e), (i + 1) / n) for i, e in enumerate(ordered)]


def error_quantile(cdf: list[tuple[float, float]], q: float) -> float:
    """Smallest error whose CDF fraction reaches q."""
    for err, frac in cdf:
        if frac >= q:
            return err
    return cdf[-1][0]


def bad_segment_stats(errors: Sequence[float], slot_distances: Sequence[float],
                      threshold_m: float = 30.0) -> list[BadSegment]:
    """Maximal runs of consecutive slots with error >= threshold, with their
    summed traveled length."""
    if threshold_m <= 0.0:
        raise ValueError("threshold_m must be > 0")
    errors = np.asarray(errors, dtype=float)
    dists = np.asarray(slot_distances, dtype=float)
    if errors.shape != dists.shape:
        raise ValueError("errors and slot_distances must have equal length")
    segments = []
    start = None
    for i, bad in enumerate(errors >= threshold_m):
        if bad and start is None:
            start = i
        elif not bad and start is not None:
            segments.append(BadSegment(start, i - start, float(np.sum(dists[start:i]))))
            start = None
    if start is not None:
        segments.append(
            BadSegment(start, len(errors) - start, float(np.sum(dists[start:])))
        )
    return segments


def distance_error(poses: Sequence[EstimatedPose], truth: dict,
                   modes: Optional[set[PoseMode]] = None,
                   slot_s: float = 2.0) -> tuple[float, float]:
    """Traveled-distance error over selected poses, (meters, percent).

    Selected poses are grouped into contiguous runs; each run compares the
    summed estimated slot distances against the truth distance integrated
    over the run's time span, and runs are summed. With modes=None the whole
    pose list forms one run.
    """
    selected = [
        (k, p) for k, p in enumerate(poses) if modes is None or p.mode in modes
    ]
    if not selected:
        raise ValueError("no poses selected for distance error")
    truth_t = np.asarray(truth["t"], dtype=float)
    truth_speed = np.asarray(truth["speed_mps"], dtype=float)

    est_total = 0.0
    true_total = 0.0
    run: list[EstimatedPose] = []
    last_k = None
    for k, pose in selected + [(None, None)]:
        if run and (k is None or k != last_k + 1):
            est_total += sum(p.slot_distance for p in run)
            true_total += _integrate_speed(
                truth_t, truth_speed, run[0].t - slot_s, run[-1].t
            )
            run = []
        if pose is not None:
            run.append(pose)
            last_k = k
    err_m = abs(est_total - true_total)
    pct = 100.0 * err_m / true_total if true_total > 0.0 else math.inf
    return err_m, pct


def _integrate_speed(t: np.ndarray, speed: np.ndarray, t0: float, t1: float) -> float:
    """Trapezoidal integral of the truth speed over [t0, t1], meters."""
    lo = int(np.searchsorted(t, t0 - 1e-9))
    hi = int(np.searchsorted(t, t1 + 1e-9))
    seg_t = t[lo:hi]
    seg_v = speed[lo:hi]
    if len(seg_t) < 2:
        return 0.0
    return float(np.trapezoid(seg_v, seg_t))


def build_report(poses: Sequence[EstimatedPose], truth: dict,
                 bad_threshold_m: float = 30.0, slot_s: float = 2.0) -> EvalReport:
    poses = clip_to_coverage(poses, truth["t"], tolerance_s=slot_s / 2.0)
    if not poses:
        raise AlignmentError("no poses fall inside the truth series' time span")
    errors = per_slot_error(poses, truth, tolerance_s=slot_s / 2.0)
    dist_m, dist_pct = distance_error(poses, truth, modes=None, slot_s=slot_s)
    return EvalReport(
        per_slot_errors=errors,
        mean_slot_error=float(np.mean(errors)),
        overall_distance_error_m=dist_m,
        overall_distance_error_pct=dist_pct,
        cdf=error_cdf(errors),
        bad_segments=bad_segment_stats(
            errors, [p.slot_distance for p in poses], bad_threshold_m
        ),
    )


def write_report(report: EvalReport, out_dir) -> dict[str, Path]:
    """Emit per_slot.csv, cdf.csv, segments.csv, and summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "per_slot": out / "per_slot.csv",
        "cdf": out / "cdf.csv",
        "segments": out / "segments.csv",
        "summary": out / "summary.json",
    }
    with open(paths["per_slot"], "w", encoding="utf-8") as fh:
        fh.write("slot,error_m\n")
        for i, e in enumerate(report.per_slot_errors):
            fh.write(f"{i},{float(e)!r}\n")
    with open(paths["cdf"], "w", encoding="utf-8") as fh:
        fh.write("error_m,fraction\n")
        for err, frac in report.cdf:
            fh.write(f"{float(err)!r},{float(frac)!r}\n")
    with open(paths["segments"], "w", encoding="utf-8") as fh:
        fh.write("start_index,slot_count,length_m\n")
        for seg in report.bad_segments:
            fh.write(f"{seg.start_index},{seg.slot_count},{float(seg.length_m)!r}\n")
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def cumulative_error_variance(per_slot_errors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Variance of the cumulative error across runs, per slot count.

    per_slot_errors is (runs, slots) of signed per-slot errors; returns
    (t, var) where t = 1..slots and var[k] is the across-run sample variance
    of the cumulative sum after t[k] slots.
    """
    errors = np.asarray(per_slot_errors, dtype=float)
    if errors.ndim != 2 or errors.shape[0] < 2:
        raise ValueError("need a (runs, slots) matrix with at least 2 runs")
    sums = np.cumsum(errors, axis=1)
    t = np.arange(1, errors.shape[1] + 1, dtype=float)
    return t, np.var(sums, axis=0, ddof=1)


def fit_line_through_origin(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of y = slope * x, plus the standard R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope = float(np.dot(x, y) / np.dot(x, x))
    residuals = y - slope * x
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residuals**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return slope, r2
