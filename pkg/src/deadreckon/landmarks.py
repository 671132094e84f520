"""Road-infrastructure pattern detection, matching, and position corrections.

Certain maneuvers leave unmistakable inertial signatures: a traffic-light
stop is a braking dip, a flat stretch, then a speed-up bump in forward
acceleration; a turn is a sustained gyro excursion with a large net heading
change (a lane change looks similar but nets out near zero); a bridge or
underpass is a slow up-then-down (or down-then-up) swing in vertical
acceleration.  Detected patterns are matched against a database of known
infrastructure by a weighted score combining fingerprint similarity and
geodesic proximity, and the winning landmark's surveyed location re-anchors
the dead-reckoned position.

Stops rarely happen exactly at the stop line: a queue of n waiting vehicles
of average length L puts the car n*L/2 short of it, so traffic-light
corrections subtract that expected offset along the heading.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geo import GeoPoint, geodesic_distance, signed_delta_deg
from .motion import MotionState

FEATURE_LEN = 16


class PatternKind(str, enum.Enum):
    STOP_GO = "stop_go"
    TURN = "turn"
    LANE_CHANGE = "lane_change"
    SLOPE = "slope"


#: Database kind strings and the pattern kind each one matches.
DB_KIND_ALIASES = {
    "traffic_light": PatternKind.STOP_GO,
    "stop_go": PatternKind.STOP_GO,
    "turn": PatternKind.TURN,
    "bridge": PatternKind.SLOPE,
    "tunnel": PatternKind.SLOPE,
    "slope": PatternKind.SLOPE,
}


@dataclass(frozen=True)
class DetectedPattern:
    """One detected inertial event with its resampled channel signature."""

    kind: PatternKind
    t_start: float
    t_end: float
    features: np.ndarray
    heading_delta: Optional[float] = None

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError(f"pattern interval empty: [{self.t_start}, {self.t_end}]")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite pattern features")


@dataclass(frozen=True)
class LandmarkFingerprint:
    """A stored infrastructure entry: location plus signature vector."""

    id: str
    kind: PatternKind
    location: GeoPoint
    fingerprint: np.ndarray
    db_kind: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.fingerprint)):
            raise ValueError(f"non-finite fingerprint for landmark {self.id!r}")


@dataclass(frozen=True)
class QueueBucket:
    """Expected queue length (vehicles) for one time-of-day bucket."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.mu < 0.0 or self.sigma < 0.0:
            raise ValueError("queue mu and sigma must be >= 0")


@dataclass(frozen=True)
class QueueProfile:
    vehicle_length: float = 5.0
    buckets: dict[str, QueueBucket] = field(default_factory=lambda: {"default": QueueBucket(2.0, 1.0)})

    def __post_init__(self):
        if self.vehicle_length <= 0.0:
            raise ValueError("vehicle_length must be > 0")


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds for the three detectors. Durations in seconds."""

    smooth_s: float = 0.5          # forward-accel / gyro moving average
    brake_accel: float = -0.5      # m/s2, at or below = braking
    go_accel: float = 0.5          # m/s2, at or above = speeding up
    brake_min_s: float = 1.0
    go_min_s: float = 0.5
    min_stop_s: float = 2.0
    stop_lookback_s: float = 8.0
    go_lookahead_s: float = 6.0
    rate_threshold: float = 0.2    # rad/s on the smoothed gyro
    turn_angle_min: float = 45.0   # degrees; >= this net change = turn
    lane_angle_max: float = 15.0   # degrees; <= this net change = lane change
    turn_merge_gap_s: float = 1.5
    turn_pad_s: float = 1.0
    slope_threshold: float = 0.3   # m/s2 on the slow vertical channel
    slope_min_s: float = 1.5
    slope_smooth_s: float = 2.0
    slope_merge_gap_s: float = 3.0


def resample_signature(t: np.ndarray, values: np.ndarray, t_start: float, t_end: float,
                       n: int = FEATURE_LEN) -> np.ndarray:
    """Resample a channel to n evenly spaced points over [t_start, t_end]."""
    grid = np.linspace(t_start, t_end, n)
    return np.interp(grid, t, values)


def pattern_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross-correlation of two signatures, mapped to [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"signature shapes differ: {a.shape} vs {b.shape}")
    ac = a - a.mean()
    bc = b - b.mean()
    na = float(np.linalg.norm(ac))
    nb = float(np.linalg.norm(bc))
    flat_a = na < 1e-12 * (1.0 + abs(float(a.mean())))
    flat_b = nb < 1e-12 * (1.0 + abs(float(b.mean())))
    if flat_a or flat_b:
        return 1.0 if flat_a and flat_b else 0.5
    ncc = float(np.dot(ac, bc) / (na * nb))
    return 0.5 * (ncc + 1.0)


def detect_stop_go(t: np.ndarray, accel_forward: np.ndarray,
                   motion: Sequence[MotionState],
                   cfg: DetectorConfig = DetectorConfig()) -> list[DetectedPattern]:
    """Find brake -> halt -> speed-up sequences.

    A pattern needs sustained braking ending near the halt, a halt of at
    least min_stop_s, and sustained positive acceleration shortly after
    motion resumes. The pattern starts at brake onset and ends at motion
    resume.
    """
    t = np.asarray(t, dtype=float)
    smoothed = _moving_average(np.asarray(accel_forward, dtype=float), _window_samples(t, cfg.smooth_s))
    stopped = np.array([s is MotionState.STOPPED for s in motion])
    if len(stopped) != len(t):
        raise ValueError("motion series length does not match t")

    patterns = []
    for i0, i1 in _true_runs(stopped):
        if t[i1 - 1] - t[i0] < cfg.min_stop_s:
            continue
        brake = _last_run_in(
            t, smoothed <= cfg.brake_accel,
            t[i0] - cfg.stop_lookback_s, t[i0] + 1e-9, cfg.brake_min_s,
        )
        if brake is None:
            continue
        go = _first_run_in(
            t, smoothed >= cfg.go_accel,
            t[i1 - 1], t[i1 - 1] + cfg.go_lookahead_s, cfg.go_min_s,
        )
        if go is None:
            continue
        t_start = t[brake[0]]
        t_end = t[i1] if i1 < len(t) else t[-1]  # first sample after the halt
        if t_end <= t_start:
            continue
        patterns.append(
            DetectedPattern(
                kind=PatternKind.STOP_GO,
                t_start=float(t_start),
                t_end=float(t_end),
                features=resample_signature(t, smoothed, t_start, t_end),
            )
        )
    return patterns


def detect_turn(t: np.ndarray, heading: np.ndarray, gyro_z: np.ndarray,
                accel_lateral: Optional[np.ndarray] = None,
                cfg: DetectorConfig = DetectorConfig()) -> list[DetectedPattern]:
    """Classify sustained gyro excursions as turns or lane changes.

    Candidate intervals are where the smoothed |gyro| exceeds rate_threshold;
    nearby intervals merge so a lane change's two opposite lobes count once.
    The net heading change over the padded interval decides the kind; events
    between lane_angle_max and turn_angle_min are ambiguous and dropped.
    """
    t = np.asarray(t, dtype=float)
    heading = np.asarray(heading, dtype=float)
    g_smooth = _moving_average(np.asarray(gyro_z, dtype=float), _window_samples(t, cfg.smooth_s))
    runs = _true_runs(np.abs(g_smooth) >= cfg.rate_threshold)
    merged = _merge_runs(runs, t, cfg.turn_merge_gap_s)

    patterns = []
    for i0, i1 in merged:
        t_a = max(float(t[0]), t[i0] - cfg.turn_pad_s)
        t_b = min(float(t[-1]), t[i1 - 1] + cfg.turn_pad_s)
        lo = int(np.searchsorted(t, t_a))
        hi = int(np.searchsorted(t, t_b, side="right"))
        if hi - lo < 2:
            continue
        delta = _net_heading_delta(heading[lo:hi])
        if abs(delta) >= cfg.turn_angle_min:
            kind = PatternKind.TURN
        elif abs(delta) <= cfg.lane_angle_max:
            kind = PatternKind.LANE_CHANGE
        else:
            continue  # ambiguous band
        patterns.append(
            DetectedPattern(
                kind=kind,
                t_start=float(t_a),
                t_end=float(t_b),
                features=resample_signature(t, g_smooth, t_a, t_b),
                heading_delta=float(delta),
            )
        )
    return patterns


def detect_slope(t: np.ndarray, accel_vertical: np.ndarray,
                 cfg: DetectorConfig = DetectorConfig()) -> list[DetectedPattern]:
    """Find slow vertical-acceleration excursions (bridges, underpasses).

    Qualifying excursions are at least slope_min_s long after heavy
    smoothing; adjacent excursions merge into one pattern so an up-then-down
    bridge crossing is a single event with a signed signature.
    """
    t = np.asarray(t, dtype=float)
    v_smooth = _moving_average(np.asarray(accel_vertical, dtype=float),
                               _window_samples(t, cfg.slope_smooth_s))
    runs = [
        (i0, i1) for i0, i1 in _true_runs(np.abs(v_smooth) >= cfg.slope_threshold)
        if t[i1 - 1] - t[i0] >= cfg.slope_min_s
    ]
    merged = _merge_runs(runs, t, cfg.slope_merge_gap_s)

    patterns = []
    for i0, i1 in merged:
        t_a, t_b = float(t[i0]), float(t[i1 - 1])
        if t_b <= t_a:
            continue
        patterns.append(
            DetectedPattern(
                kind=PatternKind.SLOPE,
                t_start=t_a,
                t_end=t_b,
                features=resample_signature(t, v_smooth, t_a, t_b),
            )
        )
    return patterns


def match_landmark(pattern: DetectedPattern, position: GeoPoint,
                   db: Sequence[LandmarkFingerprint], *,
                   alpha: float = 0.5, radius_m: float = 300.0,
                   d0_m: float = 100.0) -> Optional[tuple[LandmarkFingerprint, float]]:
    """Pick the best landmark for a pattern near a position, if any.

    Candidates must share the pattern's kind and lie within radius_m of the
    position. The winner maximizes alpha * similarity + (1 - alpha) *
    exp(-distance / d0_m). Returns (landmark, score) or None.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha!r}")
    if radius_m <= 0.0 or d0_m <= 0.0:
        raise ValueError("radius_m and d0_m must be > 0")
    best = None
    best_score = -math.inf
    for entry in db:
        if entry.kind is not pattern.kind:
            continue
        dist = geodesic_distance(position, entry.location)
        if dist > radius_m:
            continue
        score = alpha * pattern_similarity(entry.fingerprint, pattern.features)
        score += (1.0 - alpha) * math.exp(-dist / d0_m)
        if score > best_score:
            best, best_score = entry, score
    if best is None:
        return None
    return best, best_score


def queue_correction(profile: QueueProfile, bucket: str) -> float:
    """Expected stop-line shortfall n*L/2 for a time-of-day bucket, meters."""
    if bucket not in profile.buckets:
        raise KeyError(f"unknown queue bucket {bucket!r}; have {sorted(profile.buckets)}")
    return profile.buckets[bucket].mu * profile.vehicle_length / 2.0


def load_landmark_db(path) -> list[LandmarkFingerprint]:
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    db = []
    for i, rec in enumerate(entries):
        db_kind = rec["kind"]
        if db_kind not in DB_KIND_ALIASES:
            raise ValueError(f"{path}: entry {i}: unknown landmark kind {db_kind!r}")
        db.append(
            LandmarkFingerprint(
                id=str(rec["id"]),
                kind=DB_KIND_ALIASES[db_kind],
                location=GeoPoint(float(rec["lat"]), float(rec["lon"])),
                fingerprint=np.array(rec["fingerprint"], dtype=float),
                db_kind=db_kind,
            )
        )
    return db


def save_landmark_db(db: Sequence[LandmarkFingerprint], path) -> None:
    payload = [
        {
            "id": e.id,
            "kind": e.db_kind or e.kind.value,
            "lat": e.location.lat,
            "lon": e.location.lon,
            "fingerprint": [float(v) for v in e.fingerprint],
        }
        for e in db
    ]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_queue_profile(path) -> QueueProfile:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return QueueProfile(
        vehicle_length=float(payload.get("vehicle_length", 5.0)),
        buckets={
            name: QueueBucket(mu=float(b["mu"]), sigma=float(b["sigma"]))
            for name, b in payload["buckets"].items()
        },
    )


def save_queue_profile(profile: QueueProfile, path) -> None:
    payload = {
        "vehicle_length": profile.vehicle_length,
        "buckets": {name: {"mu": b.mu, "sigma": b.sigma} for name, b in profile.buckets.items()},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _window_samples(t: np.ndarray, span_s: float) -> int:
    """Odd sample count approximating span_s at the series' sample rate."""
    if len(t) < 2:
        return 1
    rate = 1.0 / float(np.median(np.diff(t)))
    return max(1, int(round(span_s * rate)) | 1)


def _moving_average(x: np.ndarray, n: int) -> np.ndarray:
    """Centered moving average with shrinking windows at the edges."""
    if n <= 1 or len(x) <= 1:
        return x.astype(float)
    c = np.concatenate(([0.0], np.cumsum(x, dtype=float)))
    half = n // 2
    idx = np.arange(len(x))
    lo = np.maximum(0, idx - half)
    hi = np.minimum(len(x), idx + half + 1)
    return (c[hi] - c[lo]) / (hi - lo)


def _true_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) index ranges of consecutive True values."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    edges = np.flatnonzero(np.diff(np.concatenate(([False], mask, [False])).astype(int)))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]


def _merge_runs(runs: list[tuple[int, int]], t: np.ndarray, gap_s: float) -> list[tuple[int, int]]:
    """Merge runs separated by less than gap_s."""
    merged: list[list[int]] = []
    for i0, i1 in runs:
        if merged and t[i0] - t[merged[-1][1] - 1] <= gap_s:
            merged[-1][1] = i1
        else:
            merged.append([i0, i1])
    return [(a, b) for a, b in merged]


def _net_heading_delta(heading: np.ndarray) -> float:
    """Cumulative signed heading change over a window, degrees."""
    total = 0.0
    for i in range(1, len(heading)):
        total += signed_delta_deg(heading[i], heading[i - 1])
    return total


def _last_run_in(t, mask, t_lo, t_hi, min_s) -> Optional[tuple[int, int]]:
    """Latest qualifying run of mask inside [t_lo, t_hi], or None."""
    best = None
    for i0, i1 in _true_runs(mask & (t >= t_lo) & (t <= t_hi)):
        if t[i1 - 1] - t[i0] >= min_s:
            best = (i0, i1)
    return best


def _first_run_in(t, mask, t_lo, t_hi, min_s) -> Optional[tuple[int, int]]:
    """Earliest qualifying run of mask inside [t_lo, t_hi], or None."""
    for i0, i1 in _true_runs(mask & (t >= t_lo) & (t <= t_hi)):
        if t[i1 - 1] - t[i0] >= min_s:
            return (i0, i1)
    return None
