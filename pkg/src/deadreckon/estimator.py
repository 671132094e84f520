"""End-to-end pose estimation over a trace.

The pipeline runs in fixed timeslots. While GPS accuracy is good the output
simply passes the fixes through, and slots whose fixes meet the stricter
training gate feed the sliding regression buffer (models are refit every
such slot). When fixes disappear or degrade, the pipeline dead-reckons:
predicted per-slot distance advances the position along the smoothed
inertial heading, a zero-velocity update pins the speed during detected
halts, and any landmark pattern that completes inside the slot snaps the
position to the matched infrastructure (minus the expected traffic-light
queue offset).

Before the first successful fit a bad slot falls back to raw kinematics
(identity slopes, zero intercepts); such poses carry fallback_model=True so
downstream consumers can tell calibrated output from the uncalibrated kind.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import EstimatorConfig
from .geo import (
    GeoPoint,
    circular_mean_deg,
    destination_point,
    geodesic_distance,
    initial_bearing_deg,
    signed_delta_deg,
    wrap_deg,
)
from .landmarks import (
    DetectedPattern,
    LandmarkFingerprint,
    PatternKind,
    QueueProfile,
    detect_slope,
    detect_stop_go,
    detect_turn,
    load_queue_profile,
    match_landmark,
    queue_correction,
)
from .motion import (
    MotionState,
    classify_motion,
    compute_motion_windows,
    states_at,
    zero_velocity_update,
)
from .orientation import GRAVITY_BAND, smooth_heading
from .regression import (
    FALLBACK_DISTANCE,
    FALLBACK_VELOCITY,
    DegenerateDesignError,
    DistanceModel,
    InsufficientDataError,
    SlotObservation,
    TrainingBuffer,
    VelocityModel,
    fit_distance,
    fit_velocity,
)
from .trace import GpsFix, Trace, partition_slots


class GpsQuality(str, enum.Enum):
    GOOD = "Good"
    TRAINABLE_GOOD = "TrainableGood"
    BAD = "Bad"


#: While cruising (|a_mean| below the gate) consecutive GPS speeds are
#: blended to halve the speed-measurement noise carried into a dropout;
#: during dynamic slots the latest fix wins outright.
_CRUISE_ACCEL_GATE = 0.3
_CRUISE_SPEED_BLEND = 0.5


class PoseMode(str, enum.Enum):
    GPS_GOOD = "GpsGood"
    DEAD_RECKONED = "DeadReckoned"
    CALIBRATED = "Calibrated"


@dataclass(frozen=True)
class EstimatedPose:
    """Per-slot output: position at the slot end plus how it was obtained."""

    t: float
    position: GeoPoint
    heading: float
    speed: float
    mode: PoseMode
    slot_distance: float
    fallback_model: bool = False

    def __post_init__(self):
        if self.speed < 0.0:
            raise ValueError(f"pose speed must be >= 0, got {self.speed!r}")
        if not 0.0 <= self.heading < 360.0:
            raise ValueError(f"pose heading must be in [0, 360), got {self.heading!r}")


@dataclass
class SensorSeries:
    """Per-sample channels derived from a trace by the orientation pass."""

    t: np.ndarray
    heading_raw: np.ndarray       # filter heading, deg
    heading_smooth: np.ndarray    # circular moving average, deg
    yaw_rate: np.ndarray          # gravity-axis gyro rate, rad/s (clockwise +)
    forward: np.ndarray           # earth-frame forward accel, m/s2
    lateral: np.ndarray           # earth-frame lateral accel, m/s2 (left +)
    vertical: np.ndarray          # gravity-removed vertical accel, m/s2
    sample_states: list[MotionState]


def gate_gps(fix: Optional[GpsFix], cfg: EstimatorConfig) -> GpsQuality:
    """Classify a slot's fix: absent/inaccurate, usable, or train-worthy."""
    if fix is None or fix.accuracy > cfg.gps_good_m:
        return GpsQuality.BAD
    if fix.accuracy <= cfg.gps_train_m:
        return GpsQuality.TRAINABLE_GOOD
    return GpsQuality.GOOD


def analyze_trace(trace: Trace, cfg: EstimatorConfig) -> SensorSeries:
    """Run the orientation filter over a trace and derive per-sample channels.

    This is an inlined scalar-math equivalent of repeatedly applying
    orientation.update_orientation and orientation.earth_frame_accel (the
    loop runs per sample, so it avoids small-array overhead); the agreement
    is pinned by a test.
    """
    t = trace.imu_t
    accel = trace.imu_accel
    gyro = trace.imu_gyro
    mag = trace.imu_mag
    n = len(t)

    heading_arr = np.empty(n)
    rate_arr = np.empty(n)
    fwd_arr = np.empty(n)
    lat_arr = np.empty(n)
    vert_arr = np.empty(n)

    gx, gy, gz = (float(v) for v in accel[0])
    k = cfg.mag_blend_k
    tau = cfg.gravity_tau_s
    freeze = cfg.gravity_freeze_mps2
    decl = cfg.declination_deg

    heading = _mag_heading_scalar(mag[0], gx, gy, gz, decl)
    t_prev = float(t[0])

    for i in range(n):
        ax, ay, az = float(accel[i, 0]), float(accel[i, 1]), float(accel[i, 2])
        gnorm = math.sqrt(gx * gx + gy * gy + gz * gz)
        ghx, ghy, ghz = gx / gnorm, gy / gnorm, gz / gnorm

        if i > 0:
            dt = float(t[i]) - t_prev
            rate = (float(gyro[i, 0]) * ghx + float(gyro[i, 1]) * ghy
                    + float(gyro[i, 2]) * ghz)
            heading += math.degrees(rate) * dt
            if k > 0.0:
                observed = _mag_heading_scalar(mag[i], gx, gy, gz, decl)
                heading += k * signed_delta_deg(observed, heading)
            heading = heading % 360.0
            # gravity tracks the accel only while it looks like pure gravity
            dev = math.sqrt((ax - gx) ** 2 + (ay - gy) ** 2 + (az - gz) ** 2)
            if dev < freeze:
                alpha = dt / (tau + dt)
                gx += alpha * (ax - gx)
                gy += alpha * (ay - gy)
                gz += alpha * (az - gz)
                gnorm = math.sqrt(gx * gx + gy * gy + gz * gz)
                ghx, ghy, ghz = gx / gnorm, gy / gnorm, gz / gnorm
            t_prev = float(t[i])
            rate_arr[i] = rate
        else:
            rate_arr[i] = (float(gyro[0, 0]) * ghx + float(gyro[0, 1]) * ghy
                           + float(gyro[0, 2]) * ghz)

        heading_arr[i] = heading

        # vehicle-frame decomposition with gravity removed
        a_dot_g = ax * ghx + ay * ghy + az * ghz
        vert_arr[i] = a_dot_g - gnorm
        hx, hy, hz = ax - a_dot_g * ghx, ay - a_dot_g * ghy, az - a_dot_g * ghz
        fx, fy, fz = 1.0 - ghx * ghx, -ghx * ghy, -ghx * ghz  # x-axis minus its g component
        fnorm = math.sqrt(fx * fx + fy * fy + fz * fz)
        fx, fy, fz = fx / fnorm, fy / fnorm, fz / fnorm
        lx = ghy * fz - ghz * fy
        ly = ghz * fx - ghx * fz
        lz = ghx * fy - ghy * fx
        fwd_arr[i] = hx * fx + hy * fy + hz * fz
        lat_arr[i] = hx * lx + hy * ly + hz * lz

    if not (GRAVITY_BAND[0] <= math.sqrt(gx * gx + gy * gy + gz * gz) <= GRAVITY_BAND[1]):
        raise ValueError("gravity estimate never settled into the plausible band")

    rate_hz = trace.imu_rate_hz
    window = max(1, int(round(cfg.heading_smooth_s * rate_hz)) | 1)
    heading_smooth = np.array(smooth_heading(heading_arr, window))

    windows = compute_motion_windows(t, accel, gyro, cfg.motion.window_s, cfg.motion.hop_s)
    thresholds = cfg.motion.thresholds()
    window_states = [classify_motion(w, thresholds) for w in windows]
    sample_states = states_at(windows, window_states, t)

    return SensorSeries(
        t=t,
        heading_raw=heading_arr,
        heading_smooth=heading_smooth,
        yaw_rate=rate_arr,
        forward=fwd_arr,
        lateral=lat_arr,
        vertical=vert_arr,
        sample_states=sample_states,
    )


def _mag_heading_scalar(m, gx, gy, gz, declination_deg) -> float:
    gnorm = math.sqrt(gx * gx + gy * gy + gz * gz)
    ghx, ghy, ghz = gx / gnorm, gy / gnorm, gz / gnorm
    fx, fy, fz = 1.0 - ghx * ghx, -ghx * ghy, -ghx * ghz
    fnorm = math.sqrt(fx * fx + fy * fy + fz * fz)
    fx, fy, fz = fx / fnorm, fy / fnorm, fz / fnorm
    lx = ghy * fz - ghz * fy
    ly = ghz * fx - ghx * fz
    lz = ghx * fy - ghy * fx
    mx, my, mz = float(m[0]), float(m[1]), float(m[2])
    m_dot_g = mx * ghx + my * ghy + mz * ghz
    hx, hy, hz = mx - m_dot_g * ghx, my - m_dot_g * ghy, mz - m_dot_g * ghz
    return (math.degrees(math.atan2(hx * lx + hy * ly + hz * lz,
                                    hx * fx + hy * fy + hz * fz)) + declination_deg) % 360.0


def detect_patterns(series: SensorSeries, cfg: EstimatorConfig) -> list[DetectedPattern]:
    """Run all landmark detectors over the per-sample channels."""
    patterns = detect_stop_go(series.t, series.forward, series.sample_states, cfg.detector)
    patterns += detect_turn(series.t, series.heading_smooth, series.yaw_rate,
                            series.lateral, cfg.detector)
    patterns += detect_slope(series.t, series.vertical, cfg.detector)
    return sorted(patterns, key=lambda p: p.t_end)


class Estimator:
    """Binds a configuration, a landmark database, and a queue profile."""

    def __init__(self, cfg: EstimatorConfig,
                 landmark_db: Optional[Sequence[LandmarkFingerprint]] = None,
                 queue_profile: Optional[QueueProfile] = None):
        self.cfg = cfg
        self.db = list(landmark_db) if landmark_db else []
        if queue_profile is None:
            queue_profile = (
                load_queue_profile(cfg.queue_profile_path)
                if cfg.queue_profile_path else QueueProfile()
            )
        self.queue_profile = queue_profile

    def run(self, trace: Trace) -> list[EstimatedPose]:
        """Estimate one pose per timeslot. Deterministic for fixed inputs."""
        cfg = self.cfg
        slots = partition_slots(trace, cfg.slot_s)
        series = analyze_trace(trace, cfg)
        patterns = detect_patterns(series, cfg) if self.db else []

        position: Optional[GeoPoint] = None
        speed = 0.0
        heading_offset = 0.0
        prev_fix: Optional[GpsFix] = None
        prev_trainable = False
        prev_speed = 0.0
        buffer = TrainingBuffer(cfg.buffer_capacity)
        vmodel: Optional[VelocityModel] = None
        dmodel: Optional[DistanceModel] = None
        poses: list[EstimatedPose] = []

        for slot in slots:
            lo, hi = slot.imu_span
            a_mean = float(np.mean(series.forward[lo:hi]))
            stopped_count = sum(
                1 for s in series.sample_states[lo:hi] if s is MotionState.STOPPED
            )
            slot_motion = (
                MotionState.STOPPED if 2 * stopped_count > (hi - lo) else MotionState.MOVING
            )
            dt = slot.duration
            quality = gate_gps(slot.gps_at_end, cfg)

            if quality is not GpsQuality.BAD:
                fix = slot.gps_at_end
                new_pos = fix.point
                g_dist = None
                gap_ok = prev_fix is not None and (fix.t - prev_fix.t) <= 1.5 * cfg.slot_s
                if gap_ok:
                    g_dist = geodesic_distance(prev_fix.point, new_pos)
                if fix.speed is not None:
                    speed_meas = fix.speed
                elif g_dist is not None:
                    speed_meas = g_dist / (fix.t - prev_fix.t)
                else:
                    speed_meas = 0.0

                if (cfg.reanchor_heading and gap_ok and g_dist > 1e-6
                        and speed_meas >= cfg.reanchor_min_speed):
                    course = initial_bearing_deg(prev_fix.point, new_pos)
                    target = signed_delta_deg(course, float(series.heading_smooth[hi - 1]))
                    heading_offset += cfg.reanchor_alpha * signed_delta_deg(target, heading_offset)
                    heading_offset = signed_delta_deg(heading_offset, 0.0)

                if (quality is GpsQuality.TRAINABLE_GOOD and prev_trainable and gap_ok):
                    buffer.push(
                        SlotObservation(
                            v_prev=prev_speed,
                            a_mean=a_mean,
                            dt=fix.t - prev_fix.t,
                            g_dist=g_dist,
                            v_end=speed_meas,
                        )
                    )
                    if len(buffer) >= cfg.min_obs:
                        try:
                            vmodel = fit_velocity(buffer, cfg.min_obs)
                            dmodel = fit_distance(buffer, cfg.min_obs)
                        except (InsufficientDataError, DegenerateDesignError):
                            pass  # keep the previous models

                heading = wrap_deg(float(series.heading_smooth[hi - 1]) + heading_offset)
                poses.append(
                    EstimatedPose(
                        t=slot.t_end, position=new_pos, heading=heading,
                        speed=speed_meas, mode=PoseMode.GPS_GOOD,
                        slot_distance=g_dist if g_dist is not None else 0.0,
                    )
                )
                position = new_pos
                if gap_ok and abs(a_mean) < _CRUISE_ACCEL_GATE and speed > 0.0:
                    speed = speed + _CRUISE_SPEED_BLEND * (speed_meas - speed)
                else:
                    speed = speed_meas
                speed = zero_velocity_update(speed, slot_motion)
                prev_fix = fix
                prev_trainable = quality is GpsQuality.TRAINABLE_GOOD
                prev_speed = speed_meas
                continue

            # --- dead reckoning ------------------------------------------
            if position is None:
                raise ValueError(
                    f"slot {slot.index} has no usable GPS and no prior position; "
                    "traces must start under good GPS"
                )
            fallback = vmodel is None or dmodel is None
            vm = vmodel if vmodel is not None else FALLBACK_VELOCITY
            dm = dmodel if dmodel is not None else FALLBACK_DISTANCE

            slot_heading = wrap_deg(
                circular_mean_deg(series.heading_smooth[lo:hi]) + heading_offset
            )
            # quasi-static slots hold speed: integrating the learned intercept
            # through a long outage would otherwise drift the speed chain
            if abs(a_mean) < cfg.cruise_hold_accel:
                v_raw = speed
            else:
                v_raw = vm.predict(speed, a_mean, dt)
            v_pred = zero_velocity_update(v_raw, slot_motion)
            distance = 0.0 if slot_motion is MotionState.STOPPED else dm.predict(speed, a_mean, dt)
            new_pos = destination_point(position, slot_heading, distance)
            mode = PoseMode.DEAD_RECKONED

            if self.db:
                for pattern in reversed(
                    [p for p in patterns if slot.t_start < p.t_end <= slot.t_end]
                ):
                    hit = match_landmark(
                        pattern, new_pos, self.db,
                        alpha=cfg.matching.alpha,
                        radius_m=cfg.matching.radius_m,
                        d0_m=cfg.matching.d0_m,
                    )
                    if hit is None:
                        continue
                    landmark, _ = hit
                    if pattern.kind is PatternKind.STOP_GO:
                        offset = queue_correction(self.queue_profile, cfg.queue_bucket)
                        new_pos = destination_point(
                            landmark.location, wrap_deg(slot_heading + 180.0), offset
                        )
                    else:
                        # the landmark marks the maneuver geometry (corner,
                        # slope end); the vehicle sits ahead of it by the
                        # maneuver exit plus travel since the pattern ended
                        ahead = v_pred * (slot.t_end - pattern.t_end)
                        if pattern.kind is PatternKind.TURN:
                            ahead += _turn_exit_offset(pattern, v_pred, cfg.detector.turn_pad_s)
                        new_pos = destination_point(landmark.location, slot_heading, ahead)
                    mode = PoseMode.CALIBRATED
                    break

            poses.append(
                EstimatedPose(
                    t=slot.t_end, position=new_pos, heading=slot_heading,
                    speed=v_pred, mode=mode, slot_distance=distance,
                    fallback_model=fallback,
                )
            )
            position = new_pos
            speed = v_pred
            prev_fix = None
            prev_trainable = False

        return poses


def _turn_exit_offset(pattern: DetectedPattern, speed: float, pad_s: float) -> float:
    """Distance from a corner to the vehicle at the turn pattern's end.

    A turn at constant speed v and rate w sweeps an arc tangent to both
    legs; its exit point is r*tan(|delta|/2) past the corner (r = v/w), and
    the detector pads the pattern by pad_s of straight driving.
    """
    if pattern.heading_delta is None or speed <= 0.0:
        return 0.0
    delta = abs(math.radians(pattern.heading_delta))
    core_s = max(pattern.t_end - pattern.t_start - 2.0 * pad_s, 1e-3)
    omega = delta / core_s
    if omega < 1e-6:
        return speed * pad_s
    radius = speed / omega
    return radius * math.tan(min(delta, math.radians(150.0)) / 2.0) + speed * pad_s


def save_poses_csv(poses: Sequence[EstimatedPose], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,lat,lon,heading_deg,speed_mps,mode,slot_distance_m\n")
        for p in poses:
            fh.write(
                f"{float(p.t)!r},{float(p.position.lat)!r},{float(p.position.lon)!r},"
                f"{float(p.heading)!r},{float(p.speed)!r},{p.mode.value},"
                f"{float(p.slot_distance)!r}\n"
            )


def load_poses_csv(path) -> list[EstimatedPose]:
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        expected = "t,lat,lon,heading_deg,speed_mps,mode,slot_distance_m"
        if header != expected:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 7:
                raise ValueError(f"{path}: malformed row {line!r}")
            poses.append(
                EstimatedPose(
                    t=float(parts[0]),
                    position=GeoPoint(float(parts[1]), float(parts[2])),
                    heading=float(parts[3]),
                    speed=float(parts[4]),
                    mode=PoseMode(parts[5]),
                    slot_distance=float(parts[6]),
                )
            )
    return poses
