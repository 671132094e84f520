"""Scenario-driven trajectory and sensor-trace synthesis.

A scenario is a route polyline plus an ordered event script (speed changes,
scripted stops, smoothed turns at route corners, slope overlays, GPS
dropouts) and a set of traffic lights. Ground truth is built from
closed-form kinematic phases, so the emitted series are self-consistent to
float precision: the per-sample acceleration is the interval average
(v[k+1]-v[k])/dt, which makes naive integration of acceleration reproduce
the speed series exactly, and likewise for the gyro and heading.

Noisy sensor streams are derived from the truth: accelerometer readings are
scaled by (1+epsilon) and perturbed by Gaussian noise plus driving vibration
while the vehicle moves; the gyro gets a constant bias plus noise; the
magnetometer reports the true-north heading with angular noise; GPS fixes
carry a first-order Gauss-Markov position error (temporally correlated,
stationary RMS equal to gps_error_std) and disappear entirely inside
dropout windows. Everything is seeded and reproducible.

Traffic lights the vehicle stops at insert their own braking/wait/resume
sequence; the stop lands a queue's worth of meters short of the stop line,
with the queue length drawn per light from the scenario's queue profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .geo import (
    GeoPoint,
    destination_point,
    from_local_enu,
    signed_delta_deg,
    to_local_enu,
    wrap_deg,
)
from .landmarks import (
    DetectorConfig,
    LandmarkFingerprint,
    PatternKind,
    QueueProfile,
    detect_slope,
    detect_stop_go,
    detect_turn,
    save_landmark_db,
)
from .motion import MotionState
from .trace import GpsFix, ImuSample, Trace, save_trace

GRAVITY_MPS2 = 9.80665
MAG_FIELD_UT = 50.0

#: Route projection tolerance for event locations, meters.
_ON_ROUTE_TOL_M = 5.0
_VERTEX_TOL_M = 10.0
_HEADING_TOL_DEG = 5.0

_DEFAULT_ACCEL = 1.5
_DEFAULT_DECEL = 2.0


class InfeasibleEventError(ValueError):
    """An event cannot be realized on the scenario's route."""


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor corruption parameters; all noise is seeded and reproducible.

    epsilon is the accelerometer scale error; delta_std the white accel noise.
    The vibration fields model road/engine shake present only while the
    vehicle moves (that contrast is what variance-based motion detection
    keys on); it couples through the suspension mostly vertically, so the
    horizontal axes get a smaller share. gps_error_tau_s is the correlation
    time of the Gauss-Markov GPS position error; 0 means independent fixes.
    """

    epsilon: float = 0.03
    delta_std: float = 0.15          # m/s2
    gyro_bias: float = 0.005         # rad/s
    gyro_noise_std: float = 0.01     # rad/s
    mag_noise_deg: float = 10.0
    gps_error_std: float = 8.0       # m, stationary RMS of the position error
    gps_error_tau_s: float = 90.0
    gps_speed_std: float = 0.1       # m/s (Doppler-grade)
    vibration_std: float = 0.65      # m/s2, vertical axis, moving only
    vibration_horiz_std: float = 0.2  # m/s2, forward/lateral axes, moving only
    gyro_vibration_std: float = 0.09  # rad/s per axis, moving only
    seed: int = 0

    def __post_init__(self):
        stds = (self.delta_std, self.gyro_noise_std, self.mag_noise_deg,
                self.gps_error_std, self.gps_speed_std, self.vibration_std,
                self.vibration_horiz_std, self.gyro_vibration_std)
        if any(s < 0.0 for s in stds):
            raise ValueError("noise standard deviations must be >= 0")
        if self.gps_error_tau_s < 0.0:
            raise ValueError("gps_error_tau_s must be >= 0")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseSpec":
        return cls(epsilon=0.0, delta_std=0.0, gyro_bias=0.0, gyro_noise_std=0.0,
                   mag_noise_deg=0.0, gps_error_std=0.0, gps_error_tau_s=0.0,
                   gps_speed_std=0.0, vibration_std=0.0, vibration_horiz_std=0.0,
                   gyro_vibration_std=0.0, seed=seed)


@dataclass(frozen=True)
class CruiseAt:
    """Reach and hold a speed, ramping at a gentle default acceleration."""

    speed: float


@dataclass(frozen=True)
class AccelTo:
    """Reach and hold a speed, ramping at the given |acceleration|."""

    speed: float
    accel: float


@dataclass(frozen=True)
class StopAt:
    """Brake to a standstill at a route location, wait, then resume."""

    location: GeoPoint
    duration: float
    decel: float = _DEFAULT_DECEL


@dataclass(frozen=True)
class TurnAt:
    """Round a route corner at the given yaw rate (rad/s).

    The corner vertex must match the event location, and new_heading must
    match the outgoing leg's bearing; the turn is a circular arc tangent to
    both legs.
    """

    location: GeoPoint
    new_heading: float
    rate: float = 0.4


@dataclass(frozen=True)
class SlopeAt:
    """Overlay a bridge/underpass vertical-acceleration excursion.

    signature 'up_down' rises then dips (bridge); 'down_up' is the inverse
    (underpass/tunnel). The overlay spans length_m starting at location.
    """

    location: GeoPoint
    length_m: float
    amplitude: float = 0.6
    signature: str = "up_down"


@dataclass(frozen=True)
class LaneChangeAt:
    """Overlay a net-zero heading wiggle starting at a route location."""

    location: GeoPoint
    peak_deg: float = 10.0
    duration_s: float = 3.0


@dataclass(frozen=True)
class DriveTo:
    """Proceed to a route location at the held speed (a sequencing anchor,
    so that later speed events fire mid-route instead of back-to-back)."""

    location: GeoPoint


@dataclass(frozen=True)
class GpsDropout:
    """Suppress all GPS fixes with t_start <= t <= t_end."""

    t_start: float
    t_end: float


Event = Union[CruiseAt, AccelTo, StopAt, TurnAt, SlopeAt, LaneChangeAt, DriveTo, GpsDropout]


@dataclass(frozen=True)
class TrafficLight:
    """A signalized intersection; stop=False means the light is green."""

    location: GeoPoint
    bucket: str = "default"
    stop: bool = True
    wait_s: float = 8.0
    decel: float = _DEFAULT_DECEL


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to generate one deterministic drive."""

    route: list[GeoPoint]
    events: list[Event] = field(default_factory=list)
    traffic_lights: list[TrafficLight] = field(default_factory=list)
    imu_rate: float = 20.0
    gps_rate: float = 0.5
    initial_speed: float = 0.0
    warmup_s: float = 0.0            # parked time before the script starts
    mount_yaw_deg: float = 0.0       # phone yaw relative to the vehicle
    queue_seed: int = 0              # drives the per-light queue draws
    queue_profile: QueueProfile = field(default_factory=QueueProfile)

    def __post_init__(self):
        if len(self.route) < 2:
            raise ValueError("route needs at least two points")
        if self.imu_rate <= 0.0 or self.gps_rate <= 0.0:
            raise ValueError("sensor rates must be > 0")
        if self.imu_rate < self.gps_rate:
            raise ValueError("imu_rate must be >= gps_rate")
        if self.initial_speed < 0.0 or self.warmup_s < 0.0:
            raise ValueError("initial_speed and warmup_s must be >= 0")

    @property
    def dropouts(self) -> list[tuple[float, float]]:
        return [(e.t_start, e.t_end) for e in self.events if isinstance(e, GpsDropout)]


@dataclass(frozen=True)
class GroundTruth:
    """Dense per-sample kinematic truth at the scenario's IMU rate.

    accel is the interval-average forward acceleration over [t[k], t[k+1]];
    yaw_rate likewise for the heading (rad/s, positive clockwise). odometer
    is the traveled path length.
    """

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    east: np.ndarray
    north: np.ndarray
    heading_deg: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    yaw_rate: np.ndarray
    lat_accel: np.ndarray
    vert_overlay: np.ndarray
    odometer: np.ndarray
    moving: np.ndarray
    origin: GeoPoint
    imu_rate: float
    gps_rate: float
    mount_yaw_deg: float
    dropouts: list[tuple[float, float]]
    stop_positions: list[GeoPoint]       # where the vehicle actually halted
    route_length: float

    def point(self, i: int) -> GeoPoint:
        return GeoPoint(float(self.lat[i]), float(self.lon[i]))


# ---------------------------------------------------------------------------
# Route geometry


class _RouteGeometry:
    def __init__(self, route: Sequence[GeoPoint]):
        self.origin = route[0]
        enu = np.array([to_local_enu(self.origin, p) for p in route])
        deltas = np.diff(enu, axis=0)
        lengths = np.hypot(deltas[:, 0], deltas[:, 1])
        if np.any(lengths < 1e-6):
            raise ValueError("route has duplicate consecutive points")
        self.enu = enu
        self.leg_len = lengths
        self.leg_dir = deltas / lengths[:, None]
        self.leg_bearing = np.degrees(np.arctan2(deltas[:, 0], deltas[:, 1])) % 360.0
        self.cum_s = np.concatenate(([0.0], np.cumsum(lengths)))
        self.total = float(self.cum_s[-1])

    def leg_index(self, s) -> np.ndarray:
        idx = np.searchsorted(self.cum_s, s, side="right") - 1
        return np.clip(idx, 0, len(self.leg_len) - 1)

    def position_at(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.total)
        idx = self.leg_index(s)
        frac = (s - self.cum_s[idx])[:, None]
        return self.enu[idx] + self.leg_dir[idx] * frac

    def bearing_at(self, s) -> np.ndarray:
        return self.leg_bearing[self.leg_index(np.asarray(s, dtype=float))]

    def project(self, p: GeoPoint, tol_m: float = _ON_ROUTE_TOL_M) -> float:
        """Arc length of the closest route point; error if farther than tol_m."""
        q = np.array(to_local_enu(self.origin, p))
        best_s, best_d = 0.0, math.inf
        for i in range(len(self.leg_len)):
            rel = q - self.enu[i]
            along = float(np.clip(np.dot(rel, self.leg_dir[i]), 0.0, self.leg_len[i]))
            closest = self.enu[i] + along * self.leg_dir[i]
            d = float(np.hypot(*(q - closest)))
            if d < best_d:
                best_d, best_s = d, float(self.cum_s[i] + along)
        if best_d > tol_m:
            raise InfeasibleEventError(
                f"location {p} is {best_d:.1f} m off the route (limit {tol_m} m)"
            )
        return best_s

    def nearest_vertex(self, p: GeoPoint) -> int:
        q = np.array(to_local_enu(self.origin, p))
        d = np.hypot(*(self.enu - q).T)
        i = int(np.argmin(d))
        if d[i] > _VERTEX_TOL_M:
            raise InfeasibleEventError(
                f"turn location {p} is {d[i]:.1f} m from the nearest route corner"
            )
        if i == 0 or i == len(self.enu) - 1:
            raise InfeasibleEventError("turns must happen at interior route corners")
        return i


# ---------------------------------------------------------------------------
# Kinematic phases


@dataclass
class _Phase:
    kind: str                 # hold | ramp | stop | arc
    t0: float
    t1: float
    v0: float
    a: float = 0.0            # ramp acceleration (signed)
    s_route0: float = 0.0
    s_route1: float = 0.0
    s_path0: float = 0.0
    heading0: float = 0.0     # arc only, degrees
    omega_deg: float = 0.0    # arc only, deg/s (signed, clockwise positive)
    enu0: tuple[float, float] = (0.0, 0.0)

    def speed_at(self, tau):
        if self.kind == "ramp":
            return self.v0 + self.a * tau
        if self.kind == "stop":
            return np.zeros_like(tau)
        return np.full_like(tau, self.v0)

    def dist_at(self, tau):
        if self.kind == "ramp":
            return self.v0 * tau + 0.5 * self.a * tau * tau
        if self.kind == "stop":
            return np.zeros_like(tau)
        return self.v0 * tau


class _TruthBuilder:
    def __init__(self, scenario: ScenarioSpec):
        self.sc = scenario
        self.geom = _RouteGeometry(scenario.route)
        self.phases: list[_Phase] = []
        self.t = 0.0
        self.v = float(scenario.initial_speed)
        self.s_route = 0.0
        self.s_path = 0.0
        self.slope_spans: list[tuple[float, float, float, str]] = []
        self.lane_changes: list[tuple[float, float, float]] = []   # (s, peak, duration)
        self.turned_vertices: list[float] = []
        self.lights = self._draw_light_stops()
        self._pending_resume: Optional[float] = None

    # -- queue draws ---------------------------------------------------

    def _draw_light_stops(self) -> list[dict]:
        rng = np.random.default_rng(self.sc.queue_seed)
        stops = []
        profile = self.sc.queue_profile
        for i, light in enumerate(self.sc.traffic_lights):
            s_light = self.geom.project(light.location)
            if not light.stop:
                continue
            bucket = profile.buckets.get(light.bucket)
            if bucket is None:
                raise InfeasibleEventError(
                    f"traffic light {i} uses unknown queue bucket {light.bucket!r}"
                )
            n = max(0.0, round(float(rng.normal(bucket.mu, bucket.sigma))))
            queue_m = n * profile.vehicle_length / 2.0
            s_stop = s_light - queue_m
            if s_stop <= 0.0:
                raise InfeasibleEventError(f"traffic light {i} stop point before route start")
            stops.append({"s_stop": s_stop, "wait": light.wait_s, "decel": light.decel})
        stops.sort(key=lambda d: d["s_stop"])
        return stops

    # -- phase helpers ---------------------------------------------------

    def _add(self, kind: str, duration: float, **kw) -> _Phase:
        ph = _Phase(kind=kind, t0=self.t, t1=self.t + duration, v0=self.v,
                    s_route0=self.s_route, s_path0=self.s_path, **kw)
        self.phases.append(ph)
        self.t = ph.t1
        return ph

    def _hold_until(self, s_target: float) -> None:
        if s_target <= self.s_route + 1e-9:
            return
        if self.v <= 0.0:
            raise InfeasibleEventError(
                f"vehicle is stopped at s={self.s_route:.1f} m but must reach "
                f"s={s_target:.1f} m; add a speed event"
            )
        dist = s_target - self.s_route
        ph = self._add("hold", dist / self.v)
        ph.s_route1 = s_target
        self.s_route = s_target
        self.s_path += dist

    def _ramp_to(self, v_target: float, accel: float) -> None:
        if abs(v_target - self.v) < 1e-12:
            return
        if accel <= 0.0:
            raise InfeasibleEventError("ramp acceleration must be > 0")
        a = math.copysign(accel, v_target - self.v)
        duration = (v_target - self.v) / a
        dist = self.v * duration + 0.5 * a * duration * duration
        if self.s_route + dist > self.geom.total + 1e-6:
            raise InfeasibleEventError("speed change runs past the end of the route")
        ph = self._add("ramp", duration, a=a)
        ph.s_route1 = self.s_route + dist
        self.s_route += dist
        self.s_path += dist
        self.v = v_target

    def _stationary(self, duration: float) -> None:
        if duration <= 0.0:
            return
        ph = self._add("stop", duration)
        ph.s_route1 = self.s_route

    def _full_stop(self, s_stop: float, wait: float, decel: float) -> None:
        brake_dist = self.v * self.v / (2.0 * decel)
        s_brake = s_stop - brake_dist
        if s_brake < self.s_route - 1e-6:
            raise InfeasibleEventError(
                f"no braking room before stop at s={s_stop:.1f} m "
                f"(need {brake_dist:.1f} m, have {s_stop - self.s_route:.1f} m)"
            )
        self._hold_until(s_brake)
        pre_stop_v = self.v
        self._ramp_to(0.0, decel)
        self.s_route = s_stop  # kill float drift from the ramp
        self._stationary(wait)
        self._pending_resume = pre_stop_v

    def _resume_if_needed(self, accel: float = _DEFAULT_DECEL) -> None:
        v = getattr(self, "_pending_resume", None)
        if v is not None and self.s_route < self.geom.total - 0.5:
            self._ramp_to(v, accel)
        self._pending_resume = None

    def _advance_to(self, s_target: float) -> None:
        """Drive to s_target at the held speed, serving any traffic lights."""
        while self.lights and self.lights[0]["s_stop"] <= s_target + 1e-9:
            stop = self.lights.pop(0)
            self._resume_if_needed()
            self._full_stop(stop["s_stop"], stop["wait"], stop["decel"])
            self._resume_if_needed()
        self._resume_if_needed()
        self._hold_until(s_target)

    # -- events ----------------------------------------------------------

    def build(self) -> list[_Phase]:
        if self.sc.warmup_s > 0.0:
            if self.v != 0.0:
                raise InfeasibleEventError("warmup requires initial_speed == 0")
            self._stationary(self.sc.warmup_s)

        events = list(self.sc.events)
        i = 0
        while i < len(events):
            ev = events[i]
            i += 1
            if isinstance(ev, GpsDropout):
                continue  # handled at GPS synthesis time
            elif isinstance(ev, SlopeAt):
                s0 = self.geom.project(ev.location)
                if ev.length_m <= 0.0:
                    raise InfeasibleEventError("slope length must be > 0")
                self.slope_spans.append((s0, s0 + ev.length_m, ev.amplitude, ev.signature))
            elif isinstance(ev, LaneChangeAt):
                self.lane_changes.append(
                    (self.geom.project(ev.location), ev.peak_deg, ev.duration_s)
                )
            elif isinstance(ev, DriveTo):
                self._advance_to(self.geom.project(ev.location))
            elif isinstance(ev, (CruiseAt, AccelTo)):
                self._resume_if_needed()
                accel = ev.accel if isinstance(ev, AccelTo) else _DEFAULT_ACCEL
                if ev.speed < 0.0:
                    raise InfeasibleEventError("target speed must be >= 0")
                if self.lights and self.lights[0]["s_stop"] < self.s_route + 1e-9:
                    raise InfeasibleEventError("traffic light stop overlaps a speed change")
                self._ramp_to(ev.speed, accel)
            elif isinstance(ev, StopAt):
                s_stop = self.geom.project(ev.location)
                self._advance_to(s_stop - self.v * self.v / (2.0 * ev.decel))
                self._full_stop(s_stop, ev.duration, ev.decel)
                # an immediately following speed command overrides auto-resume
                if i < len(events) and isinstance(events[i], (CruiseAt, AccelTo)):
                    self._pending_resume = None
                    nxt = events[i]
                    i += 1
                    accel = nxt.accel if isinstance(nxt, AccelTo) else _DEFAULT_ACCEL
                    self._ramp_to(nxt.speed, accel)
            elif isinstance(ev, TurnAt):
                self._turn(ev)
            else:
                raise InfeasibleEventError(f"unknown event {ev!r}")

        self._advance_to(self.geom.total)
        if self.lights:
            raise InfeasibleEventError("traffic lights remain beyond the route end")
        self._check_untreated_corners()
        return self.phases

    def _turn(self, ev: TurnAt) -> None:
        if ev.rate <= 0.0:
            raise InfeasibleEventError("turn rate must be > 0")
        vertex = self.geom.nearest_vertex(ev.location)
        bearing_in = float(self.geom.leg_bearing[vertex - 1])
        bearing_out = float(self.geom.leg_bearing[vertex])
        if abs(signed_delta_deg(ev.new_heading, bearing_out)) > _HEADING_TOL_DEG:
            raise InfeasibleEventError(
                f"turn new_heading {ev.new_heading:.1f} does not match the outgoing "
                f"leg bearing {bearing_out:.1f}"
            )
        delta = signed_delta_deg(bearing_out, bearing_in)
        s_vertex = float(self.geom.cum_s[vertex])
        self.turned_vertices.append(s_vertex)
        self._advance_to_turn_entry(s_vertex, delta, ev.rate)
        if self.v <= 0.0:
            raise InfeasibleEventError("cannot turn while stopped")
        radius = self.v / ev.rate
        d = radius * math.tan(math.radians(abs(delta)) / 2.0)
        duration = math.radians(abs(delta)) / ev.rate
        omega_deg = math.copysign(math.degrees(ev.rate), delta)
        entry = self.geom.position_at(np.array([s_vertex - d]))[0]
        ph = self._add("arc", duration, heading0=bearing_in, omega_deg=omega_deg,
                       enu0=(float(entry[0]), float(entry[1])))
        ph.s_route1 = s_vertex + d
        self.s_route = s_vertex + d
        self.s_path += radius * math.radians(abs(delta))

    def _advance_to_turn_entry(self, s_vertex: float, delta: float, rate: float) -> None:
        # the entry point depends on speed, which lights along the way may
        # change back and forth; serve them first, then compute the entry
        while self.lights and self.lights[0]["s_stop"] < s_vertex:
            stop = self.lights.pop(0)
            self._resume_if_needed()
            self._full_stop(stop["s_stop"], stop["wait"], stop["decel"])
            self._resume_if_needed()
        self._resume_if_needed()
        d = (self.v / rate) * math.tan(math.radians(abs(delta)) / 2.0)
        entry_s = s_vertex - d
        if entry_s < self.s_route - 1e-6:
            raise InfeasibleEventError(
                f"turn entry at s={entry_s:.1f} m is behind the vehicle "
                f"(s={self.s_route:.1f} m); slow down or shorten the previous leg"
            )
        self._hold_until(entry_s)

    def _check_untreated_corners(self) -> None:
        for i in range(1, len(self.geom.leg_len)):
            bend = abs(signed_delta_deg(self.geom.leg_bearing[i], self.geom.leg_bearing[i - 1]))
            if bend > 2.0:
                s_vertex = float(self.geom.cum_s[i])
                if not any(abs(s_vertex - s) < 1.0 for s in self.turned_vertices):
                    raise InfeasibleEventError(
                        f"route bends {bend:.1f} deg at s={s_vertex:.1f} m without a turn event"
                    )


def generate_ground_truth(scenario: ScenarioSpec) -> GroundTruth:
    """Integrate a scenario into dense per-sample kinematic truth."""
    builder = _TruthBuilder(scenario)
    phases = builder.build()
    geom = builder.geom
    dt = 1.0 / scenario.imu_rate
    t_end = phases[-1].t1
    n = int(math.floor(t_end / dt + 1e-9)) + 1
    t = np.arange(n) / scenario.imu_rate

    starts = np.array([ph.t0 for ph in phases])
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(phases) - 1)

    speed = np.empty(n)
    s_route = np.empty(n)
    s_path = np.empty(n)
    heading = np.empty(n)
    east = np.empty(n)
    north = np.empty(n)

    for k, ph in enumerate(phases):
        sel = np.flatnonzero(idx == k)
        if len(sel) == 0:
            continue
        tau = np.maximum(t[sel] - ph.t0, 0.0)
        v = ph.speed_at(tau)
        d = ph.dist_at(tau)
        speed[sel] = v
        s_path[sel] = ph.s_path0 + d
        if ph.kind == "arc":
            h = ph.heading0 + ph.omega_deg * tau
            omega_rad = math.radians(ph.omega_deg)
            e0, n0 = ph.enu0
            h0 = math.radians(ph.heading0)
            hr = np.radians(h)
            east[sel] = e0 + (ph.v0 / omega_rad) * (math.cos(h0) - np.cos(hr))
            north[sel] = n0 - (ph.v0 / omega_rad) * (math.sin(h0) - np.sin(hr))
            heading[sel] = h % 360.0
            s_route[sel] = ph.s_route0 + (ph.s_route1 - ph.s_route0) * (
                tau / max(ph.t1 - ph.t0, 1e-12)
            )
        else:
            s = ph.s_route0 + d
            s_route[sel] = s
            pos = geom.position_at(s)
            east[sel] = pos[:, 0]
            north[sel] = pos[:, 1]
            heading[sel] = geom.bearing_at(s)

    # lane-change overlays: net-zero heading wiggle, one full sine period
    for s_lc, peak, duration in builder.lane_changes:
        after = np.flatnonzero(s_route >= s_lc)
        if len(after) == 0:
            continue
        t_lc = t[after[0]]
        mask = (t >= t_lc) & (t <= t_lc + duration)
        heading[mask] = (
            heading[mask] + peak * np.sin(2.0 * math.pi * (t[mask] - t_lc) / duration)
        ) % 360.0

    # interval-average derivatives keep integration exact
    accel = np.zeros(n)
    accel[:-1] = np.diff(speed) / dt
    hd = np.zeros(n)
    hd[:-1] = [signed_delta_deg(heading[i + 1], heading[i]) for i in range(n - 1)]
    yaw_rate = np.radians(hd) / dt
    lat_accel = -speed * yaw_rate

    vert = np.zeros(n)
    for s0, s1, amp, signature in builder.slope_spans:
        if signature not in ("up_down", "down_up"):
            raise InfeasibleEventError(f"unknown slope signature {signature!r}")
        sign = 1.0 if signature == "up_down" else -1.0
        mid = 0.5 * (s0 + s1)
        vert[(s_route >= s0) & (s_route < mid)] += sign * amp
        vert[(s_route >= mid) & (s_route < s1)] -= sign * amp

    moving = speed > 1e-9
    lat0 = math.radians(geom.origin.lat)
    lat = geom.origin.lat + np.degrees(north / 6_371_000.0)
    lon = geom.origin.lon + np.degrees(east / (6_371_000.0 * math.cos(lat0)))

    stop_positions = []
    for k, ph in enumerate(phases):
        if ph.kind != "stop":
            continue
        sel = np.flatnonzero(idx == k)
        if len(sel):
            i = int(sel[0])
            stop_positions.append(GeoPoint(float(lat[i]), float(lon[i])))

    return GroundTruth(
        t=t, lat=lat, lon=lon, east=east, north=north, heading_deg=heading,
        speed=speed, accel=accel, yaw_rate=yaw_rate, lat_accel=lat_accel,
        vert_overlay=vert, odometer=s_path, moving=moving,
        origin=geom.origin, imu_rate=scenario.imu_rate, gps_rate=scenario.gps_rate,
        mount_yaw_deg=scenario.mount_yaw_deg, dropouts=scenario.dropouts,
        stop_positions=stop_positions, route_length=geom.total,
    )


# ---------------------------------------------------------------------------
# Sensor synthesis


def synthesize_imu(truth: GroundTruth, noise: NoiseSpec) -> list[ImuSample]:
    """Corrupt truth into body-frame IMU samples per the noise model."""
    rng = np.random.default_rng(noise.seed)
    n = len(truth.t)
    moving = truth.moving.astype(float)[:, None]

    accel_v = np.column_stack([
        truth.accel,
        truth.lat_accel,
        GRAVITY_MPS2 + truth.vert_overlay,
    ])
    gyro_v = np.column_stack([np.zeros(n), np.zeros(n), truth.yaw_rate])

    accel_p = _yaw_to_phone(accel_v, truth.mount_yaw_deg)
    gyro_p = _yaw_to_phone(gyro_v, truth.mount_yaw_deg)

    accel_m = (1.0 + noise.epsilon) * accel_p
    accel_m = accel_m + rng.normal(0.0, noise.delta_std, (n, 3))
    vib_scale = np.array([noise.vibration_horiz_std, noise.vibration_horiz_std,
                          noise.vibration_std])
    accel_m = accel_m + moving * rng.normal(0.0, 1.0, (n, 3)) * vib_scale

    gyro_m = gyro_p + noise.gyro_bias
    gyro_m = gyro_m + rng.normal(0.0, noise.gyro_noise_std, (n, 3))
    gyro_m = gyro_m + moving * rng.normal(0.0, noise.gyro_vibration_std, (n, 3))

    heading_noisy = truth.heading_deg + rng.normal(0.0, noise.mag_noise_deg, n)
    hr = np.radians(heading_noisy)
    mag_v = MAG_FIELD_UT * np.column_stack([np.cos(hr), np.sin(hr), np.zeros(n)])
    mag_m = _yaw_to_phone(mag_v, truth.mount_yaw_deg)

    return [
        ImuSample(t=float(truth.t[i]), accel=accel_m[i], gyro=gyro_m[i], mag=mag_m[i])
        for i in range(n)
    ]


def synthesize_gps(truth: GroundTruth, noise: NoiseSpec,
                   dropouts: Optional[list[tuple[float, float]]] = None) -> list[GpsFix]:
    """Produce fixes at the GPS rate with Gauss-Markov position error.

    No fixes are produced inside dropout windows. The accuracy field reports
    the error process' stationary RMS (floored at 0.5 m).
    """
    if dropouts is None:
        dropouts = truth.dropouts
    rng = np.random.default_rng(noise.seed + 1)
    stride = max(1, int(round(truth.imu_rate / truth.gps_rate)))
    idx = np.arange(0, len(truth.t), stride)
    m = len(idx)

    sigma_axis = noise.gps_error_std / math.sqrt(2.0)
    dt_gps = stride / truth.imu_rate
    rho = math.exp(-dt_gps / noise.gps_error_tau_s) if noise.gps_error_tau_s > 0.0 else 0.0
    innov = rng.normal(0.0, 1.0, (m, 2))
    err = np.empty((m, 2))
    if m:
        err[0] = sigma_axis * innov[0]
        scale = sigma_axis * math.sqrt(max(0.0, 1.0 - rho * rho))
        for k in range(1, m):
            err[k] = rho * err[k - 1] + scale * innov[k]
    speed_noise = rng.normal(0.0, noise.gps_speed_std, m)

    accuracy = max(noise.gps_error_std, 0.5)
    lat0 = math.radians(truth.origin.lat)
    fixes = []
    for k, i in enumerate(idx):
        t_fix = float(truth.t[i])
        if any(lo <= t_fix <= hi for lo, hi in dropouts):
            continue
        east = float(truth.east[i] + err[k, 0])
        north = float(truth.north[i] + err[k, 1])
        fixes.append(
            GpsFix(
                t=t_fix,
                lat=truth.origin.lat + math.degrees(north / 6_371_000.0),
                lon=truth.origin.lon + math.degrees(east / (6_371_000.0 * math.cos(lat0))),
                accuracy=accuracy,
                speed=max(0.0, float(truth.speed[i]) + float(speed_noise[k])),
            )
        )
    return fixes


def _yaw_to_phone(vec: np.ndarray, yaw_deg: float) -> np.ndarray:
    """Rotate vehicle-frame vectors (forward, left, up) into a phone frame
    yawed clockwise by yaw_deg about the vertical."""
    if yaw_deg == 0.0:
        return vec
    c = math.cos(math.radians(yaw_deg))
    s = math.sin(math.radians(yaw_deg))
    out = vec.copy()
    out[:, 0] = c * vec[:, 0] - s * vec[:, 1]
    out[:, 1] = s * vec[:, 0] + c * vec[:, 1]
    return out


# ---------------------------------------------------------------------------
# Landmark database construction and emission


def build_landmark_db(scenario: ScenarioSpec, truth: GroundTruth) -> list[LandmarkFingerprint]:
    """Fingerprint the scenario's infrastructure from noiseless truth channels.

    Detectors run on the clean truth series; each planted landmark is paired
    with its detected pattern in drive order and stored with the detected
    signature. Green (no-stop) lights reuse the mean stop signature so they
    remain matchable on later drives.
    """
    cfg = DetectorConfig()
    states = [MotionState.MOVING if m else MotionState.STOPPED for m in truth.moving]
    stop_patterns = detect_stop_go(truth.t, truth.accel, states, cfg)
    turn_patterns = detect_turn(truth.t, truth.heading_deg, truth.yaw_rate, truth.lat_accel, cfg)
    turn_patterns = [p for p in turn_patterns if p.kind is PatternKind.TURN]
    slope_patterns = detect_slope(truth.t, truth.vert_overlay, cfg)

    geom = _RouteGeometry(scenario.route)
    db: list[LandmarkFingerprint] = []

    stop_lights = sorted(
        (light for light in scenario.traffic_lights if light.stop),
        key=lambda l: geom.project(l.location),
    )
    if len(stop_lights) != len(stop_patterns):
        raise RuntimeError(
            f"scenario plants {len(stop_lights)} light stops but the noiseless "
            f"drive shows {len(stop_patterns)} stop patterns"
        )
    mean_stop = (
        np.mean([p.features for p in stop_patterns], axis=0)
        if stop_patterns else _canonical_stop_signature()
    )
    light_iter = iter(stop_patterns)
    for i, light in enumerate(scenario.traffic_lights):
        fingerprint = next(light_iter).features if light.stop else mean_stop
        db.append(
            LandmarkFingerprint(
                id=f"light-{i}", kind=PatternKind.STOP_GO, location=light.location,
                fingerprint=np.asarray(fingerprint, dtype=float), db_kind="traffic_light",
            )
        )

    turns = [ev for ev in scenario.events if isinstance(ev, TurnAt)]
    if len(turns) != len(turn_patterns):
        raise RuntimeError(
            f"scenario plants {len(turns)} turns but the noiseless drive "
            f"shows {len(turn_patterns)} turn patterns"
        )
    for i, (ev, pattern) in enumerate(zip(turns, turn_patterns)):
        db.append(
            LandmarkFingerprint(
                id=f"turn-{i}", kind=PatternKind.TURN, location=ev.location,
                fingerprint=pattern.features, db_kind="turn",
            )
        )

    slopes = [ev for ev in scenario.events if isinstance(ev, SlopeAt)]
    if len(slopes) != len(slope_patterns):
        raise RuntimeError(
            f"scenario plants {len(slopes)} slopes but the noiseless drive "
            f"shows {len(slope_patterns)} slope patterns"
        )
    for i, (ev, pattern) in enumerate(zip(slopes, slope_patterns)):
        end = destination_point(
            ev.location,
            float(geom.bearing_at(np.array([geom.project(ev.location)]))[0]),
            ev.length_m,
        )
        db.append(
            LandmarkFingerprint(
                id=f"slope-{i}", kind=PatternKind.SLOPE, location=end,
                fingerprint=pattern.features,
                db_kind="bridge" if ev.signature == "up_down" else "tunnel",
            )
        )
    return db


def _canonical_stop_signature() -> np.ndarray:
    """Brake dip followed by a flat halt, on the detector's 16-point grid."""
    sig = np.zeros(16)
    sig[:6] = -2.0
    return sig


def emit(scenario: ScenarioSpec, noise: NoiseSpec, out_dir) -> dict[str, Path]:
    """Write trace.jsonl, landmarks.json, and truth.csv for a scenario."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = generate_ground_truth(scenario)
    trace = Trace(
        imu=synthesize_imu(truth, noise),
        gps=synthesize_gps(truth, noise),
    )
    paths = {
        "trace": out / "trace.jsonl",
        "landmarks": out / "landmarks.json",
        "truth": out / "truth.csv",
    }
    save_trace(trace, paths["trace"])
    save_landmark_db(build_landmark_db(scenario, truth), paths["landmarks"])
    write_truth_csv(truth, paths["truth"])
    return paths


def write_truth_csv(truth: GroundTruth, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,lat,lon,heading_deg,speed_mps,accel_mps2\n")
        for i in range(len(truth.t)):
            fh.write(
                f"{float(truth.t[i])!r},{float(truth.lat[i])!r},{float(truth.lon[i])!r},"
                f"{float(truth.heading_deg[i])!r},{float(truth.speed[i])!r},"
                f"{float(truth.accel[i])!r}\n"
            )


def load_truth_csv(path) -> dict[str, np.ndarray]:
    """Read a truth CSV back into column arrays."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.shape == ():  # single row
        data = data.reshape(1)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


# ---------------------------------------------------------------------------
# Scenario JSON


_EVENT_TYPES = {
    "cruise_at": CruiseAt,
    "accel_to": AccelTo,
    "stop_at": StopAt,
    "turn_at": TurnAt,
    "slope_at": SlopeAt,
    "lane_change_at": LaneChangeAt,
    "drive_to": DriveTo,
    "gps_dropout": GpsDropout,
}


def scenario_to_json(scenario: ScenarioSpec) -> dict:
    def point(p: GeoPoint) -> dict:
        return {"lat": p.lat, "lon": p.lon}

    events = []
    for ev in scenario.events:
        if isinstance(ev, CruiseAt):
            events.append({"type": "cruise_at", "speed": ev.speed})
        elif isinstance(ev, AccelTo):
            events.append({"type": "accel_to", "speed": ev.speed, "accel": ev.accel})
        elif isinstance(ev, StopAt):
            events.append({"type": "stop_at", **point(ev.location),
                           "duration": ev.duration, "decel": ev.decel})
        elif isinstance(ev, TurnAt):
            events.append({"type": "turn_at", **point(ev.location),
                           "new_heading": ev.new_heading, "rate": ev.rate})
        elif isinstance(ev, SlopeAt):
            events.append({"type": "slope_at", **point(ev.location),
                           "length_m": ev.length_m, "amplitude": ev.amplitude,
                           "signature": ev.signature})
        elif isinstance(ev, LaneChangeAt):
            events.append({"type": "lane_change_at", **point(ev.location),
                           "peak_deg": ev.peak_deg, "duration_s": ev.duration_s})
        elif isinstance(ev, DriveTo):
            events.append({"type": "drive_to", **point(ev.location)})
        elif isinstance(ev, GpsDropout):
            events.append({"type": "gps_dropout", "t_start": ev.t_start, "t_end": ev.t_end})
    return {
        "route": [point(p) for p in scenario.route],
        "events": events,
        "traffic_lights": [
            {**point(l.location), "bucket": l.bucket, "stop": l.stop,
             "wait_s": l.wait_s, "decel": l.decel}
            for l in scenario.traffic_lights
        ],
        "imu_rate": scenario.imu_rate,
        "gps_rate": scenario.gps_rate,
        "initial_speed": scenario.initial_speed,
        "warmup_s": scenario.warmup_s,
        "mount_yaw_deg": scenario.mount_yaw_deg,
        "queue_seed": scenario.queue_seed,
        "queue_profile": {
            "vehicle_length": scenario.queue_profile.vehicle_length,
            "buckets": {
                name: {"mu": b.mu, "sigma": b.sigma}
                for name, b in scenario.queue_profile.buckets.items()
            },
        },
    }


def scenario_from_json(payload: dict) -> ScenarioSpec:
    from .landmarks import QueueBucket

    def point(d: dict) -> GeoPoint:
        return GeoPoint(float(d["lat"]), float(d["lon"]))

    events: list[Event] = []
    for rec in payload.get("events", ()):
        kind = rec.get("type")
        if kind not in _EVENT_TYPES:
            raise ValueError(f"unknown event type {kind!r}")
        if kind == "cruise_at":
            events.append(CruiseAt(speed=float(rec["speed"])))
        elif kind == "accel_to":
            events.append(AccelTo(speed=float(rec["speed"]), accel=float(rec["accel"])))
        elif kind == "stop_at":
            events.append(StopAt(location=point(rec), duration=float(rec["duration"]),
                                 decel=float(rec.get("decel", _DEFAULT_DECEL))))
        elif kind == "turn_at":
            events.append(TurnAt(location=point(rec), new_heading=float(rec["new_heading"]),
                                 rate=float(rec.get("rate", 0.4))))
        elif kind == "slope_at":
            events.append(SlopeAt(location=point(rec), length_m=float(rec["length_m"]),
                                  amplitude=float(rec.get("amplitude", 0.6)),
                                  signature=rec.get("signature", "up_down")))
        elif kind == "lane_change_at":
            events.append(LaneChangeAt(location=point(rec),
                                       peak_deg=float(rec.get("peak_deg", 10.0)),
                                       duration_s=float(rec.get("duration_s", 3.0))))
        elif kind == "drive_to":
            events.append(DriveTo(location=point(rec)))
        elif kind == "gps_dropout":
            events.append(GpsDropout(t_start=float(rec["t_start"]), t_end=float(rec["t_end"])))

    profile = QueueProfile()
    if "queue_profile" in payload:
        qp = payload["queue_profile"]
        profile = QueueProfile(
            vehicle_length=float(qp.get("vehicle_length", 5.0)),
            buckets={
                name: QueueBucket(mu=float(b["mu"]), sigma=float(b["sigma"]))
                for name, b in qp.get("buckets", {}).items()
            } or QueueProfile().buckets,
        )

    return ScenarioSpec(
        route=[point(d) for d in payload["route"]],
        events=events,
        traffic_lights=[
            TrafficLight(location=point(d), bucket=d.get("bucket", "default"),
                         stop=bool(d.get("stop", True)), wait_s=float(d.get("wait_s", 8.0)),
                         decel=float(d.get("decel", _DEFAULT_DECEL)))
            for d in payload.get("traffic_lights", ())
        ],
        imu_rate=float(payload.get("imu_rate", 20.0)),
        gps_rate=float(payload.get("gps_rate", 0.5)),
        initial_speed=float(payload.get("initial_speed", 0.0)),
        warmup_s=float(payload.get("warmup_s", 0.0)),
        mount_yaw_deg=float(payload.get("mount_yaw_deg", 0.0)),
        queue_seed=int(payload.get("queue_seed", 0)),
        queue_profile=profile,
    )


def load_scenario(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json(json.load(fh))


def save_scenario(scenario: ScenarioSpec, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_json(scenario), fh, indent=2)
        fh.write("\n")


def route_from_legs(origin: GeoPoint, legs: Sequence[tuple[float, float]]) -> list[GeoPoint]:
    """Build a route polyline from (bearing_deg, length_m) legs."""
    points = [origin]
    for bearing, length in legs:
        points.append(destination_point(points[-1], bearing, length))
    return points


def route_point(route: Sequence[GeoPoint], s: float) -> GeoPoint:
    """The point at arc length s along a route polyline."""
    geom = _RouteGeometry(route)
    e, n = geom.position_at(np.array([s]))[0]
    return from_local_enu(geom.origin, float(e), float(n))
