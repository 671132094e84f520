"""Heading estimation and earth-frame linear acceleration from body-frame IMU.

The heading filter integrates the gyro about the gravity axis and nudges the
result toward the magnetometer heading with a small blend factor k each
sample, so gyro bias cannot accumulate while magnetometer noise is strongly
smoothed.  Gravity is tracked with an exponential low-pass.  Heading is
degrees clockwise from north: 0 north, 90 east, 180 south, 270 west; a
positive gravity-axis gyro rate turns the heading clockwise.

The phone is assumed mounted with x along vehicle travel, y left, z up; an
optional forward-axis vector supports yawed mounts (see
estimate_forward_axis for a static calibration from the first strong
acceleration event, which assumes the vehicle's first hard maneuver is a
speed-up along its own axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geo import signed_delta_deg, wrap_deg
from .trace import ImuSample

#: Plausible low-passed gravity magnitude once warm-up has completed, m/s2.
GRAVITY_BAND = (8.5, 11.0)

_X_AXIS = np.array([1.0, 0.0, 0.0])


class WarmupError(RuntimeError):
    """The gravity estimate is not yet inside the plausible band."""


class FrameAccel(NamedTuple):
    """Linear acceleration resolved in the vehicle frame, m/s2."""

    forward: float
    lateral: float
    vertical: float


@dataclass(frozen=True)
class HeadingState:
    """Filter state: heading (deg, [0,360)), low-passed body gravity, last t."""

    heading: float
    gravity_est: np.ndarray
    t_last: float

    @property
    def warmed_up(self) -> bool:
        g = float(np.linalg.norm(self.gravity_est))
        return GRAVITY_BAND[0] <= g <= GRAVITY_BAND[1]


def initial_state(sample: ImuSample, heading_deg: float | None = None,
                  declination_deg: float = 0.0,
                  forward_axis: np.ndarray | None = None) -> HeadingState:
    """Seed the filter from the first sample; heading from the magnetometer
    unless given explicitly."""
    gravity = sample.accel.astype(float).copy()
    if heading_deg is None:
        heading_deg = mag_heading_deg(sample.mag, gravity, declination_deg, forward_axis)
    return HeadingState(heading=wrap_deg(heading_deg), gravity_est=gravity, t_last=sample.t)


def mag_heading_deg(mag: np.ndarray, gravity: np.ndarray,
                    declination_deg: float = 0.0,
                    forward_axis: np.ndarray | None = None) -> float:
    """Tilt-compensated magnetometer heading, degrees clockwise from north."""
    g_hat = _unit(gravity)
    fwd = _horizontal_unit(_X_AXIS if forward_axis is None else forward_axis, g_hat)
    left = np.cross(g_hat, fwd)
    m_h = mag - np.dot(mag, g_hat) * g_hat
    return wrap_deg(math.degrees(math.atan2(np.dot(m_h, left), np.dot(m_h, fwd))) + declination_deg)


def update_orientation(state: HeadingState, sample: ImuSample, *,
                       mag_blend_k: float = 0.02,
                       gravity_tau_s: float = 1.0,
                       declination_deg: float = 0.0,
                       forward_axis: np.ndarray | None = None) -> HeadingState:
    """Advance the filter by one sample.

    Heading moves by the gyro rate projected on the gravity axis, then is
    pulled a fraction mag_blend_k of the way toward the magnetometer heading
    (k=0 pure gyro, k=1 pure magnetometer). Timestamps must advance.
    """
    dt = sample.t - state.t_last
    if dt <= 0.0:
        raise ValueError(f"non-monotonic sample time: {sample.t} after {state.t_last}")

    g_hat = _unit(state.gravity_est)
    rate = float(np.dot(sample.gyro, g_hat))
    predicted = state.heading + math.degrees(rate) * dt
    if mag_blend_k > 0.0:
        observed = mag_heading_deg(sample.mag, state.gravity_est, declination_deg, forward_axis)
        predicted += mag_blend_k * signed_delta_deg(observed, predicted)

    alpha = dt / (gravity_tau_s + dt)
    gravity = state.gravity_est + alpha * (sample.accel - state.gravity_est)
    return HeadingState(heading=wrap_deg(predicted), gravity_est=gravity, t_last=sample.t)


def earth_frame_accel(state: HeadingState, sample: ImuSample,
                      forward_axis: np.ndarray | None = None) -> FrameAccel:
    """Split a body-frame accel sample into vehicle forward/lateral/vertical
    with gravity removed. Requires a warmed-up gravity estimate."""
    if not state.warmed_up:
        raise WarmupError(
            f"gravity estimate {np.linalg.norm(state.gravity_est):.2f} m/s2 "
            f"outside plausible band {GRAVITY_BAND}"
        )
    g_hat = _unit(state.gravity_est)
    vertical = float(np.dot(sample.accel, g_hat)) - float(np.linalg.norm(state.gravity_est))
    horizontal = sample.accel - np.dot(sample.accel, g_hat) * g_hat
    fwd = _horizontal_unit(_X_AXIS if forward_axis is None else forward_axis, g_hat)
    left = np.cross(g_hat, fwd)
    return FrameAccel(
        forward=float(np.dot(horizontal, fwd)),
        lateral=float(np.dot(horizontal, left)),
        vertical=vertical,
    )


def smooth_heading(series, window: int) -> list[float]:
    """Circular moving average of a heading series, degrees.

    The window must be odd so the average is centered; it shrinks near the
    ends so the output has the same length as the input.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd count, got {window!r}")
    values = np.asarray(series, dtype=float)
    if window == 1 or len(values) <= 1:
        return [wrap_deg(v) for v in values]
    rad = np.radians(values)
    sin_c = np.concatenate(([0.0], np.cumsum(np.sin(rad))))
    cos_c = np.concatenate(([0.0], np.cumsum(np.cos(rad))))
    half = window // 2
    n = len(values)
    out = []
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        s = sin_c[hi] - sin_c[lo]
        c = cos_c[hi] - cos_c[lo]
        out.append(wrap_deg(math.degrees(math.atan2(s, c))))
    return out


def estimate_forward_axis(samples: list[ImuSample], *,
                          min_accel: float = 0.8,
                          min_duration_s: float = 1.0,
                          gravity_tau_s: float = 1.0) -> np.ndarray:
    """Static mount calibration: the horizontal direction of the first
    sustained acceleration event, taken to be vehicle-forward.

    Assumes the first hard maneuver is a straight-line speed-up. Returns a
    unit 3-vector in body coordinates; raises ValueError if no event with
    horizontal magnitude >= min_accel lasting min_duration_s is found.
    """
    if not samples:
        raise ValueError("no samples")
    gravity = samples[0].accel.astype(float).copy()
    t_last = samples[0].t
    run_start = None
    run_sum = np.zeros(3)
    for s in samples[1:]:
        dt = s.t - t_last
        t_last = s.t
        alpha = dt / (gravity_tau_s + dt)
        gravity = gravity + alpha * (s.accel - gravity)
        g_hat = _unit(gravity)
        horiz = s.accel - np.dot(s.accel, g_hat) * g_hat
        if np.linalg.norm(horiz) >= min_accel:
            if run_start is None:
                run_start = s.t
                run_sum = np.zeros(3)
            run_sum += horiz
            if s.t - run_start >= min_duration_s:
                return _unit(run_sum)
        else:
            run_start = None
    raise ValueError(
        f"no sustained horizontal acceleration >= {min_accel} m/s2 "
        f"for {min_duration_s} s found"
    )


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def _horizontal_unit(axis: np.ndarray, g_hat: np.ndarray) -> np.ndarray:
    h = axis - np.dot(axis, g_hat) * g_hat
    return _unit(h)
