"""Moving/stopped classification from accel and gyro variance windows.

A driving vehicle vibrates; a halted one does not. The variance of the
acceleration magnitude over a short window separates the two by more than an
order of magnitude (around 0.4-0.6 (m/s2)^2 while rolling vs 0.01 when
stopped), and the gyro shows the same contrast. A window classifies Stopped
only when both variances sit below their thresholds, which feeds the
zero-velocity update: integrated speed never sticks at a phantom nonzero
value while the vehicle waits at a light.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class MotionState(str, enum.Enum):
    MOVING = "Moving"
    STOPPED = "Stopped"


@dataclass(frozen=True)
class MotionThresholds:
    """Variance cuts between stopped and moving, per sensor."""

    accel_var: float = 0.1    # (m/s2)^2
    gyro_var: float = 0.005   # (rad/s)^2

    def __post_init__(self):
        if self.accel_var <= 0.0 or self.gyro_var <= 0.0:
            raise ValueError("motion thresholds must be positive")


@dataclass(frozen=True)
class MotionWindow:
    """Variance of |accel| and |gyro| over one time window (>= 0.5 s)."""

    t_start: float
    t_end: float
    var_accel: float
    var_gyro: float

    def __post_init__(self):
        if self.t_end - self.t_start < 0.5:
            raise ValueError(f"window spans {self.t_end - self.t_start:.3f} s, need >= 0.5 s")
        if self.var_accel < 0.0 or self.var_gyro < 0.0:
            raise ValueError("variances must be >= 0")

    @property
    def center(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


def classify_motion(window: MotionWindow, thresholds: MotionThresholds = MotionThresholds()) -> MotionState:
    """Stopped iff both variances fall below their thresholds."""
    if window.var_accel < thresholds.accel_var and window.var_gyro < thresholds.gyro_var:
        return MotionState.STOPPED
    return MotionState.MOVING


def zero_velocity_update(speed: float, state: MotionState) -> float:
    """Clamp an estimated speed to zero while the vehicle is stopped."""
    if speed < 0.0:
        raise ValueError(f"speed must be >= 0, got {speed!r}")
    return 0.0 if state is MotionState.STOPPED else speed


def compute_motion_windows(t: np.ndarray, accel: np.ndarray, gyro: np.ndarray,
                           window_s: float = 1.0, hop_s: float = 0.5) -> list[MotionWindow]:
    """Slide a window over an IMU stream and compute magnitude variances.

    t is (N,), accel and gyro are (N, 3). Windows start at t[0] and advance by
    hop_s; a trailing window shorter than window_s is dropped.
    """
    if window_s < 0.5:
        raise ValueError("window_s must be >= 0.5 s")
    accel_mag = np.linalg.norm(accel, axis=1)
    gyro_mag = np.linalg.norm(gyro, axis=1)
    windows = []
    start = float(t[0])
    t_max = float(t[-1])
    while start + window_s <= t_max + 1e-9:
        lo = int(np.searchsorted(t, start - 1e-9))
        hi = int(np.searchsorted(t, start + window_s + 1e-9))
        if hi - lo >= 2:
            windows.append(
                MotionWindow(
                    t_start=start,
                    t_end=start + window_s,
                    var_accel=float(np.var(accel_mag[lo:hi])),
                    var_gyro=float(np.var(gyro_mag[lo:hi])),
                )
            )
        start += hop_s
    return windows


def states_at(windows: list[MotionWindow], states: list[MotionState], t: np.ndarray) -> list[MotionState]:
    """Assign each query time the state of the window whose center is nearest.

    Times outside all window centers take the nearest edge window's state.
    """
    if len(windows) != len(states) or not windows:
        raise ValueError("windows and states must be equal-length and non-empty")
    centers = np.array([w.center for w in windows])
    idx = np.searchsorted(centers, t)
    out = []
    for q, i in zip(np.asarray(t, dtype=float), idx):
        if i == 0:
            out.append(states[0])
        elif i == len(centers):
            out.append(states[-1])
        else:
            out.append(states[i] if centers[i] - q < q - centers[i - 1] else states[i - 1])
    return out
