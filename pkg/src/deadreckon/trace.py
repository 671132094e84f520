"""Sensor records, their ordered container, trace file I/O, and timeslots.

A trace is the raw material of every run: IMU samples at 1-50 Hz plus GPS
fixes at roughly 0.5 Hz.  Traces live on disk as JSONL, one record per line:

    {"type":"imu","t":0.05,"ax":..,"ay":..,"az":..,"gx":..,"gy":..,"gz":..,
     "mx":..,"my":..,"mz":..}
    {"type":"gps","t":2.0,"lat":..,"lon":..,"acc":4.0,"speed":11.2}

Records of different types may be interleaved in any order, but each type
must be internally ordered by strictly increasing t; the loader merges them.
Estimation proceeds in fixed-duration timeslots matching the GPS cadence
(default 2 s); partition_slots cuts a trace into them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .geo import GeoPoint


class TraceFormatError(ValueError):
    """A trace file line could not be parsed or is missing fields."""


class TraceOrderError(ValueError):
    """Record timestamps are not strictly increasing within a type."""


class EmptyTraceError(ValueError):
    """The trace contains no IMU records."""


@dataclass(frozen=True)
class ImuSample:
    """One inertial sample: body-frame accel (m/s2), gyro (rad/s), mag (uT)."""

    t: float
    accel: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ValueError(f"bad IMU timestamp: {self.t!r}")


@dataclass(frozen=True)
class GpsFix:
    """One GPS fix; accuracy is the receiver-reported error radius, meters."""

    t: float
    lat: float
    lon: float
    accuracy: float
    speed: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ValueError(f"bad GPS timestamp: {self.t!r}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat!r}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon!r}")
        if not (math.isfinite(self.accuracy) and self.accuracy > 0.0):
            raise ValueError(f"accuracy must be > 0, got {self.accuracy!r}")
        if self.speed is not None and self.speed < 0.0:
            raise ValueError(f"speed must be >= 0, got {self.speed!r}")

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


@dataclass(frozen=True)
class Trace:
    """An ordered IMU stream plus an ordered (possibly gappy) GPS stream."""

    imu: list[ImuSample]
    gps: list[GpsFix]

    def __post_init__(self):
        if not self.imu:
            raise EmptyTraceError("trace has no IMU samples")
        if np.any(np.diff(self.imu_t) <= 0.0):
            raise TraceOrderError("IMU timestamps not strictly increasing")
        if len(self.gps) > 1 and np.any(np.diff(self.gps_t) <= 0.0):
            raise TraceOrderError("GPS timestamps not strictly increasing")
        for name, arr in (("accel", self.imu_accel), ("gyro", self.imu_gyro), ("mag", self.imu_mag)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name} values in trace")

    @cached_property
    def imu_t(self) -> np.ndarray:
        return np.array([s.t for s in self.imu])

    @cached_property
    def imu_accel(self) -> np.ndarray:
        return np.array([s.accel for s in self.imu], dtype=float)

    @cached_property
    def imu_gyro(self) -> np.ndarray:
        return np.array([s.gyro for s in self.imu], dtype=float)

    @cached_property
    def imu_mag(self) -> np.ndarray:
        return np.array([s.mag for s in self.imu], dtype=float)

    @cached_property
    def gps_t(self) -> np.ndarray:
        return np.array([f.t for f in self.gps])

    @cached_property
    def imu_rate_hz(self) -> float:
        if len(self.imu) < 2:
            return 0.0
        return 1.0 / float(np.median(np.diff(self.imu_t)))

    def duration_s(self) -> float:
        return self.imu[-1].t - self.imu[0].t


@dataclass(frozen=True)
class TimeSlot:
    """One fixed-duration estimation slot over a half-open IMU index range."""

    index: int
    t_start: float
    t_end: float
    imu_span: tuple[int, int]
    gps_at_end: Optional[GpsFix] = None

    def __post_init__(self):
        if self.imu_span[1] <= self.imu_span[0]:
            raise ValueError(f"empty imu_span in slot {self.index}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def load_trace(path) -> Trace:
    """Read a JSONL trace file. Raises on parse errors (with the line number),
    per-type ordering violations, and traces without IMU records."""
    imu: list[ImuSample] = []
    gps: list[GpsFix] = []
    last_t = {"imu": -math.inf, "gps": -math.inf}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                kind = rec["type"]
                if kind == "imu":
                    sample = ImuSample(
                        t=float(rec["t"]),
                        accel=np.array([rec["ax"], rec["ay"], rec["az"]], dtype=float),
                        gyro=np.array([rec["gx"], rec["gy"], rec["gz"]], dtype=float),
                        mag=np.array([rec["mx"], rec["my"], rec["mz"]], dtype=float),
                    )
                elif kind == "gps":
                    sample = GpsFix(
                        t=float(rec["t"]),
                        lat=float(rec["lat"]),
                        lon=float(rec["lon"]),
                        accuracy=float(rec["acc"]),
                        speed=float(rec["speed"]) if "speed" in rec else None,
                    )
                else:
                    raise TraceFormatError(f"{path}: line {lineno}: unknown record type {kind!r}")
            except TraceFormatError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"{path}: line {lineno}: {exc}") from exc
            if sample.t <= last_t[kind]:
                raise TraceOrderError(
                    f"{path}: line {lineno}: {kind} timestamp {sample.t} not after {last_t[kind]}"
                )
            last_t[kind] = sample.t
            (imu if kind == "imu" else gps).append(sample)
    if not imu:
        raise EmptyTraceError(f"{path}: no IMU records")
    return Trace(imu=imu, gps=gps)


def save_trace(trace: Trace, path) -> None:
    """Write a trace as JSONL, records merged in time order."""
    records = []
    for s in trace.imu:
        records.append((s.t, 0, _imu_record(s)))
    for f in trace.gps:
        records.append((f.t, 1, _gps_record(f)))
    records.sort(key=lambda r: (r[0], r[1]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for _, _, rec in records:
            fh.write(json.dumps(rec) + "\n")


def _imu_record(s: ImuSample) -> dict:
    ax, ay, az = (float(v) for v in s.accel)
    gx, gy, gz = (float(v) for v in s.gyro)
    mx, my, mz = (float(v) for v in s.mag)
    return {
        "type": "imu", "t": float(s.t),
        "ax": ax, "ay": ay, "az": az,
        "gx": gx, "gy": gy, "gz": gz,
        "mx": mx, "my": my, "mz": mz,
    }


def _gps_record(f: GpsFix) -> dict:
    rec = {
        "type": "gps", "t": float(f.t),
        "lat": float(f.lat), "lon": float(f.lon), "acc": float(f.accuracy),
    }
    if f.speed is not None:
        rec["speed"] = float(f.speed)
    return rec


def partition_slots(trace: Trace, slot_s: float) -> list[TimeSlot]:
    """Cut a trace into contiguous fixed-duration slots.

    Every IMU sample lands in exactly one slot. A slot's gps_at_end is the fix
    nearest its end time, if one exists within slot_s/2; otherwise absent.
    """
    if slot_s <= 0.0:
        raise ValueError(f"slot_s must be > 0, got {slot_s!r}")
    t = trace.imu_t
    t0 = float(t[0])
    duration = float(t[-1]) - t0
    n_slots = max(1, math.ceil(duration / slot_s - 1e-9))
    edges = t0 + slot_s * np.arange(1, n_slots)
    bounds = np.concatenate(([0], np.searchsorted(t, edges, side="left"), [len(t)]))

    gps_t = trace.gps_t
    slots = []
    for k in range(n_slots):
        t_start = t0 + k * slot_s
        t_end = t_start + slot_s
        fix = None
        if len(gps_t):
            i = int(np.searchsorted(gps_t, t_end))
            best, best_dt = None, slot_s / 2.0
            for j in (i - 1, i):
                if 0 <= j < len(gps_t) and abs(gps_t[j] - t_end) <= best_dt:
                    best, best_dt = j, abs(gps_t[j] - t_end)
            if best is not None:
                fix = trace.gps[best]
        slots.append(
            TimeSlot(
                index=k,
                t_start=t_start,
                t_end=t_end,
                imu_span=(int(bounds[k]), int(bounds[k + 1])),
                gps_at_end=fix,
            )
        )
    return slots
