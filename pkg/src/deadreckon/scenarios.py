"""Ready-made scenarios used by the demo scripts and the acceptance suite.

Each factory returns a complete ScenarioSpec: a downtown-style grid drive
with stop-and-go lights, turns, and repeated GPS dropouts; a steady highway
run with one long dropout; a stop-free cruise; and a five-light corridor.
Dropout windows are specified in traveled meters and converted to times by
generating the (deterministic) ground truth once.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .geo import GeoPoint
from .simulator import (
    AccelTo,
    DriveTo,
    GpsDropout,
    LaneChangeAt,
    ScenarioSpec,
    SlopeAt,
    StopAt,
    TrafficLight,
    TurnAt,
    generate_ground_truth,
    route_from_legs,
    route_point,
)

_ORIGIN = GeoPoint(41.8781, -87.6298)


def with_dropouts_by_distance(scenario: ScenarioSpec,
                              spans_m: Sequence[tuple[float, float]]) -> ScenarioSpec:
    """Add GPS dropouts covering the given traveled-distance spans."""
    truth = generate_ground_truth(scenario)
    events = list(scenario.events)
    for s0, s1 in spans_m:
        inside = np.flatnonzero((truth.odometer >= s0) & (truth.odometer <= s1))
        if len(inside) == 0:
            raise ValueError(f"no samples inside span ({s0}, {s1}) m")
        events.append(
            GpsDropout(t_start=float(truth.t[inside[0]]), t_end=float(truth.t[inside[-1]]))
        )
    return replace(scenario, events=events)


def downtown_scenario(queue_seed: int = 0,
                      dropout_spans: Sequence[tuple[float, float]] = (
                          (3550.0, 3850.0), (4150.0, 4500.0), (4950.0, 5250.0),
                      )) -> ScenarioSpec:
    """A 6 km grid drive: ~3.5 km of stop-and-go training, then repeated
    sub-400 m GPS dropouts covering two turns and two signalized stops."""
    route = route_from_legs(_ORIGIN, [(0.0, 3600.0), (90.0, 1400.0), (0.0, 1000.0)])
    v1 = route[1]  # north -> east corner
    v2 = route[2]  # east -> north corner
    lights = [
        TrafficLight(route_point(route, 700.0)),
        TrafficLight(route_point(route, 1250.0)),
        TrafficLight(route_point(route, 2100.0)),
        TrafficLight(route_point(route, 2850.0)),
        TrafficLight(route_point(route, 4250.0)),
        TrafficLight(route_point(route, 4600.0), stop=False),
        TrafficLight(route_point(route, 5160.0)),
    ]
    scenario = ScenarioSpec(
        route=route,
        events=[
            AccelTo(speed=11.0, accel=2.0),
            DriveTo(route_point(route, 900.0)),
            AccelTo(speed=13.5, accel=1.2),
            DriveTo(route_point(route, 1700.0)),
            AccelTo(speed=9.5, accel=1.2),
            DriveTo(route_point(route, 2400.0)),
            AccelTo(speed=11.0, accel=1.2),
            TurnAt(location=v1, new_heading=90.0, rate=0.45),
            TurnAt(location=v2, new_heading=0.0, rate=0.45),
        ],
        traffic_lights=lights,
        warmup_s=5.0,
        queue_seed=queue_seed,
    )
    return with_dropouts_by_distance(scenario, dropout_spans)


def highway_scenario(dropout_span: tuple[float, float] = (3600.0, 5600.0)) -> ScenarioSpec:
    """A 7 km steady drive around 100 km/h with mild speed variation for
    training, then one 2 km dropout at constant speed."""
    route = route_from_legs(_ORIGIN, [(0.0, 7000.0)])
    scenario = ScenarioSpec(
        route=route,
        events=[
            AccelTo(speed=27.8, accel=1.5),
            DriveTo(route_point(route, 1500.0)),
            AccelTo(speed=30.5, accel=0.8),
            DriveTo(route_point(route, 2400.0)),
            AccelTo(speed=26.4, accel=0.8),
            DriveTo(route_point(route, 3200.0)),
            AccelTo(speed=27.8, accel=0.8),
        ],
        warmup_s=5.0,
    )
    return with_dropouts_by_distance(scenario, [dropout_span])


def cruise_scenario(length_m: float = 2500.0, speed: float = 12.0) -> ScenarioSpec:
    """A stop-free straight cruise; nothing to detect anywhere."""
    route = route_from_legs(_ORIGIN, [(0.0, length_m)])
    return ScenarioSpec(
        route=route,
        events=[AccelTo(speed=speed, accel=2.0)],
        warmup_s=5.0,
    )


def stoplight_scenario(n_lights: int = 5, queue_seed: int = 0) -> ScenarioSpec:
    """A straight corridor with n signalized stops, every light red."""
    length = 700.0 * (n_lights + 1)
    route = route_from_legs(_ORIGIN, [(0.0, length)])
    lights = [TrafficLight(route_point(route, 700.0 * (i + 1))) for i in range(n_lights)]
    return ScenarioSpec(
        route=route,
        events=[AccelTo(speed=11.0, accel=2.0)],
        traffic_lights=lights,
        warmup_s=5.0,
        queue_seed=queue_seed,
    )


def slope_scenario() -> ScenarioSpec:
    """A straight drive over a bridge and through an underpass."""
    route = route_from_legs(_ORIGIN, [(0.0, 2600.0)])
    return ScenarioSpec(
        route=route,
        events=[
            AccelTo(speed=12.0, accel=2.0),
            SlopeAt(location=route_point(route, 900.0), length_m=96.0,
                    amplitude=0.6, signature="up_down"),
            SlopeAt(location=route_point(route, 1700.0), length_m=96.0,
                    amplitude=0.6, signature="down_up"),
        ],
        warmup_s=5.0,
    )


def lane_change_scenario() -> ScenarioSpec:
    """A straight drive with one overtaking wiggle and one scripted stop."""
    route = route_from_legs(_ORIGIN, [(0.0, 2200.0)])
    return ScenarioSpec(
        route=route,
        events=[
            AccelTo(speed=13.0, accel=2.0),
            LaneChangeAt(location=route_point(route, 800.0), peak_deg=10.0, duration_s=3.0),
            StopAt(location=route_point(route, 1500.0), duration=6.0),
        ],
        warmup_s=5.0,
    )
