"""Shared fixtures: cached simulator bundles so expensive scenarios build once."""

from __future__ import annotations

from functools import lru_cache

import pytest

from deadreckon.config import default_config
from deadreckon.simulator import (
    NoiseSpec,
    build_landmark_db,
    generate_ground_truth,
    synthesize_gps,
    synthesize_imu,
)
from deadreckon.trace import Trace
from deadreckon import scenarios


@lru_cache(maxsize=16)
def simulated_bundle(name: str, noise_seed: int = 0, queue_seed: int = 0):
    """(scenario, truth, trace, db) for a canned scenario, cached per session."""
    if name == "downtown":
        scenario = scenarios.downtown_scenario(queue_seed=queue_seed)
    elif name == "highway":
        scenario = scenarios.highway_scenario()
    elif name == "cruise":
        scenario = scenarios.cruise_scenario()
    elif name == "stoplight":
        scenario = scenarios.stoplight_scenario(queue_seed=queue_seed)
    elif name == "slope":
        scenario = scenarios.slope_scenario()
    elif name == "lane_change":
        scenario = scenarios.lane_change_scenario()
    else:
        raise ValueError(name)
    truth = generate_ground_truth(scenario)
    noise = NoiseSpec(seed=noise_seed)
    trace = Trace(imu=synthesize_imu(truth, noise), gps=synthesize_gps(truth, noise))
    db = build_landmark_db(scenario, truth)
    return scenario, truth, trace, db


def truth_columns(truth) -> dict:
    return {
        "t": truth.t,
        "lat": truth.lat,
        "lon": truth.lon,
        "heading_deg": truth.heading_deg,
        "speed_mps": truth.speed,
        "accel_mps2": truth.accel,
    }


@pytest.fixture(scope="session")
def downtown():
    return simulated_bundle("downtown")


@pytest.fixture(scope="session")
def default_estimator_config():
    return default_config().estimator
