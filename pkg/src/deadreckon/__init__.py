"""Dead-reckoning localization from smartphone-grade inertial sensors.

The package estimates vehicle position through GPS outages: while fixes are
good it trains small regression models for per-slot velocity and distance
over a sliding window, and when fixes degrade it integrates those
predictions along the inertially estimated heading, correcting with
variance-based stop detection and inertial landmark patterns matched
against a database. A scenario simulator generates ground truth plus noisy
sensor traces and serves as the verification oracle.
"""

from .config import EstimatorConfig, GlobalConfig, default_config, load_config
from .estimator import EstimatedPose, Estimator, PoseMode, gate_gps
from .geo import GeoPoint, geodesic_distance, to_local_enu, from_local_enu
from .landmarks import (
    DetectedPattern,
    LandmarkFingerprint,
    PatternKind,
    QueueProfile,
    match_landmark,
    queue_correction,
)
from .motion import MotionState, MotionWindow, classify_motion, zero_velocity_update
from .orientation import HeadingState, earth_frame_accel, smooth_heading, update_orientation
from .regression import (
    DistanceModel,
    SlotObservation,
    TrainingBuffer,
    VelocityModel,
    fit_distance,
    fit_velocity,
)
from .simulator import (
    GroundTruth,
    NoiseSpec,
    ScenarioSpec,
    emit,
    generate_ground_truth,
    synthesize_gps,
    synthesize_imu,
)
from .trace import GpsFix, ImuSample, TimeSlot, Trace, load_trace, partition_slots, save_trace

__version__ = "0.1.0"

__all__ = [
    "DetectedPattern",
    "DistanceModel",
    "EstimatedPose",
    "Estimator",
    "EstimatorConfig",
    "GeoPoint",
    "GlobalConfig",
    "GpsFix",
    "GroundTruth",
    "HeadingState",
    "ImuSample",
    "LandmarkFingerprint",
    "MotionState",
    "MotionWindow",
    "NoiseSpec",
    "PatternKind",
    "PoseMode",
    "QueueProfile",
    "ScenarioSpec",
    "SlotObservation",
    "TimeSlot",
    "Trace",
    "TrainingBuffer",
    "VelocityModel",
    "classify_motion",
    "default_config",
    "earth_frame_accel",
    "emit",
    "fit_distance",
    "fit_velocity",
    "from_local_enu",
    "gate_gps",
    "generate_ground_truth",
    "geodesic_distance",
    "load_config",
    "load_trace",
    "match_landmark",
    "partition_slots",
    "queue_correction",
    "save_trace",
    "smooth_heading",
    "synthesize_gps",
    "synthesize_imu",
    "to_local_enu",
    "update_orientation",
    "zero_velocity_update",
]
