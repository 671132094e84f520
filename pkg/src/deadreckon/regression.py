"""Self-learning velocity and per-slot distance models.

While GPS is trustworthy, each timeslot yields one training observation
(previous speed, mean forward acceleration, slot duration, GPS-derived slot
distance, end speed). Two small least-squares models are refit continuously
over a sliding window of the most recent observations:

    velocity:  v_end = v_prev + beta * a * dt + mu
    distance:  d     = l1 * v_prev * dt + l2 * 0.5 * a * dt^2
                       + l3 * dt^2 + l4 * dt + eta

The learned slopes absorb accelerometer scale error and integration bias;
the intercepts absorb everything additive. When dt is constant across the
buffer (the normal case: fixed 2 s slots) the dt^2 and dt columns are
linearly dependent with the intercept; they are detected by a pivoted
projection, dropped, and their effect folds into eta. Predictions are
clamped at zero: vehicles in scope do not reverse.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import scipy.linalg

#: Condition-number limit above which the normal equations get a ridge term.
_COND_LIMIT = 1e10
_RIDGE = 1e-8

#: Relative residual below which a design column counts as collinear.
_COLLINEAR_TOL = 1e-7

_DISTANCE_COLUMNS = ("v_dt", "half_a_dt2", "intercept", "dt2", "dt")


class InsufficientDataError(ValueError):
    """Fewer observations than the fit requires."""


class DegenerateDesignError(ValueError):
    """The regressor has no usable spread."""


@dataclass(frozen=True)
class SlotObservation:
    """One good-GPS timeslot, ready for training.

    v_prev/v_end are GPS speeds at the slot boundaries (m/s), a_mean the mean
    forward earth-frame acceleration over the slot (m/s2), dt the slot
    duration (s), g_dist the GPS-derived distance covered (m).
    """

    v_prev: float
    a_mean: float
    dt: float
    g_dist: float
    v_end: float

    def __post_init__(self):
        vals = (self.v_prev, self.a_mean, self.dt, self.g_dist, self.v_end)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite observation: {self}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if self.g_dist < 0.0 or self.v_prev < 0.0 or self.v_end < 0.0:
            raise ValueError(f"negative distance or speed: {self}")


class TrainingBuffer:
    """FIFO ring of the most recent slot observations."""

    def __init__(self, capacity: int, observations: Iterable[SlotObservation] = ()):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity!r}")
        self.capacity = capacity
        self._ring: deque[SlotObservation] = deque(observations, maxlen=capacity)

    def push(self, obs: SlotObservation) -> None:
        """Append an observation, evicting the oldest when full."""
        self._ring.append(obs)

    def __len__(self) -> int:
        return len(self._ring)

    def __iter__(self):
        return iter(self._ring)

    @property
    def observations(self) -> list[SlotObservation]:
        return list(self._ring)


@dataclass(frozen=True)
class VelocityModel:
    """v_end = v_prev + beta * a * dt + mu, clamped at zero."""

    beta: float
    mu: float

    def predict(self, v_prev: float, a_mean: float, dt: float) -> float:
        return max(0.0, v_prev + self.beta * a_mean * dt + self.mu)


@dataclass(frozen=True)
class DistanceModel:
    """Per-slot distance regression; folded lists columns absorbed into eta."""

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    eta: float
    residual_std: float = 0.0
    folded: tuple[str, ...] = ()

    def predict(self, v_prev: float, a_mean: float, dt: float) -> float:
        d = (
            self.lambda1 * v_prev * dt
            + self.lambda2 * 0.5 * a_mean * dt * dt
            + self.lambda3 * dt * dt
            + self.lambda4 * dt
            + self.eta
        )
        return max(0.0, d)


#: Raw-kinematics stand-ins used before the first successful fit.
FALLBACK_VELOCITY = VelocityModel(beta=1.0, mu=0.0)
FALLBACK_DISTANCE = DistanceModel(lambda1=1.0, lambda2=1.0, lambda3=0.0, lambda4=0.0, eta=0.0)


def fit_velocity(buf: TrainingBuffer, min_obs: int = 10) -> VelocityModel:
    """Least squares of (v_end - v_prev) on a*dt with intercept."""
    obs = buf.observations
    if len(obs) < min_obs:
        raise InsufficientDataError(f"{len(obs)} observations, need {min_obs}")
    x = np.array([o.a_mean * o.dt for o in obs])
    y = np.array([o.v_end - o.v_prev for o in obs])
    if float(np.var(x)) <= 1e-6:
        raise DegenerateDesignError("a*dt has no spread; cannot identify beta")
    coef = _solve_ols(np.column_stack([x, np.ones_like(x)]), y)
    return VelocityModel(beta=float(coef[0]), mu=float(coef[1]))


def fit_distance(buf: TrainingBuffer, min_obs: int = 10) -> DistanceModel:
    """Least squares of g_dist on [v*dt, a*dt^2/2, dt^2, dt, 1].

    Collinear columns (always dt^2 and dt when dt is constant) are dropped
    and reported in the model's folded field; their effect lands in eta.
    """
    obs = buf.observations
    if len(obs) < min_obs:
        raise InsufficientDataError(f"{len(obs)} observations, need {min_obs}")
    v = np.array([o.v_prev for o in obs])
    a = np.array([o.a_mean for o in obs])
    dt = np.array([o.dt for o in obs])
    y = np.array([o.g_dist for o in obs])
    # Columns ordered by priority: physics terms and the intercept survive,
    # redundant time polynomials get folded.
    columns = {
        "v_dt": v * dt,
        "half_a_dt2": 0.5 * a * dt * dt,
        "intercept": np.ones_like(dt),
        "dt2": dt * dt,
        "dt": dt,
    }
    kept = _select_independent(columns)
    if not any(name in kept for name in ("v_dt", "half_a_dt2")):
        raise DegenerateDesignError("no usable spread in v*dt or a*dt^2")
    X = np.column_stack([columns[name] for name in kept])
    coef = dict(zip(kept, _solve_ols(X, y)))
    residuals = y - X @ np.array([coef[name] for name in kept])
    dof = max(1, len(obs) - len(kept))
    return DistanceModel(
        lambda1=float(coef.get("v_dt", 0.0)),
        lambda2=float(coef.get("half_a_dt2", 0.0)),
        lambda3=float(coef.get("dt2", 0.0)),
        lambda4=float(coef.get("dt", 0.0)),
        eta=float(coef.get("intercept", 0.0)),
        residual_std=float(np.sqrt(np.sum(residuals**2) / dof)),
        folded=tuple(name for name in _DISTANCE_COLUMNS if name not in kept),
    )


def _select_independent(columns: dict[str, np.ndarray]) -> list[str]:
    """Greedy pivoted selection: keep each column whose residual after
    projecting on the already-kept ones is non-negligible."""
    kept: list[str] = []
    basis: list[np.ndarray] = []
    for name, col in columns.items():
        norm = float(np.linalg.norm(col))
        if norm == 0.0:
            continue
        residual = col.astype(float)
        for b in basis:
            residual = residual - np.dot(residual, b) * b
        if float(np.linalg.norm(residual)) > _COLLINEAR_TOL * norm:
            kept.append(name)
            basis.append(residual / np.linalg.norm(residual))
    return kept


def _solve_ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normal-equation solve with a ridge fallback for poor conditioning."""
    XtX = X.T @ X
    Xty = X.T @ y
    if np.linalg.cond(XtX) > _COND_LIMIT:
        XtX = XtX + _RIDGE * np.eye(XtX.shape[0])
    return scipy.linalg.solve(XtX, Xty, assume_a="pos")


def save_models(path, velocity: VelocityModel, distance: DistanceModel) -> None:
    """Persist both models as one JSON object."""
    payload = {
        "beta": velocity.beta,
        "mu": velocity.mu,
        "lambda": [distance.lambda1, distance.lambda2, distance.lambda3, distance.lambda4],
        "eta": distance.eta,
        "residual_std": distance.residual_std,
        "folded_columns": list(distance.folded),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_models(path) -> tuple[VelocityModel, DistanceModel]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    lam = payload["lambda"]
    return (
        VelocityModel(beta=float(payload["beta"]), mu=float(payload["mu"])),
        DistanceModel(
            lambda1=float(lam[0]),
            lambda2=float(lam[1]),
            lambda3=float(lam[2]),
            lambda4=float(lam[3]),
            eta=float(payload["eta"]),
            residual_std=float(payload.get("residual_std", 0.0)),
            folded=tuple(payload.get("folded_columns", ())),
        ),
    )
