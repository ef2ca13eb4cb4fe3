"""Remotely parameterizable motion predictor.

The longitudinal channel is fixed constant-acceleration physics. The lateral
channel is linear in four weights::

    delta_d = w0 + w1 * (v_lat * t_h) + w2 * (0.5 * a_lat * t_h**2) + w3 * d_offset

so the basic weights ``[0, 1, 1, 0]`` reproduce constant-acceleration motion
and a least-squares fit on logged samples is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .conditions import BASIC, ConditionKey, _Basic
from .kinematics import DEFAULT_CAPTURE_DISTANCE, LaneGeometry, VehicleState, to_frenet

BASIC_WEIGHTS = (0.0, 1.0, 1.0, 0.0)


@dataclass(frozen=True, slots=True)
class FeatureSnapshot:
    v_lon: float
    v_lat: float
    a_lon: float
    a_lat: float
    d_offset: float
    condition: ConditionKey
    captured_at: float

    def __post_init__(self):
        for name in ("v_lon", "v_lat", "a_lon", "a_lat", "d_offset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"feature {name} must be finite")


@dataclass(frozen=True)
class ParameterSet:
    weights: tuple[float, float, float, float]
    version: int
    condition: Union[ConditionKey, _Basic] = BASIC
    released_at: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != 4 or not all(math.isfinite(x) for x in w):
            raise ValueError("weights must be four finite numbers")
        object.__setattr__(self, "weights", w)
        if self.version < 0:
            raise ValueError("version must be non-negative")

    @property
    def is_basic(self) -> bool:
        return self.version == 0


@dataclass(frozen=True, slots=True)
class PredictedDisplacement:
    delta_s: float
    delta_d: float
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


_BASIC_SET = ParameterSet(BASIC_WEIGHTS, 0, BASIC, 0.0)


def basic_parameters() -> ParameterSet:
    """Version-0 fallback set: lateral constant-acceleration physics."""
    return _BASIC_SET


def extract_features(
    state: VehicleState,
    lane: LaneGeometry,
    condition: ConditionKey,
    capture_distance: float = DEFAULT_CAPTURE_DISTANCE,
) -> FeatureSnapshot:
    fp = to_frenet(state.pose, lane, capture_distance)
    return FeatureSnapshot(
        v_lon=state.v_lon,
        v_lat=state.v_lat,
        a_lon=state.a_lon,
        a_lat=state.a_lat,
        d_offset=fp.d,
        condition=condition,
        captured_at=state.timestamp,
    )


def lateral_regressors(v_lat, a_lat, d_offset, t_h):
    """Design row(s) ``[1, v_lat*t_h, a_lat*t_h**2/2, d_offset]``.

    Works on scalars or equally-shaped arrays; the last axis holds the four
    regressors.
    """
    v_lat = np.asarray(v_lat, dtype=float)
    ones = np.ones_like(v_lat)
    return np.stack(
        [ones, v_lat * t_h, 0.5 * np.asarray(a_lat, dtype=float) * t_h * t_h,
         np.asarray(d_offset, dtype=float) * ones],
        axis=-1,
    )


def lateral_output(weights, v_lat: float, a_lat: float, d_offset: float, t_h: float) -> float:
    w0, w1, w2, w3 = weights
    return w0 + w1 * (v_lat * t_h) + w2 * (0.5 * a_lat * t_h * t_h) + w3 * d_offset


def predict(f: FeatureSnapshot, p: ParameterSet, t_h: float) -> PredictedDisplacement:
    if not t_h > 0:
        raise ValueError("prediction horizon must be positive")
    delta_s = f.v_lon * t_h + 0.5 * f.a_lon * t_h * t_h
    delta_d = lateral_output(p.weights, f.v_lat, f.a_lat, f.d_offset, t_h)
    return PredictedDisplacement(delta_s, delta_d, t_h)
