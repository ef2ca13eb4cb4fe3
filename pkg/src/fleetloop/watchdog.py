"""Prediction watchdog: buffer predictions until their horizon, then compare.

Buffered predictions live in ego-relative lane coordinates. Every tick the
ego displacement is subtracted from all live entries and their countdown is
reduced by ``dt``. An entry whose countdown reaches zero is corrected for the
tick overshoot with the ego's longitudinal speed and compared with the
observed position; residuals above a threshold produce a measurement package.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .conditions import ConditionKey, SpeedBucket, Weather
from .kinematics import ORIGIN, FrenetPose
from .predictor import FeatureSnapshot, PredictedDisplacement


class DuplicatePredictionError(ValueError):
    pass


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class WatchdogConfig:
    theta_x: float = 1.0
    theta_y: float = 0.2
    horizon: float = 3.0
    tick_rate: float = 25.0
    insert_every: int = 1

    def __post_init__(self):
        if not (self.theta_x > 0 and self.theta_y > 0):
            raise ValueError("thresholds must be positive")
        if not (self.tick_rate > 0 and self.horizon > 0):
            raise ValueError("tick_rate and horizon must be positive")
        if self.insert_every < 1:
            raise ValueError("insert_every must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def to_dict(self) -> dict:
        return {
            "theta_x": self.theta_x,
            "theta_y": self.theta_y,
            "horizon": self.horizon,
            "tick_rate": self.tick_rate,
            "insert_every": self.insert_every,
        }


@dataclass(frozen=True, slots=True)
class EgoMotion:
    v_lon: float
    v_lat: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, slots=True)
class BufferedPrediction:
    vehicle_id: str
    target_id: str
    rel_pred: FrenetPose
    t_c: float
    features: FeatureSnapshot
    param_version: int
    issued_at: float
    prediction: PredictedDisplacement

    @property
    def overshoot(self) -> float:
        """Time elapsed past the exact horizon when the entry expired."""
        return max(0.0, -self.t_c)

    @property
    def key(self) -> tuple[str, float, str]:
        return self.vehicle_id, self.issued_at, self.target_id


@dataclass(frozen=True, slots=True)
class ResidualReport:
    e_x: float
    e_y: float
    triggered: bool
    entry: BufferedPrediction
    actual: FrenetPose


@dataclass(frozen=True, slots=True)
class MeasurementPackage:
    """Training sample shipped to the backend for one triggered expiry."""

    vehicle_id: str
    target_id: str
    issued_at: float
    features: FeatureSnapshot
    pred_delta_s: float
    pred_delta_d: float
    horizon: float
    pred_s: float
    pred_d: float
    actual_s: float
    actual_d: float
    e_x: float
    e_y: float
    param_version: int

    @property
    def condition(self) -> ConditionKey:
        return self.features.condition

    @property
    def signed_lateral_residual(self) -> float:
        return self.actual_d - self.pred_d

    @property
    def key(self) -> tuple[str, float, str]:
        return self.vehicle_id, self.issued_at, self.target_id


def compare(expired: BufferedPrediction, actual_rel: FrenetPose, config: WatchdogConfig) -> ResidualReport:
    """Longitudinal/lateral residuals; triggers on strictly exceeding a threshold."""
    e_x = abs(actual_rel.s - expired.rel_pred.s)
    e_y = abs(actual_rel.d - expired.rel_pred.d)
    triggered = e_x > config.theta_x or e_y > config.theta_y
    return ResidualReport(e_x, e_y, triggered, expired, actual_rel)


def package(report: ResidualReport) -> MeasurementPackage:
    if not report.triggered:
        raise ContractViolation("package() called on a non-triggered report")
    entry = report.entry
    return MeasurementPackage(
        vehicle_id=entry.vehicle_id,
        target_id=entry.target_id,
        issued_at=entry.issued_at,
        features=entry.features,
        pred_delta_s=entry.prediction.delta_s,
        pred_delta_d=entry.prediction.delta_d,
        horizon=entry.prediction.horizon,
        pred_s=entry.rel_pred.s,
        pred_d=entry.rel_pred.d,
        actual_s=report.actual.s,
        actual_d=report.actual.d,
        e_x=report.e_x,
        e_y=report.e_y,
        param_version=entry.param_version,
    )


class Watchdog:
    """Prediction buffer for one vehicle.

    Entries share one horizon and receive identical countdown updates, so
    they expire in insertion order; storage is a FIFO window over
    preallocated arrays.
    """

    def __init__(self, config: WatchdogConfig, vehicle_id: str = "ego", capacity: int = 256):
        self.config = config
        self.vehicle_id = vehicle_id
        self._s = np.empty(capacity)
        self._d = np.empty(capacity)
        self._tc = np.empty(capacity)
        self._meta: list = [None] * capacity
        self._head = 0
        self._tail = 0
        self._live_keys: set = set()

    def __len__(self) -> int:
        return self._tail - self._head

    def _make_room(self):
        n = len(self)
        cap = len(self._s)
        if n * 2 > cap:
            cap *= 2
        h, t = self._head, self._tail
        s, d, tc = np.empty(cap), np.empty(cap), np.empty(cap)
        s[:n], d[:n], tc[:n] = self._s[h:t], self._d[h:t], self._tc[h:t]
        meta = self._meta[h:t] + [None] * (cap - n)
        self._s, self._d, self._tc, self._meta = s, d, tc, meta
        self._head, self._tail = 0, n

    def insert(
        self,
        target_id: str,
        disp: PredictedDisplacement,
        rel_now: FrenetPose,
        features: FeatureSnapshot,
        param_version: int,
        now: float,
    ) -> BufferedPrediction:
        """Memorize a prediction; the countdown starts at the horizon."""
        if not math.isclose(disp.horizon, self.config.horizon, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"prediction horizon {disp.horizon} != configured {self.config.horizon}")
        key = (target_id, now)
        if key in self._live_keys:
            raise DuplicatePredictionError(f"prediction for {target_id!r} at t={now} already buffered")
        if self._tail == len(self._s):
            self._make_room()
        i = self._tail
        self._s[i] = rel_now.s + disp.delta_s
        self._d[i] = rel_now.d + disp.delta_d
        self._tc[i] = self.config.horizon
        self._meta[i] = (target_id, features, param_version, now, disp)
        self._tail += 1
        self._live_keys.add(key)
        return self._entry(i)

    def _entry(self, i: int, s: Optional[float] = None) -> BufferedPrediction:
        target_id, features, version, issued_at, disp = self._meta[i]
        return BufferedPrediction(
            self.vehicle_id,
            target_id,
            FrenetPose(float(self._s[i]) if s is None else s, float(self._d[i])),
            float(self._tc[i]),
            features,
            version,
            issued_at,
            disp,
        )

    def tick(self, ego: EgoMotion) -> list[BufferedPrediction]:
        """Dead-reckon live entries by the ego motion; return expired ones.

        Expired entries get the longitudinal constant-velocity correction
        ``s += v_lon * overshoot`` and leave the buffer.
        """
        h, t = self._head, self._tail
        if h == t:
            return []
        self._s[h:t] -= ego.v_lon * ego.dt
        self._d[h:t] -= ego.v_lat * ego.dt
        self._tc[h:t] -= ego.dt
        expired = []
        tc = self._tc
        while h < t and tc[h] <= 0.0:
            corrected = float(self._s[h]) + ego.v_lon * -float(tc[h])
            entry = self._entry(h, corrected)
            self._live_keys.discard((entry.target_id, entry.issued_at))
            self._meta[h] = None
            expired.append(entry)
            h += 1
        self._head = h
        return expired

    def live(self) -> list[BufferedPrediction]:
        return [self._entry(i) for i in range(self._head, self._tail)]

    def compare(self, expired: BufferedPrediction, actual_rel: FrenetPose = ORIGIN) -> ResidualReport:
        return compare(expired, actual_rel, self.config)


# -- triggered-sample CSV -----------------------------------------------------

TRIGGER_COLUMNS = [
    "timestamp", "target_id", "v_lon", "v_lat", "a_lon", "a_lat", "d_offset",
    "condition_weather", "condition_speed_bucket", "pred_s", "pred_d",
    "actual_s", "actual_d", "e_x", "e_y", "param_version",
]


def _csv_target(pkg: MeasurementPackage) -> str:
    if pkg.target_id == pkg.vehicle_id:
        return pkg.vehicle_id
    return f"{pkg.vehicle_id}/{pkg.target_id}"


def package_row(pkg: MeasurementPackage) -> list:
    f = pkg.features
    return [
        repr(pkg.issued_at), _csv_target(pkg), repr(f.v_lon), repr(f.v_lat),
        repr(f.a_lon), repr(f.a_lat), repr(f.d_offset), f.condition.weather.name,
        f.condition.speed_limit_bucket.name, repr(pkg.pred_s), repr(pkg.pred_d),
        repr(pkg.actual_s), repr(pkg.actual_d), repr(pkg.e_x), repr(pkg.e_y),
        str(pkg.param_version),
    ]


def write_packages_csv(path, packages: Iterable[MeasurementPackage]) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIGGER_COLUMNS)
        for pkg in packages:
            writer.writerow(package_row(pkg))
            n += 1
    return n


@dataclass(frozen=True, slots=True)
class TriggerRow:
    """One row of the triggered-sample CSV."""

    vehicle_id: str
    target_id: str
    timestamp: float
    features: FeatureSnapshot
    pred_s: float
    pred_d: float
    actual_s: float
    actual_d: float
    e_x: float
    e_y: float
    param_version: int

    @property
    def key(self) -> tuple[str, float, str]:
        return self.vehicle_id, self.timestamp, self.target_id


def read_trigger_csv(path) -> list[TriggerRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TRIGGER_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise KeyError(missing[0])
        for r in reader:
            target = r["target_id"]
            vehicle, _, other = target.partition("/")
            cond = ConditionKey(Weather[r["condition_weather"]], SpeedBucket[r["condition_speed_bucket"]])
            ts = float(r["timestamp"])
            feats = FeatureSnapshot(
                float(r["v_lon"]), float(r["v_lat"]), float(r["a_lon"]), float(r["a_lat"]),
                float(r["d_offset"]), cond, ts,
            )
            rows.append(TriggerRow(
                vehicle, other or vehicle, ts, feats,
                float(r["pred_s"]), float(r["pred_d"]), float(r["actual_s"]), float(r["actual_d"]),
                float(r["e_x"]), float(r["e_y"]), int(r["param_version"]),
            ))
    return rows
