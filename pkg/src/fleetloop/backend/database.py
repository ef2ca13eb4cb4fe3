"""Append-only situation database of triggered measurement packages."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..conditions import ConditionKey
from ..predictor import FeatureSnapshot
from ..protocol import package_from_dict, package_to_dict
from ..watchdog import MeasurementPackage

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SituationRecord:
    features: FeatureSnapshot
    desired_delta_d: float
    predicted_delta_d: float
    condition: ConditionKey
    e_x: float
    e_y: float
    received_at: float
    source_vehicle: str
    target_id: str
    issued_at: float
    horizon: float

    @property
    def key(self) -> tuple[str, float, str]:
        return self.source_vehicle, self.issued_at, self.target_id


def record_from_package(pkg: MeasurementPackage, received_at: float) -> SituationRecord:
    # actual lateral displacement = model output corrected by the signed residual
    desired = pkg.pred_delta_d + pkg.signed_lateral_residual
    return SituationRecord(
        features=pkg.features,
        desired_delta_d=desired,
        predicted_delta_d=pkg.pred_delta_d,
        condition=pkg.features.condition,
        e_x=pkg.e_x,
        e_y=pkg.e_y,
        received_at=received_at,
        source_vehicle=pkg.vehicle_id,
        target_id=pkg.target_id,
        issued_at=pkg.issued_at,
        horizon=pkg.horizon,
    )


class SituationDatabase:
    """Thread-safe append-only store, optionally persisted as JSON lines.

    Packages are deduplicated on (vehicle, issued_at, target).
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path is not None else None
        self._records: list[SituationRecord] = []
        self._by_key: dict = {}
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._load()

    def _load(self):
        with open(self.path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                pkg = package_from_dict(row["package"])
            except (ValueError, KeyError, TypeError):
                if lineno >= len(lines) - 1:
                    log.warning("%s: ignoring truncated last line", self.path)
                    continue
                raise
            rec = record_from_package(pkg, float(row["received_at"]))
            if rec.key not in self._by_key:
                self._by_key[rec.key] = rec
                self._records.append(rec)

    def append(self, pkg: MeasurementPackage, received_at: Optional[float] = None) -> tuple[SituationRecord, bool]:
        """Store a package; returns the record and whether it was new."""
        if received_at is None:
            received_at = time.time()
        rec = record_from_package(pkg, received_at)
        with self._lock:
            existing = self._by_key.get(rec.key)
            if existing is not None:
                return existing, False
            if self.path is not None:
                line = json.dumps(
                    {"package": package_to_dict(pkg), "received_at": float(received_at)},
                    sort_keys=True, separators=(",", ":"), allow_nan=False,
                )
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            self._by_key[rec.key] = rec
            self._records.append(rec)
        return rec, True

    def __len__(self) -> int:
        return len(self._records)

    def records(self, limit: Optional[int] = None) -> list[SituationRecord]:
        """Snapshot of the first ``limit`` records (all by default)."""
        with self._lock:
            return list(self._records if limit is None else self._records[:limit])

    def conditions(self, records=None) -> list[ConditionKey]:
        recs = self.records() if records is None else records
        return sorted({r.condition for r in recs})


def store_measurement(db: SituationDatabase, pkg: MeasurementPackage, received_at: Optional[float] = None) -> SituationRecord:
    rec, _ = db.append(pkg, received_at)
    return rec


def design_matrix(records: list[SituationRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Lateral regressors and desired lateral displacement per record."""
    if not records:
        return np.empty((0, 4)), np.empty(0)
    v = np.array([r.features.v_lat for r in records])
    a = np.array([r.features.a_lat for r in records])
    d = np.array([r.features.d_offset for r in records])
    th = np.array([r.horizon for r in records])
    X = np.stack([np.ones_like(v), v * th, 0.5 * a * th * th, d], axis=1)
    y = np.array([r.desired_delta_d for r in records])
    return X, y
