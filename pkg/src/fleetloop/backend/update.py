"""Parameter update module: least-squares refit and the non-regression gate."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..conditions import BASIC, ConditionKey, _Basic
from ..predictor import ParameterSet
from .database import SituationDatabase, SituationRecord, design_matrix
from .store import ParameterStore

log = logging.getLogger(__name__)

MIN_RECORDS = 20
GATE_EPSILON = 1e-6


class NotEnoughData(ValueError):
    pass


def _records_for(db_records: list[SituationRecord], key) -> list[SituationRecord]:
    if key is BASIC:
        return list(db_records)
    return [r for r in db_records if r.condition == key]


def solve_least_squares(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, int]:
    """Minimum-norm least-squares solution via SVD; returns (weights, rank)."""
    w, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    return w, int(rank)


def fit_parameters(
    db: SituationDatabase,
    key: Union[ConditionKey, _Basic],
    version: int,
    min_records: int = MIN_RECORDS,
    released_at: Optional[float] = None,
) -> ParameterSet:
    """Fit lateral weights on the stored records of ``key``.

    ``key=BASIC`` fits on every record and yields a candidate for the
    fleet-wide fallback slot. The candidate is not installed.
    """
    records = _records_for(db.records(), key)
    if len(records) < min_records:
        raise NotEnoughData(f"{key}: {len(records)} records, need {min_records}")
    X, y = design_matrix(records)
    w, rank = solve_least_squares(X, y)
    meta = {"n_records": len(records)}
    if rank < X.shape[1]:
        log.warning("%s: regressor matrix rank %d < %d, using minimum-norm weights", key, rank, X.shape[1])
        meta.update(rank_deficient=True, rank=rank)
    return ParameterSet(
        weights=tuple(float(x) for x in w),
        version=version,
        condition=key,
        released_at=time.time() if released_at is None else released_at,
        metadata=meta,
    )


def mean_lateral_error(records: list[SituationRecord], weights) -> float:
    X, y = design_matrix(records)
    return float(np.mean(np.abs(y - X @ np.asarray(weights, dtype=float))))


@dataclass(frozen=True)
class GateReport:
    candidate: ParameterSet
    before: dict[str, float]
    after: dict[str, float]
    accepted: bool
    n_records: int
    reason: str = ""
    affected: tuple[str, ...] = field(default=())

    def rows(self) -> list[tuple[str, float, float]]:
        return [(k, self.before[k], self.after[k]) for k in self.before]


def _resolves_to_candidate(key: ConditionKey, candidate: ParameterSet, store: ParameterStore) -> bool:
    if candidate.condition is BASIC:
        return key not in store.state.released
    return key == candidate.condition


def evaluate_gate(
    candidate: ParameterSet,
    records: list[SituationRecord],
    store: ParameterStore,
    epsilon: float = GATE_EPSILON,
) -> GateReport:
    """Compute the gate verdict without touching the store."""
    state = store.state
    before, after, affected = {}, {}, []
    own_recs = []
    by_key: dict[ConditionKey, list[SituationRecord]] = {}
    for r in records:
        by_key.setdefault(r.condition, []).append(r)
    for key in sorted(by_key):
        recs = by_key[key]
        current = state.resolve(key)
        err_before = mean_lateral_error(recs, current.weights)
        if _resolves_to_candidate(key, candidate, store):
            err_after = mean_lateral_error(recs, candidate.weights)
            affected.append(str(key))
            own_recs.extend(recs)
        else:
            err_after = err_before
        before[str(key)] = err_before
        after[str(key)] = err_after

    reason = ""
    regressed = [k for k in before if after[k] > before[k] + epsilon]
    if regressed:
        reason = "regresses " + ", ".join(regressed)
    elif not own_recs:
        reason = "no stored records resolve to the candidate"
    else:
        cur = [state.resolve(r.condition).weights for r in own_recs]
        X, y = design_matrix(own_recs)
        own_before = float(np.mean(np.abs(y - np.einsum("ij,ij->i", X, np.asarray(cur)))))
        own_after = mean_lateral_error(own_recs, candidate.weights)
        if not own_after < own_before:
            reason = "no strict improvement on its own bucket"
    return GateReport(candidate, before, after, not reason, len(records), reason, tuple(affected))


def release_gate(
    candidate: ParameterSet,
    db: SituationDatabase,
    store: ParameterStore,
    epsilon: float = GATE_EPSILON,
) -> GateReport:
    """Check non-regression on every known condition and release if it passes.

    Every attempt, accepted or not, is appended to the store history.
    """
    report = evaluate_gate(candidate, db.records(), store, epsilon)
    store.record(candidate, report.accepted, report.n_records, report.before, report.after, report.reason)
    return report


def train_cycle(db: SituationDatabase, store: ParameterStore, key, min_records: int = MIN_RECORDS,
                released_at: Optional[float] = None) -> GateReport:
    """Fit and gate one condition (raises :class:`NotEnoughData`)."""
    candidate = fit_parameters(db, key, store.next_version(), min_records, released_at)
    return release_gate(candidate, db, store)
