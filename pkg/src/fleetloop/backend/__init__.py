from .database import SituationDatabase, SituationRecord, design_matrix, store_measurement
from .server import Backend, BackendClient, BackendServer, parse_endpoint, serve
from .store import HistoryEntry, ParameterStore, lookup_parameters
from .update import (
    GATE_EPSILON,
    MIN_RECORDS,
    GateReport,
    NotEnoughData,
    evaluate_gate,
    fit_parameters,
    mean_lateral_error,
    release_gate,
    train_cycle,
)

__all__ = [
    "Backend", "BackendClient", "BackendServer", "GATE_EPSILON", "GateReport",
    "HistoryEntry", "MIN_RECORDS", "NotEnoughData", "ParameterStore",
    "SituationDatabase", "SituationRecord", "design_matrix", "evaluate_gate",
    "fit_parameters", "lookup_parameters", "mean_lateral_error", "parse_endpoint",
    "release_gate", "serve", "store_measurement", "train_cycle",
]
