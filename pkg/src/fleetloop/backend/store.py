"""Condition-adaptive parameter storage with a release history."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional

from ..conditions import BASIC, ConditionKey
from ..predictor import ParameterSet, basic_parameters
from ..protocol import params_from_dict, params_to_dict


@dataclass(frozen=True)
class StoreState:
    """Immutable view of what each condition resolves to."""

    default: ParameterSet
    released: Mapping[ConditionKey, ParameterSet]
    next_version: int

    def resolve(self, key) -> ParameterSet:
        if key is BASIC:
            return self.default
        return self.released.get(key, self.default)


@dataclass(frozen=True)
class HistoryEntry:
    version: int
    condition: str
    accepted: bool
    weights: tuple
    released_at: float
    n_records: int
    before: dict = field(default_factory=dict)
    after: dict = field(default_factory=dict)
    reason: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "accepted": self.accepted,
                "after": self.after,
                "before": self.before,
                "condition": self.condition,
                "n_records": self.n_records,
                "reason": self.reason,
                "released_at": self.released_at,
                "version": self.version,
                "weights": list(self.weights),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "HistoryEntry":
        d = json.loads(line)
        return cls(
            version=d["version"], condition=d["condition"], accepted=d["accepted"],
            weights=tuple(d["weights"]), released_at=d["released_at"],
            n_records=d["n_records"], before=d["before"], after=d["after"],
            reason=d.get("reason", ""),
        )


class ParameterStore:
    """Single shared parameter store for the whole fleet.

    Lookups read an immutable :class:`StoreState`; installs build a new state
    and swap the reference, so a reader sees either the old or the new set.
    With a ``path`` the state is persisted as a JSON snapshot and every
    release attempt is appended to ``<path>.history`` (one JSON object per line).
    """

    def __init__(self, path: Optional[str | Path] = None, history_path: Optional[str | Path] = None):
        self.path = Path(path) if path is not None else None
        if history_path is None and self.path is not None:
            history_path = self.path.with_name(self.path.name + ".history")
        self.history_path = Path(history_path) if history_path is not None else None
        self._write_lock = threading.Lock()
        self._history: list[HistoryEntry] = []
        self._state = StoreState(basic_parameters(), MappingProxyType({}), 1)
        for p in (self.path, self.history_path):
            if p is not None:
                p.parent.mkdir(parents=True, exist_ok=True)
        if self.path is not None and self.path.exists():
            self._state = self._load_snapshot(self.path)
        if self.history_path is not None and self.history_path.exists():
            with open(self.history_path, encoding="utf-8") as fh:
                self._history = [HistoryEntry.from_json(line) for line in fh if line.strip()]

    @property
    def state(self) -> StoreState:
        return self._state

    def lookup(self, key) -> ParameterSet:
        return self._state.resolve(key)

    def next_version(self) -> int:
        return self._state.next_version

    @property
    def history(self) -> list[HistoryEntry]:
        return list(self._history)

    def record(self, candidate: ParameterSet, accepted: bool, n_records: int,
               before: dict, after: dict, reason: str = "") -> HistoryEntry:
        """Append a release attempt to the history and install it if accepted."""
        entry = HistoryEntry(
            version=candidate.version,
            condition=str(candidate.condition),
            accepted=accepted,
            weights=candidate.weights,
            released_at=candidate.released_at,
            n_records=n_records,
            before=before,
            after=after,
            reason=reason,
        )
        with self._write_lock:
            old = self._state
            if candidate.version < old.next_version:
                raise ValueError(f"version {candidate.version} already used (next is {old.next_version})")
            nxt = candidate.version + 1
            if accepted:
                released = dict(old.released)
                default = old.default
                if candidate.condition is BASIC:
                    default = candidate
                else:
                    released[candidate.condition] = candidate
                new = StoreState(default, MappingProxyType(released), nxt)
            else:
                new = StoreState(old.default, old.released, nxt)
            if self.path is not None:
                self._write_snapshot(new)
            if self.history_path is not None:
                with open(self.history_path, "a", encoding="utf-8") as fh:
                    fh.write(entry.to_json() + "\n")
            self._history.append(entry)
            self._state = new
        return entry

    def _write_snapshot(self, state: StoreState):
        data = {
            "default": params_to_dict(state.default),
            "next_version": state.next_version,
            "released": {str(k): params_to_dict(v) for k, v in sorted(state.released.items())},
        }
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, sort_keys=True, indent=1)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)

    @staticmethod
    def _load_snapshot(path: Path) -> StoreState:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        released = {ConditionKey.parse(k): params_from_dict(v) for k, v in data["released"].items()}
        return StoreState(params_from_dict(data["default"]), MappingProxyType(released), int(data["next_version"]))


def lookup_parameters(store: ParameterStore, key: ConditionKey) -> ParameterSet:
    """Released set for ``key``, else the fallback (initially the basic set)."""
    return store.lookup(key)
