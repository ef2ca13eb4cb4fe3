"""Closed-loop fleet run: watchdog, channel and backend driven tick by tick."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from ..conditions import ConditionKey
from ..kinematics import FrenetPose
from ..predictor import FeatureSnapshot, ParameterSet, basic_parameters, predict
from ..watchdog import EgoMotion, MeasurementPackage, Watchdog, WatchdogConfig, compare, package
from .scenario import ChannelConfig, ScenarioConfig, Trajectories, generate_scenario

log = logging.getLogger(__name__)


class BackendUnreachable(RuntimeError):
    pass


class BackendLike(Protocol):
    def submit(self, pkg: MeasurementPackage, received_at: Optional[float] = None) -> None: ...
    def request(self, vehicle_id: str, key: ConditionKey) -> Optional[ParameterSet]: ...


@dataclass(frozen=True)
class RequestRecord:
    sent_at: float
    delivered_at: float
    vehicle_id: str
    condition: ConditionKey
    prefetch: bool
    reply_version: Optional[int]  # None = NOT_FOUND


@dataclass
class ExpiryLog:
    """Every watchdog expiry of a run (triggered or not)."""

    vehicle: list = field(default_factory=list)
    issued_at: list = field(default_factory=list)
    cond_index: list = field(default_factory=list)
    e_x: list = field(default_factory=list)
    e_y: list = field(default_factory=list)
    triggered: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "vehicle": np.asarray(self.vehicle, dtype=int),
            "issued_at": np.asarray(self.issued_at, dtype=float),
            "cond_index": np.asarray(self.cond_index, dtype=int),
            "e_x": np.asarray(self.e_x, dtype=float),
            "e_y": np.asarray(self.e_y, dtype=float),
            "triggered": np.asarray(self.triggered, dtype=bool),
        }


@dataclass
class SimLog:
    scenario: ScenarioConfig
    channel: ChannelConfig
    watchdog: WatchdogConfig
    traj: Trajectories
    param_version: np.ndarray  # (n_ticks + 1, n_vehicles), set used at each insertion
    param_sets: dict  # version -> weights
    packages: list  # MeasurementPackage, emission order
    requests: list  # RequestRecord
    drops: list  # keys of packages dropped from full offline queues
    delivered: int
    expiries: ExpiryLog
    inserted: int = 0
    undelivered: int = 0  # still queued offline when the run ended

    @property
    def vehicle_ids(self) -> list[str]:
        return self.traj.vehicle_ids

    def condition_of(self, key_or_index) -> ConditionKey:
        return self.traj.conditions[key_or_index]

    def condition_summary(self) -> dict[str, dict]:
        """Per condition: expiries, triggers, mean e_x and mean e_y over all expiries."""
        arr = self.expiries.arrays()
        out = {}
        for ci, key in enumerate(self.traj.conditions):
            mask = arr["cond_index"] == ci
            name = str(key)
            prev = out.get(name, {"expiries": 0, "triggers": 0, "sum_e_x": 0.0, "sum_e_y": 0.0})
            prev["expiries"] += int(mask.sum())
            prev["triggers"] += int(arr["triggered"][mask].sum())
            prev["sum_e_x"] += float(arr["e_x"][mask].sum())
            prev["sum_e_y"] += float(arr["e_y"][mask].sum())
            out[name] = prev
        for v in out.values():
            n = v["expiries"]
            v["mean_e_x"] = v.pop("sum_e_x") / n if n else 0.0
            v["mean_e_y"] = v.pop("sum_e_y") / n if n else 0.0
        return out


class _Agent:
    """In-vehicle communication module plus the active parameter set."""

    def __init__(self, vehicle_id: str, channel: ChannelConfig, backend: BackendLike, run: "_Run"):
        self.id = vehicle_id
        self.channel = channel
        self.backend = backend
        self.run = run
        self.cache: dict[ConditionKey, ParameterSet] = {}
        self.active = basic_parameters()
        self.key: Optional[ConditionKey] = None
        self.outbox: deque = deque()
        self.in_flight: deque = deque()  # (deliver_at, kind, payload, sent_at)
        self.wanted: list = []  # (key, prefetch) to request when online
        self.awaiting: set = set()

    def set_condition(self, key: ConditionKey):
        if key == self.key:
            return
        self.key = key
        self.active = self.cache.get(key, basic_parameters())
        if key not in self.cache and key not in self.awaiting and all(k != key for k, _ in self.wanted):
            self.wanted.append((key, False))

    def want_prefetch(self, key: ConditionKey):
        if key not in self.cache and key not in self.awaiting and all(k != key for k, _ in self.wanted):
            self.wanted.append((key, True))

    def emit(self, pkg: MeasurementPackage, t: float, online: bool):
        if online:
            self.in_flight.append((t + self.channel.latency, "m", pkg, t))
            return
        if len(self.outbox) >= self.channel.queue_capacity:
            dropped = self.outbox.popleft()
            self.run.drops.append(dropped.key)
        self.outbox.append(pkg)

    def pump(self, t: float, online: bool):
        if online:
            while self.outbox:
                self.in_flight.append((t + self.channel.latency, "m", self.outbox.popleft(), t))
            for key, prefetch in self.wanted:
                self.in_flight.append((t + self.channel.latency, "r", (key, prefetch), t))
                self.awaiting.add(key)
            self.wanted.clear()
        while self.in_flight and self.in_flight[0][0] <= t + 1e-12:
            deliver_at, kind, payload, sent_at = self.in_flight.popleft()
            self._deliver(kind, payload, deliver_at, sent_at)

    def _deliver(self, kind, payload, at: float, sent_at: float):
        try:
            if kind == "m":
                self.backend.submit(payload, received_at=at)
                self.run.delivered += 1
                return
            key, prefetch = payload
            params = self.backend.request(self.id, key)
        except (OSError, ConnectionError) as exc:
            raise BackendUnreachable(
                f"{self.id}: backend unreachable at t={at:.2f}s outside offline windows: {exc}"
            ) from exc
        self.awaiting.discard(key)
        self.run.requests.append(RequestRecord(sent_at, at, self.id, key, prefetch,
                                               None if params is None else params.version))
        if params is None:
            return  # NOT_FOUND: keep last-known or basic
        self.cache[key] = params
        self.run.param_sets.setdefault(params.version, params.weights)
        if key == self.key:
            self.active = params


class _Run:
    def __init__(self):
        self.drops: list = []
        self.requests: list = []
        self.delivered = 0
        self.param_sets = {0: basic_parameters().weights}


def run_fleet(
    scenario: ScenarioConfig,
    channel: ChannelConfig,
    backend: BackendLike,
    watchdog_cfg: Optional[WatchdogConfig] = None,
    traj: Optional[Trajectories] = None,
) -> SimLog:
    """Simulate every vehicle for the scenario duration.

    Per tick and vehicle: dead-reckon the watchdog with the ego motion of the
    last interval and ship triggered expiries, update the condition and the
    parameter requests, then predict and buffer a new prediction.
    """
    if watchdog_cfg is None:
        watchdog_cfg = WatchdogConfig(tick_rate=scenario.tick_rate)
    if abs(watchdog_cfg.tick_rate - scenario.tick_rate) > 1e-12:
        raise ValueError("watchdog tick_rate must match the scenario tick_rate")
    if traj is None:
        traj = generate_scenario(scenario)
    n, nt = scenario.n_vehicles, traj.n_ticks
    dt = scenario.dt
    th = watchdog_cfg.horizon
    every = watchdog_cfg.insert_every
    run = _Run()
    ids = traj.vehicle_ids
    agents = [_Agent(vid, channel, backend, run) for vid in ids]
    dogs = [Watchdog(watchdog_cfg, vid) for vid in ids]
    versions = np.zeros((nt + 1, n), dtype=np.int64)
    packages: list[MeasurementPackage] = []
    exp = ExpiryLog()
    conditions = traj.conditions
    cond_lookup = {key: i for i, key in enumerate(conditions)}
    sched_starts = [t for t, _ in scenario.schedule]
    neighbors = scenario.predict_neighbors
    inserted = 0

    # plain lists avoid numpy scalar overhead in the hot loop
    S, D = traj.s.tolist(), traj.d.tolist()
    VL, VT = traj.v_lon.tolist(), traj.v_lat.tolist()
    AL, AT = traj.a_lon.tolist(), traj.a_lat.tolist()
    ML, MT = traj.motion_v_lon.tolist(), traj.motion_v_lat.tolist()
    times = traj.times.tolist()
    cidx = traj.cond_index.tolist()
    online_flags = [channel.online(t) for t in times]

    for k in range(nt + 1):
        t = times[k]
        online = online_flags[k]
        key = conditions[cidx[k]]
        nxt = cidx[k] + 1
        next_key = conditions[nxt] if channel.prefetch and nxt < len(sched_starts) else None
        for i in range(n):
            agent, dog = agents[i], dogs[i]
            if k > 0:
                ml = ML[k - 1][i]
                expired = dog.tick(EgoMotion(ml, MT[k - 1][i], dt))
                for entry in expired:
                    if entry.target_id == entry.vehicle_id:
                        actual = FrenetPose(0.0, 0.0)
                    else:
                        j = int(entry.target_id.rsplit("-", 1)[1])
                        overshoot = entry.overshoot
                        actual = FrenetPose(
                            S[k][j] - S[k][i] - (ML[k - 1][j] - ml) * overshoot,
                            D[k][j] - D[k][i],
                        )
                    rep = compare(entry, actual, watchdog_cfg)
                    exp.vehicle.append(i)
                    exp.issued_at.append(entry.issued_at)
                    exp.cond_index.append(cond_lookup[entry.features.condition])
                    exp.e_x.append(rep.e_x)
                    exp.e_y.append(rep.e_y)
                    exp.triggered.append(rep.triggered)
                    if rep.triggered:
                        pkg = package(rep)
                        packages.append(pkg)
                        agent.emit(pkg, t, online)
            agent.set_condition(key)
            if next_key is not None:
                agent.want_prefetch(next_key)
            agent.pump(t, online)
            params = agent.active
            versions[k, i] = params.version
            if k % every:
                continue
            feats = FeatureSnapshot(VL[k][i], VT[k][i], AL[k][i], AT[k][i], D[k][i], key, t)
            dog.insert(ids[i], predict(feats, params, th), FrenetPose(0.0, 0.0), feats, params.version, t)
            inserted += 1
            if neighbors:
                for j in range(n):
                    if j == i:
                        continue
                    f = FeatureSnapshot(VL[k][j], VT[k][j], AL[k][j], AT[k][j], D[k][j], key, t)
                    rel = FrenetPose(S[k][j] - S[k][i], D[k][j] - D[k][i])
                    dog.insert(ids[j], predict(f, params, th), rel, f, params.version, t)
                    inserted += 1

    # deliver whatever is still in flight or queued once the channel is back
    end = times[-1] if times else 0.0
    for agent in agents:
        if agent.outbox and channel.online(end):
            agent.pump(end, True)
        while agent.in_flight:
            agent.pump(agent.in_flight[-1][0], channel.online(end))
    if hasattr(backend, "sync"):
        backend.sync()
    undelivered = sum(len(a.outbox) for a in agents)

    return SimLog(
        scenario=scenario,
        channel=channel,
        watchdog=watchdog_cfg,
        traj=traj,
        param_version=versions,
        param_sets=dict(run.param_sets),
        packages=packages,
        requests=run.requests,
        drops=run.drops,
        delivered=run.delivered,
        expiries=exp,
        inserted=inserted,
        undelivered=undelivered,
    )
