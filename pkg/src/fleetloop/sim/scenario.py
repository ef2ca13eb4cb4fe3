"""Scenario configuration and deterministic trajectory generation.

Vehicles drive on one lane centerline and are integrated in lane
coordinates. Each vehicle follows a random maneuver script: lane changes are
sinusoidal lateral-acceleration pulses grouped into overtakes (out, dwell,
back), braking is a decelerate/recover pair. The realized lateral acceleration
is the commanded one scaled by the condition's distortion factor ``kappa``
plus Gaussian noise.

The lateral state a vehicle reports (``v_lat``, ``a_lat``) is its nominal
estimate, the response its motion model expects from the commands. Positions
and the ego motion are the realized ones, so ``kappa`` shows up as a gap
between what the features suggest and where the vehicle actually goes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..conditions import ConditionKey, SpeedBucket, Weather
from ..kinematics import MAX_ACCELERATION

DEFAULT_CONDITION = ConditionKey(Weather.CLEAR, SpeedBucket.HIGHWAY_120)


@dataclass(frozen=True)
class ScenarioConfig:
    n_vehicles: int = 5
    duration: float = 300.0
    tick_rate: float = 25.0
    lane_file: Optional[str] = None
    schedule: tuple = ((0.0, DEFAULT_CONDITION),)
    lane_change_rate: float = 1.0  # events per minute per vehicle
    braking_rate: float = 0.5
    lane_change_duration: float = 14.0
    overtake_dwell: tuple = (4.0, 12.0)  # seconds in the passing lane before returning
    lane_width: float = 3.5
    braking_decel: float = 2.0
    braking_duration: float = 2.0
    kappa: dict = field(default_factory=dict)  # "RAIN" or "RAIN/HIGHWAY_120" -> factor
    sigma_a_lon: float = 0.0
    sigma_a_lat: float = 0.0
    speed_range: tuple = (22.0, 33.0)
    vehicle_spacing: float = 60.0
    predict_neighbors: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.tick_rate <= 0:
            raise ValueError("duration and tick_rate must be positive")
        if self.n_vehicles < 0:
            raise ValueError("n_vehicles must be >= 0")
        sched = tuple((float(t), k if isinstance(k, ConditionKey) else ConditionKey.parse(k))
                      for t, k in self.schedule)
        if not sched:
            raise ValueError("condition schedule is empty")
        starts = [t for t, _ in sched]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("schedule start times must be strictly increasing")
        object.__setattr__(self, "schedule", sched)
        object.__setattr__(self, "speed_range", tuple(self.speed_range))
        object.__setattr__(self, "overtake_dwell", tuple(self.overtake_dwell))

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * self.tick_rate))

    def kappa_for(self, key: ConditionKey) -> float:
        if str(key) in self.kappa:
            return float(self.kappa[str(key)])
        return float(self.kappa.get(key.weather.name, 1.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = [[t, str(k)] for t, k in self.schedule]
        d["speed_range"] = list(self.speed_range)
        d["overtake_dwell"] = list(self.overtake_dwell)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        if "schedule" in data:
            data["schedule"] = tuple((float(t), ConditionKey.parse(k)) for t, k in data["schedule"])
        for name in ("speed_range", "overtake_dwell"):
            if name in data:
                data[name] = tuple(data[name])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ChannelConfig:
    offline_windows: tuple = ()
    latency: float = 0.0
    queue_capacity: int = 10_000
    prefetch: bool = True

    def __post_init__(self):
        windows = tuple(sorted((float(a), float(b)) for a, b in self.offline_windows))
        for a, b in windows:
            if b <= a:
                raise ValueError(f"offline window ({a}, {b}) is empty")
        if any(w2[0] < w1[1] for w1, w2 in zip(windows, windows[1:])):
            raise ValueError("offline windows overlap")
        if self.latency < 0 or self.queue_capacity < 1:
            raise ValueError("latency must be >= 0 and queue_capacity >= 1")
        object.__setattr__(self, "offline_windows", windows)

    def online(self, t: float) -> bool:
        return not any(a <= t < b for a, b in self.offline_windows)

    def to_dict(self) -> dict:
        return {
            "offline_windows": [list(w) for w in self.offline_windows],
            "latency": self.latency,
            "queue_capacity": self.queue_capacity,
            "prefetch": self.prefetch,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelConfig":
        data = dict(data)
        data["offline_windows"] = tuple(tuple(w) for w in data.get("offline_windows", ()))
        return cls(**data)


def load_run_config(path) -> tuple[ScenarioConfig, ChannelConfig, dict]:
    """Read a JSON scenario file.

    Top-level keys are :class:`ScenarioConfig` fields plus optional
    ``"channel"`` (a :class:`ChannelConfig` dict) and ``"watchdog"``.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    channel = ChannelConfig.from_dict(data.pop("channel", {}))
    watchdog = data.pop("watchdog", {})
    return ScenarioConfig.from_dict(data), channel, watchdog


@dataclass
class Trajectories:
    """Lane-frame states at every tick, shape ``(n_ticks + 1, n_vehicles)``.

    ``s``, ``d``, ``v_lon`` and ``a_lon`` are realized. ``v_lat`` and ``a_lat``
    are the reported nominal estimates; ``real_v_lat`` and ``real_a_lat`` hold
    the realized values. ``motion_v_*`` hold the realized mean velocity over
    each tick interval, shape ``(n_ticks, n_vehicles)``; this is the ego motion
    fed to the watchdog.
    """

    times: np.ndarray
    cond_index: np.ndarray
    conditions: list
    s: np.ndarray
    d: np.ndarray
    v_lon: np.ndarray
    v_lat: np.ndarray
    a_lon: np.ndarray
    a_lat: np.ndarray
    motion_v_lon: np.ndarray
    motion_v_lat: np.ndarray
    cmd_a_lat: np.ndarray
    vehicle_ids: list
    real_v_lat: Optional[np.ndarray] = None
    real_a_lat: Optional[np.ndarray] = None

    @property
    def n_ticks(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class Maneuver:
    kind: str  # "lane_change" | "braking"
    start: float
    duration: float
    amplitude: float  # signed peak acceleration


def _event_times(rng, rate_per_min: float, duration: float, event_len: float) -> list[float]:
    if rate_per_min <= 0:
        return []
    times, t = [], 0.0
    mean_gap = 60.0 / rate_per_min
    while True:
        t += rng.exponential(mean_gap)
        if t + event_len > duration:
            return times
        times.append(t)
        t += event_len


def maneuver_script(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Maneuver]:
    script = []
    T = cfg.lane_change_duration
    amp = cfg.lane_width * 2.0 * math.pi / (T * T)
    lo, hi = cfg.overtake_dwell
    # an overtake is a lane change out, a dwell, and a lane change back
    for t0 in _event_times(rng, cfg.lane_change_rate, cfg.duration, 2 * T + hi):
        direction = 1.0 if rng.random() < 0.5 else -1.0
        dwell = rng.uniform(lo, hi)
        script.append(Maneuver("lane_change", t0, T, direction * amp))
        script.append(Maneuver("lane_change", t0 + T + dwell, T, -direction * amp))
    Tb = 2.0 * cfg.braking_duration
    for t0 in _event_times(rng, cfg.braking_rate, cfg.duration, Tb):
        script.append(Maneuver("braking", t0, Tb, -cfg.braking_decel))
    return sorted(script, key=lambda m: m.start)


def commanded_accelerations(script: list[Maneuver], times: np.ndarray,
                            lateral_gain=None) -> tuple[np.ndarray, np.ndarray]:
    """Sample the script at ``times``.

    ``lateral_gain(start)`` scales a whole lane-change pulse; fixing the gain
    per maneuver keeps every pulse velocity-neutral across condition changes.
    """
    a_lon = np.zeros_like(times)
    a_lat = np.zeros_like(times)
    for m in script:
        u = times - m.start
        active = (u >= 0) & (u < m.duration)
        if m.kind == "lane_change":
            gain = 1.0 if lateral_gain is None else lateral_gain(m.start)
            a_lat[active] += gain * m.amplitude * np.sin(2.0 * math.pi * u[active] / m.duration)
        else:
            half = m.duration / 2.0
            a_lon[active & (u < half)] += m.amplitude
            a_lon[active & (u >= half)] -= m.amplitude
    return a_lon, a_lat


def condition_schedule(cfg: ScenarioConfig, times: np.ndarray) -> tuple[np.ndarray, list]:
    starts = np.array([t for t, _ in cfg.schedule])
    keys = [k for _, k in cfg.schedule]
    idx = np.searchsorted(starts, times, side="right") - 1
    return np.maximum(idx, 0), keys


def generate_scenario(cfg: ScenarioConfig) -> Trajectories:
    """Integrate every vehicle's scripted motion; pure function of ``cfg``."""
    n, nt, dt = cfg.n_vehicles, cfg.n_ticks, cfg.dt
    times = np.arange(nt + 1) / cfg.tick_rate
    cond_index, keys = condition_schedule(cfg, times)
    kappas = np.array([cfg.kappa_for(k) for k in keys])
    starts = np.array([t for t, _ in cfg.schedule])

    def kappa_at(t):
        return kappas[max(int(np.searchsorted(starts, t, side="right")) - 1, 0)]

    cmd_lon = np.zeros((nt + 1, n))
    cmd_lat = np.zeros((nt + 1, n))
    dist_lat = np.zeros((nt + 1, n))
    noise_lon = np.zeros((nt + 1, n))
    noise_lat = np.zeros((nt + 1, n))
    v0 = np.zeros(n)
    streams = np.random.SeedSequence(cfg.seed).spawn(n) if n else []
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        v0[i] = rng.uniform(*cfg.speed_range)
        script = maneuver_script(cfg, rng)
        cmd_lon[:, i], cmd_lat[:, i] = commanded_accelerations(script, times)
        dist_lat[:, i] = commanded_accelerations(script, times, kappa_at)[1]
        if cfg.sigma_a_lon > 0:
            noise_lon[:, i] = rng.normal(0.0, cfg.sigma_a_lon, nt + 1)
        if cfg.sigma_a_lat > 0:
            noise_lat[:, i] = rng.normal(0.0, cfg.sigma_a_lat, nt + 1)

    # acceleration applied over [t_k, t_k+1) is evaluated at t_k
    real_lon = np.clip(cmd_lon + noise_lon, -MAX_ACCELERATION, MAX_ACCELERATION)
    real_lat = np.clip(dist_lat + noise_lat, -MAX_ACCELERATION, MAX_ACCELERATION)

    s = np.empty((nt + 1, n))
    d = np.empty((nt + 1, n))
    vl = np.empty((nt + 1, n))
    vt = np.empty((nt + 1, n))
    vn = np.empty((nt + 1, n))
    al = np.zeros((nt + 1, n))
    at = np.zeros((nt + 1, n))
    an = np.zeros((nt + 1, n))
    s[0] = 100.0 + cfg.vehicle_spacing * np.arange(n)
    d[0] = 0.0
    vl[0] = v0
    vt[0] = 0.0
    vn[0] = 0.0
    half_dt2 = 0.5 * dt * dt
    for k in range(nt):
        a1, a2 = real_lon[k], real_lat[k]
        s[k + 1] = s[k] + vl[k] * dt + a1 * half_dt2
        d[k + 1] = d[k] + vt[k] * dt + a2 * half_dt2
        vl[k + 1] = vl[k] + a1 * dt
        vt[k + 1] = vt[k] + a2 * dt
        vn[k + 1] = vn[k] + cmd_lat[k] * dt
        # state at t_k+1 reports the acceleration over the last tick
        al[k + 1] = a1
        at[k + 1] = a2
        an[k + 1] = cmd_lat[k]
    motion_lon = vl[:-1] + 0.5 * al[1:] * dt
    motion_lat = vt[:-1] + 0.5 * at[1:] * dt
    return Trajectories(
        times=times,
        cond_index=cond_index,
        conditions=keys,
        s=s, d=d, v_lon=vl, v_lat=vn, a_lon=al, a_lat=an,
        motion_v_lon=motion_lon,
        motion_v_lat=motion_lat,
        cmd_a_lat=cmd_lat,
        vehicle_ids=[f"veh-{i}" for i in range(n)],
        real_v_lat=vt,
        real_a_lat=at,
    )
