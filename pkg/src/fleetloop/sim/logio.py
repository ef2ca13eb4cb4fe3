"""SimLog export to CSV files and re-import for offline replay.

A log directory holds:

``triggered.csv``
    triggered samples in the watchdog schema
``states.csv``
    one row per vehicle and tick with lane-frame state, the ego motion of the
    preceding interval and the parameter version in use
``messages.csv``
    parameter requests and replies, with the weights of every version seen
``drops.csv``
    packages dropped from full offline queues
``run.json``
    scenario, channel and watchdog configuration plus a summary
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..conditions import ConditionKey
from ..watchdog import WatchdogConfig, write_packages_csv
from .fleet import ExpiryLog, RequestRecord, SimLog
from .scenario import ChannelConfig, ScenarioConfig, Trajectories

STATE_COLUMNS = [
    "timestamp", "vehicle_id", "s", "d", "v_lon", "v_lat", "a_lon", "a_lat",
    "motion_v_lon", "motion_v_lat", "condition", "param_version",
]
MESSAGE_COLUMNS = [
    "sent_at", "delivered_at", "vehicle_id", "kind", "condition", "reply_version",
    "w0", "w1", "w2", "w3",
]
LOG_FILES = ("triggered.csv", "states.csv", "messages.csv", "run.json")


def summary(log: SimLog) -> dict:
    return {
        "n_vehicles": log.scenario.n_vehicles,
        "ticks": log.traj.n_ticks,
        "inserted": log.inserted,
        "triggered": len(log.packages),
        "delivered": log.delivered,
        "dropped": len(log.drops),
        "undelivered": log.undelivered,
        "requests": len(log.requests),
        "conditions": log.condition_summary(),
    }


def write_log(log: SimLog, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_packages_csv(out / "triggered.csv", log.packages)
    tr = log.traj
    with open(out / "states.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATE_COLUMNS)
        names = [str(c) for c in tr.conditions]
        for k in range(tr.n_ticks + 1):
            t = repr(float(tr.times[k]))
            cond = names[tr.cond_index[k]]
            for i, vid in enumerate(tr.vehicle_ids):
                if k:
                    mv = (repr(float(tr.motion_v_lon[k - 1, i])), repr(float(tr.motion_v_lat[k - 1, i])))
                else:
                    mv = ("", "")
                w.writerow([
                    t, vid, repr(float(tr.s[k, i])), repr(float(tr.d[k, i])),
                    repr(float(tr.v_lon[k, i])), repr(float(tr.v_lat[k, i])),
                    repr(float(tr.a_lon[k, i])), repr(float(tr.a_lat[k, i])),
                    *mv, cond, int(log.param_version[k, i]),
                ])
    with open(out / "messages.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MESSAGE_COLUMNS)
        for r in log.requests:
            kind = "prefetch" if r.prefetch else "request"
            if r.reply_version is None:
                w.writerow([repr(r.sent_at), repr(r.delivered_at), r.vehicle_id, kind, str(r.condition),
                            "NOT_FOUND", "", "", "", ""])
            else:
                weights = log.param_sets[r.reply_version]
                w.writerow([repr(r.sent_at), repr(r.delivered_at), r.vehicle_id, kind, str(r.condition),
                            r.reply_version, *map(repr, weights)])
        # versions used without a logged reply (the basic set)
        replied = {r.reply_version for r in log.requests}
        for v, weights in sorted(log.param_sets.items()):
            if v not in replied:
                w.writerow(["", "", "", "known", "", v, *map(repr, weights)])
    with open(out / "drops.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "timestamp", "target_id"])
        for vid, ts, tid in log.drops:
            w.writerow([vid, repr(ts), tid])
    info = summary(log)
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump({
            "scenario": log.scenario.to_dict(),
            "channel": log.channel.to_dict(),
            "watchdog": log.watchdog.to_dict(),
            "summary": info,
        }, fh, indent=2, sort_keys=True)
    return info


def read_log(log_dir) -> SimLog:
    """Rebuild the replayable part of a SimLog (no packages, expiries or requests)."""
    root = Path(log_dir)
    for name in LOG_FILES:
        if not (root / name).exists():
            raise FileNotFoundError(f"{root / name} is missing")
    with open(root / "run.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    scenario = ScenarioConfig.from_dict(meta["scenario"])
    channel = ChannelConfig.from_dict(meta["channel"])
    wd = WatchdogConfig(**meta["watchdog"])

    with open(root / "states.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != STATE_COLUMNS:
            raise ValueError(f"states.csv: expected columns {STATE_COLUMNS}")
        rows = list(reader)
    ids = []
    for r in rows:
        if r["vehicle_id"] in ids:
            break
        ids.append(r["vehicle_id"])
    n = len(ids)
    if n == 0:
        nt = scenario.n_ticks
        empty = np.zeros((nt + 1, 0))
        times = np.arange(nt + 1) / scenario.tick_rate
        cond_names = [str(k) for _, k in scenario.schedule]
        starts = np.array([t for t, _ in scenario.schedule])
        cidx = np.maximum(np.searchsorted(starts, times, side="right") - 1, 0)
        traj = Trajectories(times, cidx, [ConditionKey.parse(c) for c in cond_names], empty, empty,
                            empty, empty, empty, empty, empty[:-1], empty[:-1], empty, [])
        return SimLog(scenario, channel, wd, traj, np.zeros((nt + 1, 0), dtype=np.int64),
                      {0: (0.0, 1.0, 1.0, 0.0)}, [], [], [], 0, ExpiryLog())
    if len(rows) % n:
        raise ValueError("states.csv: ragged vehicle rows")
    nt = len(rows) // n - 1

    def col(name, dtype=float):
        return np.array([r[name] for r in rows], dtype=dtype).reshape(nt + 1, n)

    times = col("timestamp")[:, 0]
    motion = [r for r in rows[n:]]
    mvl = np.array([r["motion_v_lon"] for r in motion], dtype=float).reshape(nt, n)
    mvt = np.array([r["motion_v_lat"] for r in motion], dtype=float).reshape(nt, n)
    cond_names = [rows[k * n]["condition"] for k in range(nt + 1)]
    uniq = list(dict.fromkeys(cond_names))
    conditions = [ConditionKey.parse(c) for c in uniq]
    cidx = np.array([uniq.index(c) for c in cond_names])
    traj = Trajectories(
        times=times, cond_index=cidx, conditions=conditions,
        s=col("s"), d=col("d"), v_lon=col("v_lon"), v_lat=col("v_lat"),
        a_lon=col("a_lon"), a_lat=col("a_lat"), motion_v_lon=mvl, motion_v_lat=mvt,
        cmd_a_lat=np.zeros((nt + 1, n)), vehicle_ids=ids,
    )
    param_sets = {0: (0.0, 1.0, 1.0, 0.0)}
    requests = []
    with open(root / "messages.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            if r["reply_version"] in ("", "NOT_FOUND"):
                continue
            v = int(r["reply_version"])
            param_sets[v] = tuple(float(r[f"w{i}"]) for i in range(4))
            if r["kind"] in ("request", "prefetch"):
                requests.append(RequestRecord(float(r["sent_at"]), float(r["delivered_at"]), r["vehicle_id"],
                                              ConditionKey.parse(r["condition"]), r["kind"] == "prefetch", v))
    return SimLog(
        scenario=scenario, channel=channel, watchdog=wd, traj=traj,
        param_version=col("param_version", np.int64), param_sets=param_sets,
        packages=[], requests=requests, drops=[], delivered=0, expiries=ExpiryLog(),
    )
