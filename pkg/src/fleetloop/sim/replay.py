"""Brute-force trigger oracle over a logged run.

Re-derives every prediction from the logged states and parameter weights,
dead-reckons it with the logged ego motion, applies the constant-velocity
correction at expiry and thresholds the residuals. Written independently of
:mod:`fleetloop.watchdog`: it loops over entry age with all issue ticks
vectorized, instead of over time with a live buffer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..watchdog import WatchdogConfig
from .fleet import SimLog


class IncompleteLog(ValueError):
    pass


@dataclass(frozen=True)
class ReplayedSample:
    vehicle_id: str
    target_id: str
    issued_at: float
    pred_s: float
    pred_d: float
    actual_s: float
    actual_d: float
    e_x: float
    e_y: float
    param_version: int

    @property
    def key(self) -> tuple[str, float, str]:
        return self.vehicle_id, self.issued_at, self.target_id


def expiry_age(horizon: float, dt: float) -> int:
    """Number of ticks until a countdown started at ``horizon`` reaches <= 0."""
    tc, n = horizon, 0
    while tc > 0.0:
        tc -= dt
        n += 1
    return n


def _check(log: SimLog):
    tr = log.traj
    n = len(tr.vehicle_ids)
    shape = (tr.n_ticks + 1, n)
    for name in ("s", "d", "v_lon", "v_lat", "a_lon", "a_lat"):
        if getattr(tr, name).shape != shape:
            raise IncompleteLog(f"state array {name} has shape {getattr(tr, name).shape}, expected {shape}")
    for name in ("motion_v_lon", "motion_v_lat"):
        if getattr(tr, name).shape != (tr.n_ticks, n):
            raise IncompleteLog(f"motion array {name} is incomplete")
    if log.param_version.shape != shape:
        raise IncompleteLog("parameter versions missing for some ticks")
    missing = set(np.unique(log.param_version).tolist()) - set(log.param_sets)
    if missing:
        raise IncompleteLog(f"weights unknown for parameter versions {sorted(missing)}")


def replay(log: SimLog, cfg: WatchdogConfig | None = None) -> dict[tuple, ReplayedSample]:
    """Recompute the triggered sample set; keys are (vehicle, issued_at, target)."""
    _check(log)
    cfg = cfg or log.watchdog
    tr = log.traj
    th = cfg.horizon
    dt = 1.0 / cfg.tick_rate
    nt = tr.n_ticks
    age = expiry_age(th, dt)
    tc_final = th
    for _ in range(age):
        tc_final -= dt
    overshoot = -tc_final
    issue = np.arange(0, nt + 1, cfg.insert_every)
    issue = issue[issue + age <= nt]
    out: dict[tuple, ReplayedSample] = {}
    if len(issue) == 0:
        return out

    weights = {v: np.asarray(w, dtype=float) for v, w in log.param_sets.items()}
    n = len(tr.vehicle_ids)
    targets_of = (lambda i: range(n)) if log.scenario.predict_neighbors else (lambda i: (i,))
    for i in range(n):
        ver = log.param_version[issue, i]
        W = np.stack([weights[int(v)] for v in ver])
        for j in targets_of(i):
            v_lon, v_lat = tr.v_lon[issue, j], tr.v_lat[issue, j]
            a_lon, a_lat = tr.a_lon[issue, j], tr.a_lat[issue, j]
            d_off = tr.d[issue, j]
            delta_s = v_lon * th + 0.5 * a_lon * th * th
            delta_d = W[:, 0] + W[:, 1] * (v_lat * th) + W[:, 2] * (0.5 * a_lat * th * th) + W[:, 3] * d_off
            if j == i:
                rel_s = 0.0 + delta_s
                rel_d = 0.0 + delta_d
            else:
                rel_s = (tr.s[issue, j] - tr.s[issue, i]) + delta_s
                rel_d = (tr.d[issue, j] - tr.d[issue, i]) + delta_d
            for step in range(age):
                k = issue + step  # motion over [t_k, t_k+1]
                rel_s = rel_s - tr.motion_v_lon[k, i] * dt
                rel_d = rel_d - tr.motion_v_lat[k, i] * dt
            k_exp = issue + age
            ego_v = tr.motion_v_lon[k_exp - 1, i]
            pred_s = rel_s + ego_v * overshoot
            if j == i:
                act_s = np.zeros_like(pred_s)
                act_d = np.zeros_like(pred_s)
            else:
                act_s = (tr.s[k_exp, j] - tr.s[k_exp, i]) - (tr.motion_v_lon[k_exp - 1, j] - ego_v) * overshoot
                act_d = tr.d[k_exp, j] - tr.d[k_exp, i]
            e_x = np.abs(act_s - pred_s)
            e_y = np.abs(act_d - rel_d)
            hit = (e_x > cfg.theta_x) | (e_y > cfg.theta_y)
            vid, tid = tr.vehicle_ids[i], tr.vehicle_ids[j]
            for m in np.flatnonzero(hit):
                t0 = float(tr.times[issue[m]])
                out[(vid, t0, tid)] = ReplayedSample(
                    vid, tid, t0, float(pred_s[m]), float(rel_d[m]), float(act_s[m]),
                    float(act_d[m]), float(e_x[m]), float(e_y[m]), int(ver[m]),
                )
    return out


@dataclass
class ReplayDiff:
    missing: list  # in oracle, not in live set
    extra: list  # in live set, not in oracle
    mismatched: list  # same key, values differ beyond tolerance

    @property
    def identical(self) -> bool:
        return not (self.missing or self.extra or self.mismatched)


_FIELDS = ("pred_s", "pred_d", "actual_s", "actual_d", "e_x", "e_y")


def diff_packages(live, oracle: dict, tol: float = 1e-9) -> ReplayDiff:
    """Compare live packages (anything with ``key`` and the residual fields) to the oracle."""
    live_by_key = {p.key: p for p in live}
    missing = sorted(set(oracle) - set(live_by_key))
    extra = sorted(set(live_by_key) - set(oracle))
    mismatched = []
    for key in sorted(set(live_by_key) & set(oracle)):
        a, b = live_by_key[key], oracle[key]
        if a.param_version != b.param_version or any(
            abs(getattr(a, f) - getattr(b, f)) > tol for f in _FIELDS
        ):
            mismatched.append(key)
    return ReplayDiff(missing, extra, mismatched)
