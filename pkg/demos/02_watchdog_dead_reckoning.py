"""The prediction watchdog checking an ego vehicle's own predictions.

A perfect constant-velocity prediction leaves no residual. When the horizon
falls between ticks, the expiry happens slightly late; the longitudinal
correction removes that overshoot so the residual no longer depends on the
tick rate.

    python3 demos/02_watchdog_dead_reckoning.py
"""

from fleetloop import ConditionKey, EgoMotion, FeatureSnapshot, SpeedBucket, Watchdog, WatchdogConfig, Weather
from fleetloop import basic_parameters, predict
from fleetloop.kinematics import ORIGIN

CLEAR = ConditionKey(Weather.CLEAR, SpeedBucket.HIGHWAY_120)


def worst_residual(tick_rate, horizon, v=25.0, correct=True):
    cfg = WatchdogConfig(tick_rate=tick_rate, horizon=horizon)
    dog = Watchdog(cfg, "ego")
    f = FeatureSnapshot(v, 0.0, 0.0, 0.0, 0.0, CLEAR, 0.0)
    worst = 0.0
    for k in range(int(10 * tick_rate)):
        if k:
            for e in dog.tick(EgoMotion(v, 0.0, cfg.dt)):
                s = e.rel_pred.s if correct else e.rel_pred.s - v * e.overshoot
                worst = max(worst, abs(s))
        dog.insert("ego", predict(f, basic_parameters(), horizon), ORIGIN, f, 0, k * cfg.dt)
    return worst


# %% Horizon 3 s at 25 Hz: expiry lands exactly on a tick.
print(f"25 Hz, 3.000 s: {worst_residual(25.0, 3.0):.2e} m")

# %% Horizon 3.001 s: the expiry overshoots by almost a whole tick.
for rate in (25.0, 100.0):
    raw = worst_residual(rate, 3.001, correct=False)
    fixed = worst_residual(rate, 3.001)
    print(f"{rate:5.0f} Hz, 3.001 s: uncorrected {raw:.3f} m, corrected {fixed:.2e} m")
