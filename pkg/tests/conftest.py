import numpy as np
import pytest

from fleetloop.conditions import ConditionKey, SpeedBucket, Weather
from fleetloop.predictor import FeatureSnapshot
from fleetloop.watchdog import MeasurementPackage

CLEAR = ConditionKey(Weather.CLEAR, SpeedBucket.HIGHWAY_120)
RAIN = ConditionKey(Weather.RAIN, SpeedBucket.HIGHWAY_120)


def make_features(v_lon=25.0, v_lat=0.0, a_lon=0.0, a_lat=0.0, d_offset=0.0, condition=CLEAR, t=0.0):
    return FeatureSnapshot(v_lon, v_lat, a_lon, a_lat, d_offset, condition, t)


def make_package(vehicle="veh-0", t=0.0, target=None, features=None, pred_delta_d=0.0,
                 actual_d=0.0, pred_d=None, e_x=0.0, version=0, horizon=3.0):
    f = features or make_features(t=t)
    pred_d = pred_delta_d if pred_d is None else pred_d
    return MeasurementPackage(
        vehicle_id=vehicle, target_id=target or vehicle, issued_at=t, features=f,
        pred_delta_s=f.v_lon * horizon, pred_delta_d=pred_delta_d, horizon=horizon,
        pred_s=0.0, pred_d=pred_d, actual_s=0.0, actual_d=actual_d,
        e_x=e_x, e_y=abs(actual_d - pred_d), param_version=version,
    )


def planted_packages(weights, n, rng, condition=RAIN, noise=0.0, horizon=3.0, vehicle="veh-0"):
    """Packages whose desired lateral displacement follows ``weights`` exactly (plus noise)."""
    out = []
    for k in range(n):
        f = make_features(v_lat=rng.normal(0, 0.5), a_lat=rng.normal(0, 0.3),
                          d_offset=rng.normal(0, 1.0), condition=condition, t=float(k))
        x = np.array([1.0, f.v_lat * horizon, 0.5 * f.a_lat * horizon ** 2, f.d_offset])
        desired = float(x @ np.asarray(weights)) + (rng.normal(0, noise) if noise else 0.0)
        pred = f.v_lat * horizon + 0.5 * f.a_lat * horizon ** 2
        out.append(make_package(vehicle=vehicle, t=float(k), features=f, pred_delta_d=pred,
                                actual_d=desired))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
