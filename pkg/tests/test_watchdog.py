import csv

import numpy as np
import pytest

from fleetloop.kinematics import ORIGIN, FrenetPose
from fleetloop.predictor import ParameterSet, basic_parameters, predict
from fleetloop.watchdog import (
    TRIGGER_COLUMNS,
    ContractViolation,
    DuplicatePredictionError,
    EgoMotion,
    Watchdog,
    WatchdogConfig,
    compare,
    package,
    read_trigger_csv,
    write_packages_csv,
)

from .conftest import RAIN, make_features, make_package


def run_self_prediction(tick_rate, v_lon, correct=True, ticks=None, horizon=3.0):
    """Ego predicts itself at constant velocity; returns the longitudinal residuals."""
    cfg = WatchdogConfig(tick_rate=tick_rate, horizon=horizon)
    dog = Watchdog(cfg, "ego")
    dt = cfg.dt
    f = make_features(v_lon=v_lon)
    residuals = []
    n = ticks or int(10 * tick_rate)
    for k in range(n):
        for entry in dog.tick(EgoMotion(v_lon, 0.0, dt)) if k else []:
            s = entry.rel_pred.s if correct else entry.rel_pred.s - v_lon * entry.overshoot
            residuals.append(abs(0.0 - s))
        dog.insert("ego", predict(f, basic_parameters(), cfg.horizon), ORIGIN, f, 0, k * dt)
    return np.array(residuals)


class TestConfig:
    def test_defaults(self):
        cfg = WatchdogConfig()
        assert (cfg.theta_y, cfg.tick_rate, cfg.horizon) == (0.2, 25.0, 3.0)
        assert cfg.dt == pytest.approx(0.04)

    @pytest.mark.parametrize("kw", [{"theta_x": 0}, {"theta_y": -1}, {"tick_rate": 0}, {"insert_every": 0}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            WatchdogConfig(**kw)


class TestDeadReckoning:
    def test_perfect_prediction_has_zero_residual(self):
        res = run_self_prediction(25.0, 25.0)
        assert len(res) > 100
        assert res.max() <= 1e-9

    def test_countdown_and_expiry_order(self):
        cfg = WatchdogConfig(tick_rate=10.0, horizon=0.5)
        dog = Watchdog(cfg, "ego")
        f = make_features()
        dog.insert("ego", predict(f, basic_parameters(), 0.5), ORIGIN, f, 0, 0.0)
        dog.tick(EgoMotion(0.0, 0.0, 0.1))
        dog.insert("ego", predict(f, basic_parameters(), 0.5), ORIGIN, f, 0, 0.1)
        out = []
        for _ in range(6):
            out += [e.issued_at for e in dog.tick(EgoMotion(0.0, 0.0, 0.1))]
        assert out == [0.0, 0.1]
        assert len(dog) == 0

    def test_lateral_dead_reckoning(self):
        # 1/8 s ticks are exact in binary, so expiry lands on the horizon
        cfg = WatchdogConfig(tick_rate=8.0, horizon=1.0)
        dog = Watchdog(cfg, "ego")
        f = make_features(v_lon=0.0, v_lat=0.5)
        dog.insert("ego", predict(f, basic_parameters(), 1.0), ORIGIN, f, 0, 0.0)
        expired = []
        for _ in range(12):
            expired += dog.tick(EgoMotion(0.0, 0.5, 0.125))
        assert len(expired) == 1
        assert expired[0].rel_pred.d == pytest.approx(0.0, abs=1e-12)

    def test_grows_past_capacity(self):
        cfg = WatchdogConfig()
        dog = Watchdog(cfg, "ego", capacity=4)
        f = make_features()
        for k in range(50):
            dog.insert("ego", predict(f, basic_parameters(), 3.0), ORIGIN, f, 0, k * 0.04)
        assert len(dog) == 50
        assert [e.issued_at for e in dog.live()] == [k * 0.04 for k in range(50)]

    def test_duplicate_rejected(self):
        dog = Watchdog(WatchdogConfig())
        f = make_features()
        dog.insert("ego", predict(f, basic_parameters(), 3.0), ORIGIN, f, 0, 1.0)
        with pytest.raises(DuplicatePredictionError):
            dog.insert("ego", predict(f, basic_parameters(), 3.0), ORIGIN, f, 0, 1.0)

    def test_horizon_mismatch_rejected(self):
        dog = Watchdog(WatchdogConfig())
        f = make_features()
        with pytest.raises(ValueError):
            dog.insert("ego", predict(f, basic_parameters(), 2.0), ORIGIN, f, 0, 0.0)


HORIZONS = [3.0, 3.001, 3.005, 3.01, 3.02, 3.03, 3.039]


class TestCvCorrection:
    @pytest.mark.parametrize("horizon", HORIZONS)
    def test_tick_rate_independent(self, horizon):
        a = run_self_prediction(25.0, 25.0, horizon=horizon)
        b = run_self_prediction(100.0, 25.0, horizon=horizon)
        assert a.max() <= 1e-9 and b.max() <= 1e-9

    def test_uncorrected_residual_bounded_by_one_tick_of_travel(self):
        worst = 0.0
        for horizon in HORIZONS:
            raw = run_self_prediction(25.0, 25.0, correct=False, horizon=horizon)
            assert raw.max() <= 25.0 / 25.0 + 1e-9
            worst = max(worst, raw.max())
        # the horizon falling just after a tick leaves almost a full tick of travel
        assert worst > 0.9


class TestCompare:
    def _entry(self, pred_d):
        dog = Watchdog(WatchdogConfig(tick_rate=1.0, horizon=1.0))
        f = make_features(v_lon=0.0)
        p = ParameterSet((pred_d, 0.0, 0.0, 0.0), 1, RAIN)
        dog.insert("ego", predict(f, p, 1.0), ORIGIN, f, 1, 0.0)
        (entry,) = dog.tick(EgoMotion(0.0, 0.0, 1.0))
        return entry

    def test_threshold_is_strict(self):
        cfg = WatchdogConfig(theta_y=0.25)
        assert not compare(self._entry(0.25), ORIGIN, cfg).triggered
        assert compare(self._entry(0.2500001), ORIGIN, cfg).triggered

    def test_longitudinal_trigger(self):
        rep = compare(self._entry(0.0), FrenetPose(1.5, 0.0), WatchdogConfig())
        assert rep.triggered and rep.e_x == pytest.approx(1.5)

    def test_package_contents(self):
        entry = self._entry(0.7)
        pkg = package(compare(entry, FrenetPose(0.0, 0.1), WatchdogConfig()))
        assert pkg.pred_d == pytest.approx(0.7)
        assert pkg.e_y == pytest.approx(0.6)
        assert pkg.signed_lateral_residual == pytest.approx(-0.6)
        assert pkg.param_version == 1 and pkg.horizon == 1.0

    def test_package_requires_trigger(self):
        with pytest.raises(ContractViolation):
            package(compare(self._entry(0.0), ORIGIN, WatchdogConfig()))


class TestTriggerCsv:
    def test_header(self, tmp_path):
        path = tmp_path / "t.csv"
        write_packages_csv(path, [])
        with open(path) as fh:
            assert next(csv.reader(fh)) == TRIGGER_COLUMNS

    def test_round_trip_is_exact(self, tmp_path):
        pkgs = [make_package(t=0.1 * k, pred_delta_d=1 / 3, actual_d=0.9 + k / 7) for k in range(5)]
        pkgs.append(make_package(vehicle="veh-1", target="veh-4", t=2.0, actual_d=0.5))
        path = tmp_path / "t.csv"
        write_packages_csv(path, pkgs)
        rows = read_trigger_csv(path)
        assert [r.key for r in rows] == [p.key for p in pkgs]
        for r, p in zip(rows, pkgs):
            assert (r.pred_d, r.actual_d, r.e_y) == (p.pred_d, p.actual_d, p.e_y)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("timestamp,target_id\n")
        with pytest.raises(KeyError, match="v_lon"):
            read_trigger_csv(path)
