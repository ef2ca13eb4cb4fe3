import numpy as np
import pytest

from fleetloop.conditions import BASIC, ConditionKey, all_conditions
from fleetloop.kinematics import VehicleState, WorldPose, polyline
from fleetloop.predictor import (
    ParameterSet,
    basic_parameters,
    extract_features,
    lateral_regressors,
    predict,
)

from .conftest import RAIN, make_features


class TestBasicSet:
    def test_weights_and_version(self):
        p = basic_parameters()
        assert p.weights == (0.0, 1.0, 1.0, 0.0)
        assert p.version == 0 and p.condition is BASIC

    def test_worked_example(self):
        out = predict(make_features(v_lat=0.3, a_lat=0.2), basic_parameters(), 3.0)
        assert out.delta_d == pytest.approx(1.8)

    def test_zero_input(self):
        p = ParameterSet((0.0, 2.0, -3.0, 0.7), 4, RAIN)
        assert predict(make_features(), p, 3.0).delta_d == 0.0

    def test_longitudinal_is_physics(self):
        p = ParameterSet((1.0, 2.0, 3.0, 4.0), 1, RAIN)
        out = predict(make_features(v_lon=25.0, a_lon=-2.0), p, 3.0)
        assert out.delta_s == pytest.approx(25.0 * 3.0 - 9.0)


class TestLateralModel:
    def test_regressors_match_output(self, rng):
        w = np.array([0.1, 1.2, 0.9, -0.05])
        for _ in range(20):
            v, a, d = rng.normal(size=3)
            f = make_features(v_lat=v, a_lat=a, d_offset=d)
            out = predict(f, ParameterSet(tuple(w), 3, RAIN), 3.0)
            assert out.delta_d == pytest.approx(float(lateral_regressors(v, a, d, 3.0) @ w))

    def test_regressors_vectorized(self):
        X = lateral_regressors(np.array([1.0, 2.0]), np.array([0.0, 2.0]), np.array([0.5, -1.0]), 2.0)
        np.testing.assert_allclose(X, [[1.0, 2.0, 0.0, 0.5], [1.0, 4.0, 4.0, -1.0]])

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError):
            predict(make_features(), basic_parameters(), 0.0)


class TestParameterSet:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ParameterSet((0.0, float("nan"), 1.0, 0.0), 1)
        with pytest.raises(ValueError):
            ParameterSet((0.0, 1.0, 1.0), 1)

    def test_metadata_not_part_of_identity(self):
        a = ParameterSet((0.0, 1.0, 1.0, 0.0), 2, RAIN, 5.0, {"n": 1})
        b = ParameterSet((0.0, 1.0, 1.0, 0.0), 2, RAIN, 5.0, {"n": 2})
        assert a == b


class TestFeatures:
    def test_pass_through(self):
        lane = polyline([(0.0, 0.0), (500.0, 0.0)])
        state = VehicleState("v", WorldPose(50.0, 1.25, 0.0), 20.0, 0.1, -0.5, 0.8, 7.0)
        f = extract_features(state, lane, RAIN)
        assert (f.v_lon, f.v_lat, f.a_lon, f.a_lat) == (20.0, 0.1, -0.5, 0.8)
        assert f.d_offset == pytest.approx(1.25)
        assert f.captured_at == 7.0 and f.condition == RAIN

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            make_features(v_lat=float("inf"))


class TestConditions:
    def test_sixteen_keys(self):
        keys = all_conditions()
        assert len(keys) == 16 and len(set(keys)) == 16

    def test_parse_round_trip(self):
        for key in all_conditions():
            assert ConditionKey.parse(str(key)) == key
            assert ConditionKey.from_dict(key.to_dict()) == key

    def test_parse_rejects_garbage(self):
        with pytest.raises((KeyError, ValueError)):
            ConditionKey.parse("HAIL/HIGHWAY_120")
