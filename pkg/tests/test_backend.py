import json
import threading

import numpy as np
import pytest

from fleetloop.backend import (
    Backend,
    NotEnoughData,
    ParameterStore,
    SituationDatabase,
    design_matrix,
    evaluate_gate,
    fit_parameters,
    mean_lateral_error,
    release_gate,
    train_cycle,
)
from fleetloop.conditions import BASIC
from fleetloop.predictor import ParameterSet, basic_parameters

from .conftest import CLEAR, RAIN, make_features, make_package, planted_packages

W_STAR = np.array([0.1, 1.2, 0.9, -0.05])


def filled_db(packages, path=None):
    db = SituationDatabase(path)
    for p in packages:
        db.append(p, received_at=0.0)
    return db


def normal_equations(X, y):
    """Independent oracle: solve (X^T X) w = X^T y directly."""
    return np.linalg.solve(X.T @ X, X.T @ y)


class TestFit:
    def test_recovers_planted_weights(self, rng):
        db = filled_db(planted_packages(W_STAR, 200, rng))
        cand = fit_parameters(db, RAIN, 1)
        np.testing.assert_allclose(cand.weights, W_STAR, atol=1e-6)
        assert cand.condition == RAIN and cand.version == 1

    def test_noisy_matches_normal_equations(self, rng):
        db = filled_db(planted_packages(W_STAR, 1000, rng, noise=0.05))
        cand = fit_parameters(db, RAIN, 1)
        X, y = design_matrix(db.records())
        oracle = normal_equations(X, y)
        np.testing.assert_allclose(cand.weights, oracle, atol=1e-8)
        # and within three standard errors of the planted weights
        resid = y - X @ oracle
        sigma2 = resid @ resid / (len(y) - 4)
        se = np.sqrt(np.diag(sigma2 * np.linalg.inv(X.T @ X)))
        assert np.all(np.abs(oracle - W_STAR) < 3 * se)

    def test_intercept_only_design(self):
        pkgs = [make_package(t=float(k), features=make_features(condition=RAIN, t=float(k)), actual_d=0.4)
                for k in range(30)]
        cand = fit_parameters(filled_db(pkgs), RAIN, 1)
        assert cand.weights[0] == pytest.approx(0.4)
        np.testing.assert_allclose(cand.weights[1:], 0.0, atol=1e-12)
        assert cand.metadata["rank_deficient"]

    def test_not_enough_data(self, rng):
        db = filled_db(planted_packages(W_STAR, 19, rng))
        with pytest.raises(NotEnoughData):
            fit_parameters(db, RAIN, 1)
        with pytest.raises(NotEnoughData):
            fit_parameters(db, CLEAR, 1)

    def test_only_own_condition(self, rng):
        pkgs = planted_packages(W_STAR, 100, rng) + planted_packages(
            [0.0, 1.0, 1.0, 0.0], 100, rng, condition=CLEAR, vehicle="veh-9")
        cand = fit_parameters(filled_db(pkgs), RAIN, 1)
        np.testing.assert_allclose(cand.weights, W_STAR, atol=1e-6)

    def test_design_matrix(self):
        f = make_features(v_lat=0.5, a_lat=0.2, d_offset=-1.0, condition=RAIN)
        db = filled_db([make_package(features=f, pred_delta_d=2.0, actual_d=1.5, pred_d=1.0)])
        X, y = design_matrix(db.records())
        np.testing.assert_allclose(X, [[1.0, 1.5, 0.9, -1.0]])
        # desired = model output plus signed residual
        np.testing.assert_allclose(y, [2.5])


class TestGate:
    def test_accepts_improvement_and_installs(self, rng):
        db = filled_db(planted_packages(W_STAR, 100, rng))
        store = ParameterStore()
        report = train_cycle(db, store, RAIN)
        assert report.accepted and report.after["RAIN/HIGHWAY_120"] < report.before["RAIN/HIGHWAY_120"]
        assert store.lookup(RAIN).version == report.candidate.version
        assert store.lookup(CLEAR) == basic_parameters()

    def test_rerun_rejected(self, rng):
        db = filled_db(planted_packages(W_STAR, 100, rng))
        store = ParameterStore()
        first = train_cycle(db, store, RAIN)
        second = train_cycle(db, store, RAIN)
        assert first.accepted and not second.accepted
        assert "strict" in second.reason
        assert store.lookup(RAIN).version == first.candidate.version
        assert [h.accepted for h in store.history] == [True, False]

    def test_regression_in_other_bucket_blocks_basic_candidate(self, rng):
        # CLEAR is served perfectly by the fallback; a fallback fitted to RAIN would hurt it
        clear = planted_packages([0.0, 1.0, 1.0, 0.0], 60, rng, condition=CLEAR, vehicle="veh-c")
        rain = planted_packages([0.5, 2.0, 2.0, 0.3], 200, rng, condition=RAIN)
        db = filled_db(clear + rain)
        store = ParameterStore()
        cand = fit_parameters(db, BASIC, store.next_version())
        report = release_gate(cand, db, store)
        assert not report.accepted and "CLEAR/HIGHWAY_120" in report.reason
        assert store.lookup(CLEAR) == basic_parameters()
        assert store.history[-1].accepted is False

    def test_released_key_shields_from_basic_candidate(self, rng):
        rain = planted_packages(W_STAR, 100, rng)
        db = filled_db(rain)
        store = ParameterStore()
        assert train_cycle(db, store, RAIN).accepted
        cand = ParameterSet((9.0, 9.0, 9.0, 9.0), store.next_version(), BASIC)
        report = evaluate_gate(cand, db.records(), store)
        assert report.affected == ()
        assert not report.accepted

    def test_epsilon_tolerance(self, rng):
        db = filled_db(planted_packages(W_STAR, 100, rng))
        store = ParameterStore()
        good = fit_parameters(db, RAIN, 1)
        base = mean_lateral_error(db.records(), basic_parameters().weights)
        assert mean_lateral_error(db.records(), good.weights) < base


class TestStore:
    def test_fallback(self):
        store = ParameterStore()
        assert store.lookup(RAIN) is basic_parameters()
        assert store.next_version() == 1

    def test_versions_monotonic(self):
        store = ParameterStore()
        store.record(ParameterSet((0, 1, 1, 0), 1, RAIN), False, 0, {}, {})
        with pytest.raises(ValueError):
            store.record(ParameterSet((0, 1, 1, 0), 1, RAIN), True, 0, {}, {})
        assert store.next_version() == 2

    def test_basic_candidate_replaces_default(self):
        store = ParameterStore()
        store.record(ParameterSet((0.1, 1, 1, 0), 1, RAIN), True, 0, {}, {})
        store.record(ParameterSet((0.2, 1, 1, 0), 2, BASIC), True, 0, {}, {})
        assert store.lookup(CLEAR).version == 2
        assert store.lookup(RAIN).version == 1

    def test_persistence(self, tmp_path):
        path = tmp_path / "params.json"
        store = ParameterStore(path)
        store.record(ParameterSet((0.1, 1.1, 0.9, 0.0), 1, RAIN, 5.0), True, 40, {"a": 1.0}, {"a": 0.5})
        store.record(ParameterSet((0.3, 1.1, 0.9, 0.0), 2, CLEAR, 6.0), False, 40, {}, {}, "regresses")
        again = ParameterStore(path)
        assert again.lookup(RAIN) == store.lookup(RAIN)
        assert again.lookup(CLEAR) == basic_parameters()
        assert again.next_version() == 3
        assert [(h.version, h.accepted) for h in again.history] == [(1, True), (2, False)]
        assert not (tmp_path / "params.json.tmp").exists()
        assert json.loads(path.read_text())["next_version"] == 3

    def test_readers_never_see_partial_state(self):
        store = ParameterStore()
        seen = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                p = store.lookup(RAIN)
                seen.append((p.version, p.weights[0]))

        t = threading.Thread(target=reader)
        t.start()
        for v in range(1, 200):
            store.record(ParameterSet((float(v), 1, 1, 0), v, RAIN), True, 0, {}, {})
        stop.set()
        t.join()
        assert all(ver == w for ver, w in seen)


class TestDatabase:
    def test_dedup(self):
        db = SituationDatabase()
        pkg = make_package(t=1.0, actual_d=0.5)
        assert db.append(pkg)[1] is True
        assert db.append(pkg)[1] is False
        assert db.append(make_package(t=1.0, target="veh-3", actual_d=0.5))[1] is True
        assert len(db) == 2

    def test_persistence_and_truncated_tail(self, tmp_path, rng):
        path = tmp_path / "db.jsonl"
        pkgs = planted_packages(W_STAR, 30, rng)
        filled_db(pkgs, path)
        with open(path, "a") as fh:
            fh.write('{"package": {"vehic')
        again = SituationDatabase(path)
        assert len(again) == 30
        assert [r.key for r in again.records()] == [p.key for p in pkgs]

    def test_corrupt_middle_line_raises(self, tmp_path, rng):
        path = tmp_path / "db.jsonl"
        filled_db(planted_packages(W_STAR, 3, rng), path)
        lines = path.read_text().splitlines()
        lines[1] = "garbage"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError):
            SituationDatabase(path)

    def test_concurrent_appends(self):
        db = SituationDatabase()

        def worker(v):
            for k in range(200):
                db.append(make_package(vehicle=f"veh-{v}", t=float(k)))

        threads = [threading.Thread(target=worker, args=(v,)) for v in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(db) == 1600
        assert len({r.key for r in db.records()}) == 1600


class TestBackendDispatch:
    def test_request_returns_basic_on_fresh_store(self):
        assert Backend().request("veh-0", RAIN) == basic_parameters()

    def test_submit_stores(self):
        be = Backend()
        be.submit(make_package())
        assert len(be.db) == 1


class TestStorageDirectories:
    def test_missing_parent_directories_are_created(self, tmp_path):
        db = SituationDatabase(tmp_path / "a" / "db.jsonl")
        store = ParameterStore(tmp_path / "b" / "params.json")
        assert db.path.parent.is_dir() and store.path.parent.is_dir()
