import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plancraft import metrics as mt
from plancraft.episode import EpisodeLog, StepRecord
from plancraft.world import EgoState, InfractionEvent, InfractionKind

K = InfractionKind


def make_log(route_length=100.0, coverage=1.0, completed=None, infractions=(),
             n_steps=40):
    route = np.array([[0.0, 0.0], [route_length, 0.0]])
    steps = []
    for i in range(n_steps):
        x = coverage * route_length * (i + 1) / n_steps
        steps.append(StepRecord(time=0.05 * (i + 1), ego=EgoState(x, 0.0, 0.0, 5.0),
                                scene=None, plan=None, control=(0.0, 0.0),
                                scenario_active=False))
    completed = coverage >= 1.0 if completed is None else completed
    return EpisodeLog(
        template_kind="test", seed=0, route=route, route_length=route_length,
        steps=steps, infractions=list(infractions),
        distance_completed=coverage * route_length, completed=completed,
        termination="route_end" if completed else "time_limit")


class TestRouteCompletion:
    def test_full_traversal(self):
        assert mt.route_completion(make_log(coverage=1.0)) == 1.0

    def test_half_traversal(self):
        rc = mt.route_completion(make_log(coverage=0.5))
        assert rc == pytest.approx(0.5, abs=1e-3)

    def test_zero_length_route(self):
        log = make_log(route_length=100.0, coverage=0.0)
        log.route_length = 0.0
        assert mt.route_completion(log) == 1.0

    def test_deviation_caps_rc(self):
        event = InfractionEvent(K.ROUTE_DEVIATION, 1.0, 30.0, 9.0)
        log = make_log(coverage=0.8, completed=False, infractions=[event])
        assert mt.route_completion(log) == pytest.approx(0.3, abs=1e-3)


class TestScores:
    def test_no_infractions(self):
        counts = {k: 0 for k in K}
        assert mt.infraction_score(counts) == 1.0
        assert mt.driving_score(0.77, 1.0) == pytest.approx(0.77)

    def test_single_vehicle_collision(self):
        counts = {K.COLLISION_VEHICLE: 1}
        assert mt.driving_score(0.5, mt.infraction_score(counts)) == pytest.approx(0.30)

    def test_two_red_lights(self):
        counts = {K.RED_LIGHT: 2}
        assert mt.infraction_score(counts) == pytest.approx(0.49)

    def test_order_independence(self):
        a = {K.RED_LIGHT: 2, K.COLLISION_STATIC: 1, K.STOP_SIGN: 3}
        b = {K.STOP_SIGN: 3, K.RED_LIGHT: 2, K.COLLISION_STATIC: 1}
        assert mt.infraction_score(a) == mt.infraction_score(b)

    def test_penalty_validation(self):
        with pytest.raises(ValueError):
            mt.infraction_score({K.RED_LIGHT: 1}, {K.RED_LIGHT: 0.0})
        with pytest.raises(ValueError):
            mt.infraction_score({K.RED_LIGHT: 1}, {K.RED_LIGHT: 1.5})


class TestNDS:
    def test_no_infractions_equals_rc(self):
        assert mt.normalized_driving_score(0.8, {}, 2.0) == pytest.approx(0.8)

    def test_closed_form_example(self):
        counts = {K.COLLISION_VEHICLE: 1}
        nds = mt.normalized_driving_score(1.0, counts, 2.0)
        assert nds == pytest.approx(0.6 ** 0.5, abs=1e-12)

    def test_zero_distance_falls_back_to_rc(self):
        assert mt.normalized_driving_score(0.4, {K.RED_LIGHT: 5}, 0.0) == 0.4

    @given(rc=st.floats(0.01, 1.0), km=st.floats(0.05, 50.0),
           n=st.integers(0, 20), scale=st.integers(2, 5))
    @settings(max_examples=200, deadline=None)
    def test_rate_invariance(self, rc, km, n, scale):
        counts = {K.COLLISION_VEHICLE: n}
        a = mt.normalized_driving_score(rc, counts, km)
        b = mt.normalized_driving_score(rc, {K.COLLISION_VEHICLE: n * scale},
                                        km * scale)
        assert a == pytest.approx(b, rel=1e-9)

    @given(rc1=st.floats(0.01, 0.99), d=st.floats(0.01, 1.0),
           rate=st.floats(0.0, 10.0), route_km=st.floats(0.1, 20.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_rc_at_fixed_rate(self, rc1, d, rate, route_km):
        rc2 = min(1.0, rc1 + d)
        km1, km2 = rc1 * route_km, rc2 * route_km
        # counts proportional to distance: constant per-km rate
        a = mt.normalized_driving_score(rc1, {K.RED_LIGHT: rate * km1}, km1)
        b = mt.normalized_driving_score(rc2, {K.RED_LIGHT: rate * km2}, km2)
        assert b >= a - 1e-12

    @given(rc=st.floats(0.0, 1.0),
           counts=st.dictionaries(st.sampled_from(list(mt.DEFAULT_PENALTIES)),
                                  st.integers(0, 5), max_size=4))
    @settings(max_examples=200, deadline=None)
    def test_ds_at_most_rc(self, rc, counts):
        ds = mt.driving_score(rc, mt.infraction_score(counts))
        assert ds <= rc + 1e-12
        if sum(counts.values()) == 0:
            assert ds == pytest.approx(rc)


class TestSuccessRate:
    def make_result(self, rc=1.0, counts=None):
        counts = counts or {}
        full = {k: counts.get(k, 0) for k in K}
        return mt.RouteResult(rc=rc, is_=1.0, ds=rc, nds=rc, counts=full,
                              km_driven=0.1)

    def test_all_clean(self):
        results = [self.make_result() for _ in range(4)]
        assert mt.success_rate(results) == 1.0

    def test_one_collision_out_of_five(self):
        results = [self.make_result() for _ in range(4)]
        results.append(self.make_result(counts={K.COLLISION_VEHICLE: 1}))
        assert mt.success_rate(results) == pytest.approx(0.8)

    def test_stop_sign_counts_as_failure(self):
        results = [self.make_result(counts={K.STOP_SIGN: 1})]
        assert mt.success_rate(results) == 0.0

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            mt.success_rate([])


class TestEvaluateEpisode:
    def test_end_to_end(self):
        events = [InfractionEvent(K.RED_LIGHT, 1.0, 10.0, 0.0)]
        log = make_log(coverage=1.0, infractions=events)
        result = mt.evaluate_episode(log)
        assert result.rc == 1.0
        assert result.is_ == pytest.approx(0.7)
        assert result.ds == pytest.approx(result.rc * result.is_, abs=1e-12)
        assert result.counts[K.RED_LIGHT] == 1

    def test_report_shape(self):
        logs = [make_log(coverage=1.0), make_log(coverage=0.5)]
        report = mt.aggregate_report([mt.evaluate_episode(l) for l in logs])
        assert report["n_episodes"] == 2
        assert 0.0 <= report["aggregate"]["ds"]["mean"] <= 1.0
        assert report["success_rate"] == pytest.approx(0.5)
