import math

import pytest
from hypothesis import given, strategies as st

from aebsim.dynamics import (
    BrakeActuator, RoadCondition, VehicleState, actuator_step, effective_decel, step,
    stopping_distance,
)


def test_effective_decel_limits():
    act = BrakeActuator(max_force=13500.0)
    assert effective_decel(9.0, act, 1500.0, RoadCondition(1.0)) == pytest.approx(9.0)
    assert effective_decel(9.0, act, 1800.0, RoadCondition(1.0)) == pytest.approx(7.5)
    assert effective_decel(9.0, act, 1500.0, RoadCondition(0.6)) == pytest.approx(5.886)


def test_road_rejects_nonpositive_friction():
    with pytest.raises(ValueError):
        RoadCondition(0.0)


def test_actuator_first_step_ramp():
    act = BrakeActuator(delay=0.0, jerk_limit=60.0)
    act = actuator_step(act, 9.0, 0.001)
    assert act.current_decel == pytest.approx(0.06)


def test_actuator_dead_time():
    act = BrakeActuator(delay=0.1, jerk_limit=60.0, since_request=0.05)
    act = actuator_step(act, 9.0, 0.001)
    assert act.current_decel == 0.0
    # the dead time counts from the first request
    act = BrakeActuator(delay=0.1, jerk_limit=60.0)
    for _ in range(100):
        act = actuator_step(act, 9.0, 0.001)
    assert act.current_decel == 0.0
    act = actuator_step(act, 9.0, 0.001)
    assert act.current_decel > 0.0


def test_actuator_fixpoint_and_release():
    act = BrakeActuator(delay=0.0, jerk_limit=60.0, current_decel=4.0, since_request=1.0)
    assert actuator_step(act, 4.0, 0.001).current_decel == 4.0
    assert actuator_step(act, 0.0, 0.001).current_decel == pytest.approx(3.94)


def test_ideal_actuator_is_instant():
    act = actuator_step(BrakeActuator.ideal(), 9.0, 0.001)
    assert act.current_decel == 9.0


def test_step_examples():
    s = step(VehicleState(v=10.0), -9.0, 0.001)
    assert s.v == pytest.approx(9.991)
    assert s.x == pytest.approx(0.009991)
    assert s.t == pytest.approx(0.001)

    s = step(VehicleState(x=5.0, v=0.0), -9.0, 0.001)
    assert (s.v, s.x, s.a) == (0.0, 5.0, 0.0)

    s = step(VehicleState(v=13.888889), 0.0, 1.0)
    assert s.x == pytest.approx(13.888889)


def _stop_distance(v, request, dt=0.001, actuator=None):
    act = actuator or BrakeActuator.ideal()
    state = VehicleState(v=v)
    while state.v > 0.0:
        act = actuator_step(act, request, dt)
        state = step(state, -act.current_decel, dt)
    return state.x


@given(st.floats(1.0, 40.0), st.floats(1.0, 9.5))
def test_stopping_distance_matches_kinematics(v, a):
    dt = 0.001
    assert abs(_stop_distance(v, a, dt) - v * v / (2 * a)) <= v * dt
    assert stopping_distance(v, a) == pytest.approx(v * v / (2 * a))


@given(st.floats(1.0, 40.0), st.floats(1.0, 9.0), st.floats(0.01, 1.0))
def test_larger_request_never_stops_longer(v, a, extra):
    act = BrakeActuator(delay=0.15, jerk_limit=60.0)
    assert _stop_distance(v, a + extra, actuator=act) <= _stop_distance(v, a, actuator=act) + 1e-9


@given(st.lists(st.floats(0.0, 12.0), min_size=1, max_size=400),
       st.floats(0.0, 0.2), st.floats(1.0, 200.0))
def test_ramp_bounded_by_jerk(requests, delay, jerk):
    dt = 0.001
    act = BrakeActuator(delay=delay, jerk_limit=jerk)
    for r in requests:
        nxt = actuator_step(act, r, dt)
        if nxt.since_request is not None and nxt.since_request >= delay - 1e-12:
            assert abs(nxt.current_decel - act.current_decel) <= jerk * dt + 1e-12
        else:
            assert nxt.current_decel == 0.0
        assert 0.0 <= nxt.current_decel <= 15000.0 / 1500.0
        act = nxt


@given(st.floats(0.0, 40.0), st.lists(st.floats(-12.0, 3.0), min_size=1, max_size=300))
def test_speed_never_negative(v, accels):
    s = VehicleState(v=v)
    for a in accels:
        s = step(s, a, 0.001)
        assert s.v >= 0.0
        if s.v == 0.0 and a < 0.0:
            assert s.a <= 0.0
    assert math.isfinite(s.x)
