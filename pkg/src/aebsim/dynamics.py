"""Longitudinal point-mass vehicle motion and brake actuator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

G = 9.81


class VehicleState(NamedTuple):
    """Kinematic state along the travel axis.

    ``x`` is the front bumper for the VUT and the rear bumper for the target.
    ``a`` is signed (braking negative).
    """

    t: float = 0.0
    x: float = 0.0
    y: float = 0.0
    v: float = 0.0
    a: float = 0.0


@dataclass(frozen=True)
class RoadCondition:
    friction: float = 1.0
    g: float = G

    def __post_init__(self):
        if not self.friction > 0:
            raise ValueError(f"road friction must be positive, got {self.friction}")


class BrakeActuator(NamedTuple):
    """Dead time followed by a jerk-limited ramp toward the achievable decel.

    ``since_request`` counts time since the first nonzero request; the
    dead time is only ever served once per run.
    """

    delay: float = 0.15
    jerk_limit: float = 60.0
    max_force: float = 15000.0
    current_decel: float = 0.0
    since_request: float | None = None

    @classmethod
    def ideal(cls, max_force: float = math.inf) -> "BrakeActuator":
        return cls(delay=0.0, jerk_limit=math.inf, max_force=max_force)


def effective_decel(request: float, actuator: BrakeActuator, mass: float,
                    road: RoadCondition) -> float:
    """Steady-state deceleration: request capped by brake force and tyre grip."""
    return min(request, actuator.max_force / mass, road.friction * road.g)


def actuator_step(actuator: BrakeActuator, request: float, dt: float,
                  mass: float = 1500.0, road: RoadCondition = RoadCondition()) -> BrakeActuator:
    delay, jerk_limit, max_force, current, since = actuator
    if since is None:
        if request <= 0.0:
            return actuator
        since = 0.0
    else:
        since += dt

    if since >= delay - 1e-12:
        if request > 0.0:
            target = min(request, max_force / mass, road.friction * road.g)
        else:
            target = 0.0
        if target > current:
            current = min(target, current + jerk_limit * dt)
        elif target < current:
            current = max(target, current - jerk_limit * dt)
    return _new_state(BrakeActuator, (delay, jerk_limit, max_force, current, since))


_new_state = tuple.__new__


def step(state: VehicleState, commanded_accel: float, dt: float) -> VehicleState:
    """Semi-implicit Euler step; braking never reverses the vehicle."""
    t, x, y, v0, _ = state
    v = v0 + commanded_accel * dt
    a = commanded_accel
    if v <= 0.0:
        v = 0.0
        if commanded_accel < 0.0 and v0 == 0.0:
            a = 0.0
    return _new_state(VehicleState, (t + dt, x + v * dt, y, v, a))


def stopping_distance(speed: float, decel: float) -> float:
    return speed * speed / (2.0 * decel)
