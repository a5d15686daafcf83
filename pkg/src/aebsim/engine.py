"""Closed-loop fixed-step simulation: sensor -> decision -> brake -> vehicles."""
from __future__ import annotations

import dataclasses
import io
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .decision import DecisionConfig, WarningLevel, compute_ttc, decel_request, decide
from .dynamics import BrakeActuator, RoadCondition, VehicleState, actuator_step, effective_decel, step
from .perception import INVALID, SensorConfig, SensorMode, observe
from .scenario import ScenarioSpec

DEFAULT_SEED = 20140328
GRAZING_SPEED = 1e-3
CLOSING_THRESHOLD = 0.1

CSV_COLUMNS = ("t", "x_vut", "v_vut", "a_vut", "x_tgt", "v_tgt", "a_tgt", "gap", "ttc",
               "warning_level", "decel_request", "decel_achieved")


class SimulationAborted(RuntimeError):
    """The state went non-finite; almost always a configuration pathology."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    timeout: float = 60.0
    sensor: SensorConfig = field(default_factory=SensorConfig)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    brake: BrakeActuator = field(default_factory=BrakeActuator)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def with_decision(self, **changes) -> "SimConfig":
        return self.replace(decision=dataclasses.replace(self.decision, **changes))

    def with_sensor(self, **changes) -> "SimConfig":
        return self.replace(sensor=dataclasses.replace(self.sensor, **changes))

    def with_brake(self, **changes) -> "SimConfig":
        return self.replace(brake=self.brake._replace(**changes))

    def to_dict(self) -> dict:
        def clean(obj):
            d = obj._asdict() if hasattr(obj, "_asdict") else dataclasses.asdict(obj)
            return {k: (v.value if hasattr(v, "value") else v) for k, v in d.items()
                    if k not in ("current_decel", "since_request")}
        return {"dt": self.dt, "timeout": self.timeout, "sensor": clean(self.sensor),
                "decision": clean(self.decision), "brake": clean(self.brake)}


def resolve_configs(spec: ScenarioSpec, config: SimConfig
                    ) -> tuple[SensorConfig, DecisionConfig, BrakeActuator]:
    """Apply the spec's override maps; the decision always sees the spec's VUT width."""
    sensor = dataclasses.replace(config.sensor, **dict(spec.sensor_overrides)) \
        if spec.sensor_overrides else config.sensor
    decision = dataclasses.replace(config.decision, vut_width=spec.vut_width,
                                   **dict(spec.decision_overrides))
    brake = config.brake._replace(current_decel=0.0, since_request=None,
                                  **dict(spec.brake_overrides))
    return sensor, decision, brake


def run_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class Event:
    t: float
    kind: str


@dataclass
class SimTrace:
    """Per-step samples (tuples in CSV_COLUMNS order) and discrete events."""

    samples: list[tuple] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    def column(self, name: str) -> list:
        i = CSV_COLUMNS.index(name)
        return [s[i] for s in self.samples]

    def event_times(self, kind: str) -> list[float]:
        return [e.t for e in self.events if e.kind == kind]


@dataclass(frozen=True)
class RunResult:
    spec_id: str
    collided: bool
    impact_speed: float
    vut_speed_at_impact: float
    min_gap: float
    trigger_ttc: float | None
    duration: float
    seed: int
    termination: str = "Timeout"
    initial_closing_speed: float | None = None
    max_level: int = 0
    contact_time: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def detect_collision(vut: VehicleState, target: VehicleState,
                     widths: tuple[float, float] = (1.8, 1.8)) -> bool:
    gap = target.x - vut.x
    overlap = 0.5 * (widths[0] + widths[1]) - abs(target.y - vut.y)
    return gap <= 0.0 and overlap > 0.0


def run(spec: ScenarioSpec, config: SimConfig = SimConfig(), seed: int = DEFAULT_SEED,
        record: bool = True) -> tuple[RunResult, SimTrace]:
    """Simulate one test case.

    Each step observes (through the latency buffer), grades, requests,
    ramps the actuator, then advances both vehicles. Runs end on contact,
    on VUT standstill short of the target, when the VUT passes the target
    without lateral overlap, or at ``config.timeout``.
    """
    sensor, decision, brake = resolve_configs(spec, config)
    dt = config.dt
    road = RoadCondition(spec.road_friction)
    mass = spec.vut_mass
    widths = (spec.vut_width, spec.target_width)
    rng = run_rng(seed) if sensor.mode is SensorMode.NOISY else None
    target_accel = -effective_decel(spec.target_decel, BrakeActuator.ideal(), mass, road)

    vut = VehicleState(0.0, 0.0, 0.0, spec.vut_speed, 0.0)
    tgt = VehicleState(0.0, spec.initial_gap, spec.lateral_offset, spec.target_speed, 0.0)

    latency_steps = int(round(sensor.latency / dt))
    buffer: deque = deque()
    level = WarningLevel.L0_None
    invalid_for = 0.0
    seen_levels = {0}
    detected = False

    trace = SimTrace()
    samples = trace.samples
    events = trace.events
    min_gap = spec.initial_gap
    trigger_ttc = None
    initial_closing = None
    first_closing = warn_closing = None
    max_steps = int(math.ceil(config.timeout / dt - 1e-9))
    collided = False
    impact_speed = vut_impact = 0.0
    contact_time = None
    termination = "Timeout"
    n = 0

    while True:
        gap = tgt.x - vut.x
        if n == 0 and vut.v - tgt.v > CLOSING_THRESHOLD:
            initial_closing = vut.v - tgt.v

        if first_closing is None and vut.v - tgt.v > CLOSING_THRESHOLD:
            first_closing = vut.v - tgt.v

        track = observe(vut, tgt, sensor, rng, spec.target_width)
        if latency_steps:
            buffer.append(track)
            track = buffer.popleft() if len(buffer) > latency_steps else INVALID
        if track.valid:
            invalid_for = 0.0
            if not detected:
                detected = True
                events.append(Event(vut.t, "FirstDetection"))
        else:
            invalid_for += dt

        ttc = compute_ttc(track)
        level = decide(track, decision, level, invalid_for=invalid_for, vut_speed=vut.v, ttc=ttc)
        if level not in seen_levels:
            seen_levels.add(level)
            events.append(Event(vut.t, f"L{int(level)}"))
            if warn_closing is None:
                warn_closing = vut.v - tgt.v
            if level == 3:
                trigger_ttc = ttc
        request = decel_request(level, decision)
        brake = actuator_step(brake, request, dt, mass, road)

        if record:
            samples.append((vut.t, vut.x, vut.v, vut.a, tgt.x, tgt.v, tgt.a, gap, ttc,
                            level, request, brake.current_decel))

        new_vut = step(vut, -brake.current_decel, dt)
        new_tgt = step(tgt, target_accel, dt)
        new_gap = new_tgt.x - new_vut.x
        n += 1
        if not (math.isfinite(new_gap) and math.isfinite(new_vut.v)):
            raise SimulationAborted(f"{spec.id}: non-finite state at t={new_vut.t:.6f}")

        if new_gap <= 0.0:
            if detect_collision(new_vut, new_tgt, widths):
                frac = gap / (gap - new_gap) if gap > new_gap else 1.0
                closing0 = vut.v - tgt.v
                closing1 = new_vut.v - new_tgt.v
                impact_speed = max(0.0, closing0 + frac * (closing1 - closing0))
                vut_impact = vut.v + frac * (new_vut.v - vut.v)
                contact_time = vut.t + frac * dt
                collided = True
                min_gap = 0.0
                termination = "Collision"
                events.append(Event(contact_time, "Collision"))
                end_time = contact_time
                break
            min_gap = min(min_gap, max(gap, 0.0))
            termination = "Passed"
            events.append(Event(new_vut.t, "Passed"))
            end_time = new_vut.t
            break

        min_gap = min(min_gap, new_gap)
        vut, tgt = new_vut, new_tgt
        if vut.v == 0.0 and spec.vut_speed > 0.0:
            termination = "Standstill"
            events.append(Event(vut.t, "Standstill"))
            end_time = vut.t
            break
        if n >= max_steps:
            events.append(Event(vut.t, "Timeout"))
            end_time = vut.t
            break

    # CCRb starts without relative speed: score against the closure at the
    # first warning, else the first meaningful closure.
    if initial_closing is None:
        if warn_closing is not None and warn_closing > CLOSING_THRESHOLD:
            initial_closing = warn_closing
        else:
            initial_closing = first_closing
    result = RunResult(
        spec_id=spec.id,
        collided=collided,
        impact_speed=impact_speed,
        vut_speed_at_impact=vut_impact,
        min_gap=min_gap,
        trigger_ttc=trigger_ttc,
        duration=end_time,
        seed=seed,
        termination=termination,
        initial_closing_speed=initial_closing,
        max_level=int(max(seen_levels)),
        contact_time=contact_time,
    )
    return result, trace


# --------------------------------------------------------------------------
# CSV trace format


def _f6(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def format_trace_csv(trace: SimTrace) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for s in trace.samples:
        t, xv, vv, av, xt, vt, at, gap, ttc, level, req, ach = s
        lines.append(",".join((
            _f6(t), _f6(xv), _f6(vv), _f6(av), _f6(xt), _f6(vt), _f6(at), _f6(gap),
            "" if ttc is None else _f6(ttc), str(int(level)), _f6(req), _f6(ach),
        )))
    return "\n".join(lines)


def write_trace_csv(trace: SimTrace, sink: IO[str] | str | os.PathLike) -> int:
    """Write the trace; returns the number of bytes written."""
    data = format_trace_csv(trace).encode("ascii")
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    elif isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(data)
    else:
        sink.write(data.decode("ascii"))
    return len(data)


def read_trace_csv(text: str) -> SimTrace:
    """Parse the CSV produced by :func:`write_trace_csv`."""
    rows = text.split("\n")
    if rows[0] != ",".join(CSV_COLUMNS):
        raise ValueError("not a trace file: unexpected header")
    samples = []
    for row in rows[1:]:
        f = row.split(",")
        if len(f) != len(CSV_COLUMNS):
            raise ValueError(f"malformed trace row: {row!r}")
        vals = [float(x) for x in f[:8]]
        ttc = float(f[8]) if f[8] else None
        samples.append((*vals, ttc, int(f[9]), float(f[10]), float(f[11])))
    return SimTrace(samples)


def trace_filename(spec_id: str, seed: int) -> str:
    return f"{spec_id}_{seed}.csv"
