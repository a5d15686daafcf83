"""Simulation config files (INI).

    [sim]       dt, timeout                         (s)
    [sensor]    mode (Ideal|Noisy), max_range (m), fov_half_angle (rad),
                range_noise_sigma (m), rate_noise_sigma (m/s),
                dropout_prob, latency (s)
    [decision]  ttc_warn, ttc_partial (s), partial_decel, full_decel,
                lateral_accel_limit (m/s^2), latch_full_brake,
                partial_braking, enabled (yes/no), forced_trigger_ttc (s)
    [brake]     delay (s), jerk_limit (m/s^3, 'inf' allowed), max_force (N)

Missing keys keep their defaults.
"""
from __future__ import annotations

import configparser
import dataclasses

from .decision import DecisionConfig
from .dynamics import BrakeActuator
from .engine import SimConfig
from .perception import SensorConfig

_BOOL_FIELDS = {"latch_full_brake", "partial_braking", "enabled"}


class ConfigError(ValueError):
    pass


def _section(cp: configparser.ConfigParser, name: str, allowed) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key in cp[name]:
        if key not in allowed:
            raise ConfigError(f"unknown key [{name}] {key}")
        if key == "mode":
            out[key] = cp[name][key].strip()
        elif key in _BOOL_FIELDS:
            out[key] = cp.getboolean(name, key)
        elif key == "forced_trigger_ttc" and cp[name][key].strip().lower() in ("", "none"):
            out[key] = None
        else:
            try:
                out[key] = float(cp[name][key])
            except ValueError:
                raise ConfigError(f"[{name}] {key}: not a number: {cp[name][key]!r}") from None
    return out


def parse_sim_config(text: str, base: SimConfig | None = None) -> SimConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(cp.sections()) - {"sim", "sensor", "decision", "brake"}
    if unknown:
        raise ConfigError(f"unknown section [{sorted(unknown)[0]}]")
    base = base or SimConfig()
    sim = _section(cp, "sim", {"dt", "timeout"})
    sensor = _section(cp, "sensor", {f.name for f in dataclasses.fields(SensorConfig)})
    decision = _section(cp, "decision", {f.name for f in dataclasses.fields(DecisionConfig)})
    brake = _section(cp, "brake", {"delay", "jerk_limit", "max_force"})
    try:
        return SimConfig(
            dt=sim.get("dt", base.dt),
            timeout=sim.get("timeout", base.timeout),
            sensor=dataclasses.replace(base.sensor, **sensor),
            decision=dataclasses.replace(base.decision, **decision),
            brake=base.brake._replace(**brake),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_sim_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_sim_config(fh.read())
