"""Sensor model: ideal relative kinematics with optional degradations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .dynamics import VehicleState


class SensorMode(str, Enum):
    IDEAL = "Ideal"
    NOISY = "Noisy"


@dataclass(frozen=True)
class SensorConfig:
    max_range: float = 80.0
    fov_half_angle: float = math.radians(45.0)
    range_noise_sigma: float = 0.0
    rate_noise_sigma: float = 0.0
    dropout_prob: float = 0.0
    latency: float = 0.0
    mode: SensorMode = SensorMode.IDEAL

    def __post_init__(self):
        object.__setattr__(self, "mode", SensorMode(self.mode))
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.range_noise_sigma < 0 or self.rate_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")
        if self.mode is SensorMode.IDEAL:
            # Ideal mode ignores whatever degradations were configured.
            object.__setattr__(self, "range_noise_sigma", 0.0)
            object.__setattr__(self, "rate_noise_sigma", 0.0)
            object.__setattr__(self, "dropout_prob", 0.0)
            object.__setattr__(self, "latency", 0.0)


class SensorTrack(NamedTuple):
    gap: float | None = None
    closing_speed: float | None = None
    closing_accel: float | None = None
    lateral_offset: float | None = None
    target_width: float | None = None
    valid: bool = False


INVALID = SensorTrack()
_NOISY = SensorMode.NOISY
_atan2 = math.atan2


def observe(vut: VehicleState, target: VehicleState, config: SensorConfig,
            rng=None, target_width: float = 1.8) -> SensorTrack:
    """Relative kinematics of ``target`` as seen from ``vut``.

    ``rng`` is a ``numpy.random.Generator`` and is only drawn from in
    Noisy mode with nonzero degradations. Latency is not applied here;
    the engine delays whole samples through a buffer.
    """
    t_, vx, vy, vv, va = vut
    t_, tx, ty, tv, ta = target
    gap = tx - vx
    offset = ty - vy
    if gap > config.max_range:
        return INVALID
    if _atan2(abs(offset), gap) > config.fov_half_angle:
        return INVALID

    closing_speed = vv - tv
    if config.mode is _NOISY:
        if config.dropout_prob > 0.0 and rng.random() < config.dropout_prob:
            return INVALID
        if config.range_noise_sigma > 0.0:
            gap = max(0.0, gap + rng.normal(0.0, config.range_noise_sigma))
        if config.rate_noise_sigma > 0.0:
            closing_speed = closing_speed + rng.normal(0.0, config.rate_noise_sigma)
    return SensorTrack(gap, closing_speed, va - ta, offset, target_width, True)
